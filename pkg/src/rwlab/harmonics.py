"""Spherical-harmonic bookkeeping.

Fields are stored per harmonic: ``phi_l(r_*)`` for ``l = 0..l_max``.  The
operator ``L = (1 - Lap)^(1/2)`` acts on harmonic ``l`` as multiplication by
``lambda_l = sqrt(1 + l(l+1))``.  Pointwise values (needed only for cubic and
higher functionals) are produced by axisymmetric synthesis on Gauss-Legendre
nodes in ``cos(theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class Mode:
    """One harmonic: index ``l``, ``lt2 = l(l+1)`` and ``lam = sqrt(1 + lt2)``."""

    l: int
    lt2: float
    lam: float

    @classmethod
    def from_index(cls, l):
        l = int(l)
        if l < 0:
            raise ConfigError(f"harmonic index must be non-negative, got {l}")
        lt2 = float(l * (l + 1))
        return cls(l, lt2, math.sqrt(1.0 + lt2))


@dataclass(frozen=True)
class ModeSet:
    """Ordered harmonics with strictly increasing eigenvalue ``lt2``.

    ``sphere`` is False when a custom spectrum was supplied; such sets cannot
    be synthesised pointwise.
    """

    modes: tuple
    sphere: bool = True

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, k):
        return self.modes[k]

    @property
    def l_max(self):
        return self.modes[-1].l

    @property
    def lt2(self):
        return np.array([m.lt2 for m in self.modes])

    @property
    def lam(self):
        return np.array([m.lam for m in self.modes])

    @property
    def indices(self):
        return [m.l for m in self.modes]


def make_modeset(l_max=None, spectrum=None):
    """Build a ModeSet.

    Parameters
    ----------
    l_max : int, optional
        Highest sphere harmonic; ``lt2 = l(l+1)`` for ``l = 0..l_max``.
    spectrum : sequence of float, optional
        Custom eigenvalues of ``-Lap_W`` (non-negative, strictly increasing).
        Mode ``k`` then carries ``lt2 = spectrum[k]``.
    """
    if spectrum is not None:
        ev = np.asarray(spectrum, dtype=float)
        if ev.ndim != 1 or ev.size == 0:
            raise ConfigError("custom spectrum must be a non-empty list")
        if np.any(ev < 0) or not np.all(np.isfinite(ev)):
            raise ConfigError("custom spectrum must be finite and non-negative")
        if np.any(np.diff(ev) <= 0):
            raise ConfigError("custom spectrum must be strictly increasing")
        modes = tuple(Mode(k, float(e), math.sqrt(1.0 + e)) for k, e in enumerate(ev))
        return ModeSet(modes, sphere=False)
    if l_max is None or int(l_max) < 0:
        raise ConfigError(f"l_max must be a non-negative integer, got {l_max!r}")
    return ModeSet(tuple(Mode.from_index(l) for l in range(int(l_max) + 1)))


def L_power(modes, s):
    """Per-mode multipliers ``lambda_l ** s``."""
    s = float(s)
    if not math.isfinite(s):
        raise ConfigError("L power exponent must be finite")
    return modes.lam ** s


# ---------------------------------------------------------------------------
# Axisymmetric synthesis
# ---------------------------------------------------------------------------


def gauss_nodes(l_max, count=None):
    """Gauss-Legendre nodes and weights in ``cos(theta)``.

    The default count ``3 l_max + 2`` is exact for polynomials of degree
    ``6 l_max + 3`` in ``mu``, so even sixth powers of a synthesised field
    integrate without quadrature error.
    """
    n = 3 * int(l_max) + 2 if count is None else int(count)
    if n < 2 * int(l_max) + 1:
        raise ContractError(
            f"need at least 2*l_max+1 = {2 * int(l_max) + 1} angular nodes, got {n}")
    return np.polynomial.legendre.leggauss(n)


def zonal_harmonics(l_max, mu):
    """Orthonormal ``Y_l0`` at ``cos(theta) = mu``, shape ``(l_max+1, len(mu))``.

    Uses the three-term Legendre recurrence and the factor
    ``sqrt((2l+1)/(4 pi))``.
    """
    mu = np.asarray(mu, dtype=float)
    P = np.empty((int(l_max) + 1, mu.size))
    P[0] = 1.0
    if l_max >= 1:
        P[1] = mu
    for l in range(1, int(l_max)):
        P[l + 1] = ((2 * l + 1) * mu * P[l] - l * P[l - 1]) / (l + 1)
    norm = np.sqrt((2.0 * np.arange(l_max + 1) + 1.0) / FOUR_PI)
    return P * norm[:, None]


def zonal_harmonics_dtheta(l_max, mu):
    """``dY_l0/dtheta`` at ``cos(theta) = mu``.

    ``dP_l/dtheta = -sin(theta) P_l'(mu)`` with
    ``(1-mu^2) P_l' = l (P_{l-1} - mu P_l)``.
    """
    mu = np.asarray(mu, dtype=float)
    Y = zonal_harmonics(l_max, mu)
    norm = np.sqrt((2.0 * np.arange(l_max + 1) + 1.0) / FOUR_PI)
    P = Y / norm[:, None]
    sin = np.sqrt(1.0 - mu * mu)
    dP = np.zeros_like(P)
    for l in range(1, int(l_max) + 1):
        dP[l] = -l * (P[l - 1] - mu * P[l]) / sin
    return dP * norm[:, None]


def _check_coeffs(coeffs, modes):
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 2 or c.shape[0] != len(modes):
        raise ContractError(f"expected {len(modes)} mode arrays, got shape {c.shape}")
    if not modes.sphere:
        raise ContractError("pointwise synthesis needs the sphere spectrum")
    return c


def synthesize_axisymmetric(coeffs, modes, theta_nodes=None):
    """Pointwise field ``phi(r_*, mu) = sum_l phi_l(r_*) Y_l0(mu)``.

    Parameters
    ----------
    coeffs : array_like, shape (n_modes, n_r)
    modes : ModeSet
        Sphere harmonics ``l = 0..l_max``.
    theta_nodes : array_like, optional
        Nodes in ``cos(theta)``; defaults to Gauss-Legendre nodes.

    Returns
    -------
    field : ndarray, shape (n_r, n_mu)
    """
    c = _check_coeffs(coeffs, modes)
    if theta_nodes is None:
        theta_nodes, _ = gauss_nodes(modes.l_max)
    theta_nodes = np.asarray(theta_nodes, dtype=float)
    if theta_nodes.size < 2 * modes.l_max + 1:
        raise ContractError(
            f"need at least 2*l_max+1 = {2 * modes.l_max + 1} angular nodes")
    Y = zonal_harmonics(modes.l_max, theta_nodes)
    return c.T @ Y


def sphere_integral(values, weights):
    """``int_{S^2} values dOmega`` for axisymmetric samples on Gauss nodes.

    ``values`` has the angular axis last.
    """
    return 2.0 * math.pi * (np.asarray(values) @ np.asarray(weights))


def angular_gradient_squared(coeffs, modes, theta_nodes):
    """``|grad_{S^2} phi|^2`` at the given nodes (axisymmetric)."""
    c = _check_coeffs(coeffs, modes)
    dY = zonal_harmonics_dtheta(modes.l_max, theta_nodes)
    d = c.T @ dY
    return d * d
