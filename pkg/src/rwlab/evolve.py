"""Time-domain evolution of the per-harmonic radial wave equations.

Each harmonic obeys

    phi_l,tt = phi_l'' - (V + lt2 V_L) phi_l - [f F'(|phi|^2) phi]_l

on a uniform ``r_*`` grid with homogeneous Dirichlet ends.  Space uses the
three-point Laplacian, time uses kick-drift-kick leapfrog.  Solver time
``tau`` starts at 0; time-weighted functionals use ``t = 1 + tau``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .background import Background, potentials
from .errors import ConfigError, NumericalBlowUp
from .harmonics import FOUR_PI, ModeSet

MAX_CFL = 0.9
MIN_NODES = 16


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid ``r_min + i h`` for ``i = 0..n-1``."""

    r_min: float
    r_max: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < MIN_NODES:
            raise ConfigError(f"grid needs an integer n >= {MIN_NODES}, got {self.n!r}")
        if not (math.isfinite(self.r_min) and math.isfinite(self.r_max)
                and self.r_max > self.r_min):
            raise ConfigError("grid needs finite r_min < r_max")

    @classmethod
    def from_spacing(cls, r_min, r_max, h):
        """Grid with spacing as close to ``h`` as the extent allows."""
        n = int(round((r_max - r_min) / h)) + 1
        return cls(float(r_min), float(r_max), n)

    @property
    def h(self):
        return (self.r_max - self.r_min) / (self.n - 1)

    @property
    def nodes(self):
        return self.r_min + self.h * np.arange(self.n)

    def describe(self):
        return {"r_min": self.r_min, "r_max": self.r_max, "n": int(self.n), "h": self.h}


@dataclass(frozen=True)
class FieldState:
    """Snapshot of all harmonics at time ``t`` (runs start at ``t = 1``).

    ``phi`` and ``phidot`` have shape ``(n_modes, n)``.  Arrays are marked
    read-only so observers cannot mutate the running solution.
    """

    t: float
    phi: np.ndarray
    phidot: np.ndarray

    def __post_init__(self):
        if self.phi.shape != self.phidot.shape or self.phi.ndim != 2:
            raise ConfigError("phi and phidot must be matching (n_modes, n) arrays")

    @classmethod
    def frozen(cls, t, phi, phidot):
        phi = np.array(phi, dtype=float)
        phidot = np.array(phidot, dtype=float)
        phi.flags.writeable = False
        phidot.flags.writeable = False
        return cls(float(t), phi, phidot)

    @property
    def tau(self):
        return self.t - 1.0

    def scaled(self, c):
        return FieldState.frozen(self.t, c * self.phi, c * self.phidot)


@dataclass(frozen=True)
class SolverConfig:
    """Time stepping parameters.

    ``dt`` may be negative for backward stepping.  ``semilinear`` enables the
    radial ``f F'(|phi|^2) phi`` term (needs ``bg.p`` and ``l_max = 0``).
    """

    dt: float
    t_end: float
    semilinear: bool = False

    def cfl(self, grid):
        return abs(self.dt) / grid.h

    def validate(self, grid, modes=None, bg=None):
        if not (self.dt != 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be finite and non-zero")
        if self.cfl(grid) > MAX_CFL + 1e-12:
            raise ConfigError(f"cfl = |dt|/h = {self.cfl(grid):.4g} exceeds {MAX_CFL}")
        if not self.t_end >= 0:
            raise ConfigError("t_end must be non-negative")
        if self.semilinear:
            if modes is not None and len(modes) != 1:
                raise ConfigError("semilinear term requires l_max = 0 (radial fields only)")
            if bg is not None and bg.p is None:
                raise ConfigError("semilinear term requires a nonlinearity exponent p")

    def n_steps(self):
        if self.t_end == 0:
            return 0
        k = int(round(self.t_end / abs(self.dt)))
        if abs(k * abs(self.dt) - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ConfigError(f"t_end = {self.t_end} is not a multiple of dt = {self.dt}")
        return k


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


def bump_profile(x):
    """``e * exp(-1/(1-x^2))`` on ``|x| < 1`` (peak 1) and its derivative."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    s = np.where(inside, 1.0 - x * x, 1.0)
    val = np.where(inside, np.exp(1.0 - 1.0 / s), 0.0)
    dval = np.where(inside, val * (-2.0 * x / (s * s)), 0.0)
    return val, dval


def initial_data_bump(grid, modes, center, width, amplitude, mode_weights=None,
                      outgoing=False):
    """Compactly supported smooth data on ``[center - 4 width, center + 4 width]``.

    Returns ``(phi0, phi1)`` of shape ``(n_modes, n)``.  ``phi1`` is zero
    (time-symmetric) or ``-phi0'`` (outgoing) evaluated analytically.

    Raises
    ------
    ConfigError
        If the support is not strictly inside the grid.
    """
    if not width > 0:
        raise ConfigError("bump width must be positive")
    lo, hi = center - 4.0 * width, center + 4.0 * width
    if not (grid.r_min < lo and hi < grid.r_max):
        raise ConfigError(
            f"bump support [{lo}, {hi}] not strictly inside grid [{grid.r_min}, {grid.r_max}]")
    w = np.ones(len(modes)) if mode_weights is None else np.asarray(mode_weights, dtype=float)
    if w.shape != (len(modes),):
        raise ConfigError(f"need {len(modes)} mode weights, got {w.size}")
    x = (grid.nodes - center) / (4.0 * width)
    val, dval = bump_profile(x)
    phi0 = amplitude * np.outer(w, val)
    phi1 = -amplitude * np.outer(w, dval) / (4.0 * width) if outgoing else np.zeros_like(phi0)
    phi0[:, [0, -1]] = 0.0
    phi1[:, [0, -1]] = 0.0
    return phi0, phi1


def initial_state(phi0, phi1):
    """State at the initial time ``t = 1``."""
    return FieldState.frozen(1.0, phi0, phi1)


# ---------------------------------------------------------------------------
# Spatial operator
# ---------------------------------------------------------------------------


def laplacian(phi, h):
    """Three-point second difference; zero on the two boundary nodes."""
    out = np.zeros_like(phi)
    out[..., 1:-1] = (phi[..., :-2] - 2.0 * phi[..., 1:-1] + phi[..., 2:]) / (h * h)
    return out


def mode_potentials(bg, modes, grid):
    """``V + lt2 V_L`` per mode, shape ``(n_modes, n)``."""
    s = potentials(bg, grid.nodes)
    return s.V[None, :] + modes.lt2[:, None] * s.V_L[None, :]


def radial_nonlinearity(phi0, f, p):
    """Projection of ``f F'(|phi|^2) phi`` onto ``Y_00`` for a radial field.

    With ``F(s) = s^((p+1)/2) / (p+1)`` the pointwise force is
    ``(f/2) |phi|^(p-1) phi``, the variation of the energy term ``f F / 2``.
    The pointwise value of a radial field is ``phi0 / sqrt(4 pi)``.
    """
    return 0.5 * f * np.abs(phi0) ** (p - 1.0) * phi0 * FOUR_PI ** (-(p - 1.0) / 2.0)


class Stepper:
    """Leapfrog integrator with precomputed potentials.

    Parameters
    ----------
    bg : Background
    modes : ModeSet
    grid : RadialGrid
    semilinear : bool
        Include the radial nonlinearity (requires one mode and ``bg.p``).
    """

    def __init__(self, bg: Background, modes: ModeSet, grid: RadialGrid, semilinear=False):
        if semilinear:
            SolverConfig(grid.h * 0.5, 0.0, True).validate(grid, modes, bg)
        self.bg, self.modes, self.grid = bg, modes, grid
        self.semilinear = bool(semilinear)
        self.Vl = mode_potentials(bg, modes, grid)
        self.f = potentials(bg, grid.nodes).f if semilinear else None
        self.h = grid.h

    def acceleration(self, phi):
        """``D2 phi - V_l phi - NL``; zero on boundary nodes."""
        phi = np.asarray(phi, dtype=float)
        a = laplacian(phi, self.h) - self.Vl * phi
        if self.semilinear:
            a[0] -= radial_nonlinearity(phi[0], self.f, self.bg.p)
        a[:, [0, -1]] = 0.0
        return a

    def step_arrays(self, phi, phidot, dt, acc=None):
        """One kick-drift-kick step on raw arrays; returns new (phi, phidot, acc)."""
        a = self.acceleration(phi) if acc is None else acc
        v = phidot + 0.5 * dt * a
        q = phi + dt * v
        q[:, [0, -1]] = 0.0
        a = self.acceleration(q)
        v = v + 0.5 * dt * a
        v[:, [0, -1]] = 0.0
        return q, v, a

    def step(self, state: FieldState, dt):
        q, v, _ = self.step_arrays(state.phi, state.phidot, dt)
        t = state.t + dt
        if not (np.isfinite(q).all() and np.isfinite(v).all()):
            raise NumericalBlowUp(f"non-finite field at t = {t!r}", t)
        return FieldState.frozen(t, q, v)


def rhs(state, bg, modes, grid, semilinear=False):
    """Per-mode acceleration of ``state``."""
    return Stepper(bg, modes, grid, semilinear).acceleration(state.phi)


def step(state, config, bg, modes, grid):
    """Advance ``state`` by ``config.dt``."""
    config.validate(grid, modes, bg)
    return Stepper(bg, modes, grid, config.semilinear).step(state, config.dt)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


@dataclass
class Observer:
    """Callable invoked every ``cadence`` steps (and at step 0).

    ``fn(state, stepper)`` may return a value; returned values are collected
    in order.
    """

    fn: Callable
    cadence: int = 1
    name: str = "observer"


@dataclass
class RunResult:
    final: FieldState
    outputs: dict
    n_steps: int


def evolve_run(config: SolverConfig, bg, modes, grid, data, observers: Sequence = ()):
    """Evolve ``data`` from ``t = 1`` to ``t = 1 + t_end``.

    Parameters
    ----------
    data : FieldState or tuple of arrays
        Initial state (``(phi0, phi1)`` is placed at ``t = 1``).
    observers : sequence of Observer
        Each is called at step 0 and every ``cadence`` steps thereafter.

    Returns
    -------
    RunResult
        Final state plus ``{observer.name: [outputs...]}``.
    """
    config.validate(grid, modes, bg)
    n_steps = config.n_steps()
    for ob in observers:
        if ob.cadence < 1 or (n_steps and n_steps % ob.cadence):
            raise ConfigError(
                f"observer '{ob.name}' cadence {ob.cadence} does not divide {n_steps} steps")
    state = data if isinstance(data, FieldState) else initial_state(*data)
    if state.phi.shape != (len(modes), grid.n):
        raise ConfigError(f"data shape {state.phi.shape} != {(len(modes), grid.n)}")
    stepper = Stepper(bg, modes, grid, config.semilinear)
    t0 = state.t
    outputs = {ob.name: [] for ob in observers}

    def notify(st):
        for ob in observers:
            if k % ob.cadence == 0:
                try:
                    outputs[ob.name].append(ob.fn(st, stepper))
                except Exception as exc:
                    raise RuntimeError(f"observer '{ob.name}' failed at t = {st.t!r}") from exc

    k = 0
    notify(state)
    phi, phidot = np.array(state.phi), np.array(state.phidot)
    acc = stepper.acceleration(phi)
    for k in range(1, n_steps + 1):
        phi, phidot, acc = stepper.step_arrays(phi, phidot, config.dt, acc)
        t = t0 + k * config.dt
        if not np.isfinite(phi).all() or not np.isfinite(phidot).all():
            raise NumericalBlowUp(f"non-finite field at t = {t!r}", t)
        if any(k % ob.cadence == 0 for ob in observers):
            state = FieldState.frozen(t, phi, phidot)
            notify(state)
    final = FieldState.frozen(t0 + n_steps * config.dt, phi, phidot)
    return RunResult(final, outputs, n_steps)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def write_checkpoint(path, state: FieldState, grid: RadialGrid, modes: ModeSet):
    """JSON header line, then ``phi`` and ``phidot`` as little-endian float64."""
    header = {"format": "rwlab-checkpoint-1", "t": state.t, "grid": grid.describe(),
              "modes": modes.indices, "lt2": modes.lt2.tolist(),
              "shape": list(state.phi.shape)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(state.phi, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.phidot, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Inverse of ``write_checkpoint``; returns ``(state, header)``."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        shape = tuple(header["shape"])
        count = shape[0] * shape[1]
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 2 * count:
        raise ConfigError(f"checkpoint {path} truncated: {raw.size} of {2 * count} values")
    phi = raw[:count].reshape(shape)
    phidot = raw[count:].reshape(shape)
    return FieldState.frozen(header["t"], phi, phidot), header


def with_time(state, t):
    return replace(state, t=float(t))
