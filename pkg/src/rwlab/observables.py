"""Discrete-operator workbench.

Every operator acts on the interior nodes of a RadialGrid (the two Dirichlet
end nodes are dropped), so that the Hamiltonian ``H = -D2 + V_l`` is exactly
the operator driving the evolution and commutators with it are exact matrix
identities for the semi-discrete system.

Quadratic forms are taken with the Euclidean inner product on node values;
the grid factor ``h`` is common to both sides of every estimate and cancels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .background import Background, ChiAlpha, _smoothstep5, effective_potential_peak, potentials
from .errors import ConfigError, ContractError
from .evolve import RadialGrid, Stepper
from .harmonics import Mode

SYMMETRIC, SKEW, GENERAL = "symmetric", "skew", "general"
TAG_TOL = 1e-10


@dataclass
class DiscreteOperator:
    """Dense matrix on interior grid nodes with a symmetry tag."""

    matrix: np.ndarray
    tag: str = GENERAL
    mode: Mode | None = None
    label: str = ""

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ContractError(f"operator must be square, got {self.matrix.shape}")

    @property
    def n(self):
        return self.matrix.shape[0]

    def symmetry_defect(self):
        """``||A -+ A^T|| / ||A||`` for the tagged symmetry (0 for general)."""
        A = self.matrix
        nrm = np.linalg.norm(A)
        if nrm == 0 or self.tag == GENERAL:
            return 0.0
        other = A.T if self.tag == SYMMETRIC else -A.T
        return float(np.linalg.norm(A - other) / nrm)

    def check(self, tol=TAG_TOL):
        d = self.symmetry_defect()
        if d > tol:
            raise ContractError(f"{self.label or 'operator'} tagged {self.tag} has defect {d:.2e}")
        return self

    def __matmul__(self, other):
        B = other.matrix if isinstance(other, DiscreteOperator) else other
        return self.matrix @ B


# ---------------------------------------------------------------------------
# Grid operators
# ---------------------------------------------------------------------------


def interior_nodes(grid: RadialGrid):
    return grid.nodes[1:-1]


def first_difference(grid):
    """Centred first difference on interior nodes (skew-symmetric)."""
    n = grid.n - 2
    off = np.full(n - 1, 1.0 / (2.0 * grid.h))
    return np.diag(off, 1) - np.diag(off, -1)


def second_difference(grid):
    """Three-point second difference on interior nodes (Dirichlet)."""
    n = grid.n - 2
    h2 = grid.h * grid.h
    return (np.diag(np.full(n - 1, 1.0 / h2), 1) + np.diag(np.full(n - 1, 1.0 / h2), -1)
            - np.diag(np.full(n, 2.0 / h2)))


def build_hamiltonian(mode: Mode, bg: Background, grid: RadialGrid):
    """``H = -D2 + V + lt2 V_L`` on interior nodes."""
    s = potentials(bg, interior_nodes(grid))
    H = -second_difference(grid)
    H[np.diag_indices_from(H)] += s.V + mode.lt2 * s.V_L
    return DiscreteOperator(H, SYMMETRIC, mode, f"H[l={mode.l}]")


# ---------------------------------------------------------------------------
# Multipliers
# ---------------------------------------------------------------------------


def g_weight(x, sigma=2.0, b=1.0):
    """``int_0^{b x} (1 + |s|)^(-sigma) ds``, bounded by ``1/(sigma-1)``."""
    if not sigma > 1:
        raise ConfigError(f"multiplier needs sigma > 1, got {sigma!r}")
    if not b > 0:
        raise ConfigError(f"multiplier needs b > 0, got {b!r}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * (1.0 - (1.0 + b * np.abs(x)) ** (1.0 - sigma)) / (sigma - 1.0)


def phi_a(xi, eps):
    """``(1 + xi^2)^(-(1-eps)/4)``."""
    return (1.0 + np.asarray(xi, dtype=float) ** 2) ** (-(1.0 - eps) / 4.0)


def phi_a_prime(xi, eps):
    xi = np.asarray(xi, dtype=float)
    return -(1.0 - eps) / 2.0 * xi * (1.0 + xi * xi) ** (-(1.0 - eps) / 4.0 - 1.0)


def phi_b(xi, eps):
    """``xi Phi_a'(xi)``."""
    return np.asarray(xi, dtype=float) * phi_a_prime(xi, eps)


def phi_c(xi, eps):
    """``sqrt(Phi_a (Phi_a + 2 xi Phi_a'))``."""
    a = phi_a(xi, eps)
    return np.sqrt(a * (a + 2.0 * phi_b(xi, eps)))


def phi_sharp(xi):
    """Indicator of ``|xi| <= 1``."""
    return (np.abs(np.asarray(xi, dtype=float)) <= 1.0).astype(float)


def psi_interval(xi, lam, delta):
    """Indicator of ``lam^(-delta) <= |xi| <= 1``."""
    a = np.abs(np.asarray(xi, dtype=float))
    return ((a >= lam ** (-delta)) & (a <= 1.0)).astype(float)


def x_down(x, b=1.0):
    return b / (1.0 + b * np.abs(np.asarray(x, dtype=float))) ** 2


def x_down_tilde(x):
    return 1.0 / (1.0 + np.asarray(x, dtype=float) ** 2)


def x_up(x, sigma=2.0, b=1.0):
    """``x sqrt(g(x)/x)``; ``g(x)/x`` is extended by ``b`` at 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(x == 0, b, g_weight(x, sigma, b) / np.where(x == 0, 1.0, x))
    return x * np.sqrt(ratio)


def lightcone_profile(u):
    """Even cutoff: 1 on ``|u| <= 1``, 0 on ``|u| >= 2``, quintic in between."""
    return _smoothstep5(2.0 - np.abs(np.asarray(u, dtype=float)))


def lightcone(r_star, t, const=10.0):
    """``chi_check(const r_* / (1 + t))``."""
    return lightcone_profile(const * np.asarray(r_star, dtype=float) / (1.0 + t))


@dataclass(frozen=True)
class MultiplierSpec:
    """Named scalar function with parameters, callable on arrays."""

    kind: str
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        p = self.params
        k = self.kind
        if k == "g_sigma":
            return g_weight(np.asarray(x) - p.get("center", 0.0), p.get("sigma", 2.0),
                            p.get("b", 1.0))
        if k == "g_modulated":
            return g_weight(p["lam"] ** p["m"] * (np.asarray(x) - p.get("center", 0.0)),
                            p.get("sigma", 2.0), p.get("b", 1.0))
        table = {
            "Phi_a": lambda: phi_a(x, p["eps"]),
            "Phi_b": lambda: phi_b(x, p["eps"]),
            "Phi_c": lambda: phi_c(x, p["eps"]),
            "Phi_sharp": lambda: phi_sharp(x),
            "Psi": lambda: psi_interval(x, p["lam"], p["delta"]),
            "X_down": lambda: x_down(x, p.get("b", 1.0)),
            "X_down_tilde": lambda: x_down_tilde(x),
            "X_up": lambda: x_up(x, p.get("sigma", 2.0), p.get("b", 1.0)),
            "chi_alpha": lambda: p["chi"](x),
            "lightcone": lambda: lightcone(x, p["t"], p.get("const", 10.0)),
        }
        if k not in table:
            raise ConfigError(f"unknown multiplier kind {k!r}")
        return table[k]()


# ---------------------------------------------------------------------------
# Morawetz multiplier
# ---------------------------------------------------------------------------


def gamma_center(mode, bg, centering):
    if centering == "mode":
        return effective_potential_peak(bg, mode.l, lt2=mode.lt2).alpha_star
    if centering == "uniform":
        return effective_potential_peak(bg, None).alpha_star
    raise ConfigError(f"centering must be 'mode' or 'uniform', got {centering!r}")


def skew_multiplier(g_values, grid):
    """``(G D1 + D1 G) / 2`` for a diagonal weight ``G``."""
    D1 = first_difference(grid)
    G = np.asarray(g_values, dtype=float)
    return 0.5 * (G[:, None] * D1 + D1 * G[None, :])


def build_gamma(mode: Mode, bg, grid, sigma=2.0, b=1.0, centering="mode", scale=1.0):
    """Skew Morawetz multiplier ``(g d + d g)/2``.

    ``g = g_weight(scale (r_* - center))`` with ``center`` the peak of
    ``V_l`` (``centering='mode'``) or of ``V_L`` (``'uniform'``).  ``scale``
    realises the angular modulation ``g(L^m r_*)``.
    """
    if not sigma > 1:
        raise ConfigError(f"multiplier needs sigma > 1, got {sigma!r}")
    c = gamma_center(mode, bg, centering)
    g = g_weight(scale * (interior_nodes(grid) - c), sigma, b)
    return DiscreteOperator(skew_multiplier(g, grid), SKEW, mode, f"gamma[l={mode.l}]")


# ---------------------------------------------------------------------------
# Functional calculus
# ---------------------------------------------------------------------------


def functional_calculus(base, fn, even=False):
    """``fn(A)`` by dense eigendecomposition.

    A symmetric base is diagonalised directly.  A skew base ``S`` is
    treated through its Hermitian representative ``-i S``; when ``even`` is
    set, ``fn`` is applied through ``S^T S = (-i S)^2`` in real arithmetic.

    Raises
    ------
    ContractError
        If the base is neither symmetric nor skew.
    """
    A = base.matrix if isinstance(base, DiscreteOperator) else np.asarray(base)
    nrm = np.linalg.norm(A) or 1.0
    if np.linalg.norm(A - A.T) <= 1e-12 * nrm:
        w, U = np.linalg.eigh(0.5 * (A + A.T))
        return DiscreteOperator((U * fn(w)) @ U.T, SYMMETRIC)
    if np.linalg.norm(A + A.T) > 1e-12 * nrm:
        raise ContractError("functional calculus needs a symmetric or skew operator")
    S = 0.5 * (A - A.T)
    if even:
        mu, U = np.linalg.eigh(S.T @ S)
        return DiscreteOperator((U * fn(np.sqrt(np.maximum(mu, 0.0)))) @ U.T, SYMMETRIC)
    w, U = np.linalg.eigh(-1j * S)
    out = (U * fn(w)) @ U.conj().T
    if np.abs(out.imag).max() <= 1e-12 * max(1.0, np.abs(out.real).max()):
        out = out.real
    return DiscreteOperator(out, GENERAL)


@lru_cache(maxsize=8)
def _momentum_eigensystem(r_min, r_max, n):
    """Eigenpairs of ``D1^T D1`` (the square of ``-i D1``) on a grid."""
    D1 = first_difference(RadialGrid(r_min, r_max, n))
    mu, U = np.linalg.eigh(D1.T @ D1)
    return np.sqrt(np.maximum(mu, 0.0)), U


def momentum_function(grid, fn_of_abs_xi):
    """Even function of ``xi = -i D1`` as a real symmetric matrix."""
    k, U = _momentum_eigensystem(grid.r_min, grid.r_max, grid.n)
    return (U * fn_of_abs_xi(k)) @ U.T


# ---------------------------------------------------------------------------
# Phase space observables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseSpaceSetup:
    """Parameters shared by the phase space observables of one run."""

    chi: ChiAlpha
    sigma: float = 2.0
    b: float = 1.0
    center: float = 0.0


def phase_setup(bg, sigma=2.0, b=1.0, chi=None):
    from .background import chi_alpha
    from .errors import ConditionViolation
    if chi is None:
        try:
            chi = chi_alpha(bg)
        except ConditionViolation:
            chi = chi_alpha(bg, terms=("VL",))
    return PhaseSpaceSetup(chi, sigma, b, effective_potential_peak(bg, None).alpha_star)


def build_partial_phase_observable(mode: Mode, n, m, delta, eps, bg, grid, setup=None):
    """``chi Phi_a(xi_n) L^(n-eps) gamma_{L^m} Phi_a(xi_n) chi`` (skew).

    ``xi_n = lambda^(n-1) (-i D1)``; ``gamma_{L^m}`` uses
    ``g(lambda^m (r_* - alpha_inf))``.
    """
    if not (0.0 <= n <= m <= 0.5):
        raise ConfigError(f"need 0 <= n <= m <= 1/2, got n={n}, m={m}")
    if not (delta > 0 and eps > 0):
        raise ConfigError("delta and eps must be positive")
    setup = setup or phase_setup(bg)
    lam = mode.lam
    x = interior_nodes(grid)
    chi = setup.chi(x)
    P = momentum_function(grid, lambda k: phi_a(lam ** (n - 1.0) * k, eps))
    gm = g_weight(lam ** m * (x - setup.center), setup.sigma, setup.b)
    gam = skew_multiplier(gm, grid)
    left = chi[:, None] * P
    A = lam ** (n - eps) * (left @ gam @ left.T)
    A = 0.5 * (A - A.T)
    return DiscreteOperator(A, SKEW, mode, f"Gamma[{n},{m}][l={mode.l}]")


def phase_observable_indices(delta):
    """``[(n, m), ...]`` summed in the full phase space observable."""
    k = 1.0 / (2.0 * delta)
    if not (delta > 0 and abs(k - round(k)) < 1e-9 and round(k) >= 2):
        raise ConfigError(f"1/(2 delta) must be an integer >= 2, got delta={delta!r}")
    k = int(round(k))
    return [(0.5 - 2.0 * delta, 0.5)] + [(j * delta, j * delta) for j in range(0, k - 1)]


def build_full_phase_observable(mode, delta, eps, bg, grid, setup=None):
    """``Gamma_{1/2-2delta, 1/2} + sum_{j=0}^{1/(2delta)-2} Gamma_{j delta, j delta}``."""
    setup = setup or phase_setup(bg)
    total = None
    for n, m in phase_observable_indices(delta):
        A = build_partial_phase_observable(mode, n, m, delta, eps, bg, grid, setup).matrix
        total = A if total is None else total + A
    return DiscreteOperator(total, SKEW, mode, f"Gamma[l={mode.l}]")


def build_temporal_observable(Gamma, gamma_uniform, C_Gamma, grid, t, const=10.0):
    """``(1+t) Gamma + C (1+t) chi_check gamma chi_check`` at time ``t``."""
    G = Gamma.matrix if isinstance(Gamma, DiscreteOperator) else Gamma
    g = gamma_uniform.matrix if isinstance(gamma_uniform, DiscreteOperator) else gamma_uniform
    c = lightcone(interior_nodes(grid), t, const)
    A = (1.0 + t) * G + C_Gamma * (1.0 + t) * (c[:, None] * g * c[None, :])
    return DiscreteOperator(A, SKEW, None, "Gamma_bar")


def commutator(A, B):
    """``AB - BA``, tagged symmetric when one factor is symmetric and the
    other skew."""
    a = A.matrix if isinstance(A, DiscreteOperator) else np.asarray(A)
    b = B.matrix if isinstance(B, DiscreteOperator) else np.asarray(B)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch {a.shape} vs {b.shape}")
    tags = {getattr(A, "tag", GENERAL), getattr(B, "tag", GENERAL)}
    tag = SYMMETRIC if tags == {SYMMETRIC, SKEW} else GENERAL
    if tags == {SKEW} or tags == {SYMMETRIC}:
        tag = SKEW
    return DiscreteOperator(a @ b - b @ a, tag)


# ---------------------------------------------------------------------------
# Positivity certification
# ---------------------------------------------------------------------------


def resolved_subspace(grid, margin=0.1, resolved_fraction=0.5):
    """Orthonormal basis of resolved interior-supported grid functions.

    Functions vanish within ``margin`` of the domain length at each end and
    are spanned by the discrete sines of the remaining window with
    ``k h <= resolved_fraction * pi``.  Near ``k h = pi`` the discrete wave
    operator has vanishing group velocity, so no propagation estimate can
    hold there.
    """
    x = interior_nodes(grid)
    length = grid.r_max - grid.r_min
    idx = np.nonzero((x >= grid.r_min + margin * length) & (x <= grid.r_max - margin * length))[0]
    m = idx.size
    K = max(1, int(resolved_fraction * m))
    j = np.arange(1, K + 1)
    i = np.arange(1, m + 1)
    Q = np.zeros((x.size, K))
    Q[idx] = math.sqrt(2.0 / (m + 1)) * np.sin(np.outer(i, j) * math.pi / (m + 1))
    return Q


@dataclass
class Certificate:
    """Result of ``certify_positivity``.

    ``c_best`` is the certified constant, ``margin`` the gap
    ``c_max - c_best`` in weight-normalised units (``>= 0`` when certified),
    ``c_max`` the exact supremum and ``min_eig`` the smallest eigenvalue of
    the restricted ``C - c_best W``.
    """

    c_best: float
    margin: float
    c_max: float
    min_eig: float
    dim: int

    def to_dict(self):
        return {k: (v if math.isfinite(v) else ("inf" if v > 0 else "-inf"))
                for k, v in self.__dict__.items()}


def certify_positivity(C, W, Q=None, backoff=1e-6, tol=1e-10):
    """Largest ``c >= 0`` with ``Q^T (C - c W) Q`` positive semidefinite.

    Uses the generalised eigenvalue ``min eig(C, W)`` when the restricted
    weight is positive definite and bisection on ``min eig(C - c W)``
    otherwise.  A zero weight returns ``c_best = inf`` and the smallest
    eigenvalue of ``C`` as margin.  When no ``c >= 0`` works, ``c_best = 0``
    and the margin is negative.

    Raises
    ------
    ContractError
        If the restricted weight has a clearly negative eigenvalue.
    """
    c = C.matrix if isinstance(C, DiscreteOperator) else np.asarray(C, dtype=float)
    w = W.matrix if isinstance(W, DiscreteOperator) else np.asarray(W, dtype=float)
    if Q is not None:
        c = Q.T @ c @ Q
        w = Q.T @ w @ Q
    c = 0.5 * (c + c.T)
    w = 0.5 * (w + w.T)
    dim = c.shape[0]
    w_eig = linalg.eigvalsh(w)
    wn = max(np.abs(w_eig).max(), 1e-300)
    if np.abs(w_eig).max() == 0.0:
        e = float(linalg.eigvalsh(c, subset_by_index=[0, 0])[0])
        return Certificate(math.inf, e, math.inf, e, dim)
    if w_eig[0] < -tol * wn:
        raise ContractError(f"weight operator is not PSD (min eigenvalue {w_eig[0]:.3e})")

    def lam_min(cc):
        return float(linalg.eigvalsh(c - cc * w, subset_by_index=[0, 0])[0])

    if w_eig[0] > tol * wn:
        c_max = float(linalg.eigh(c, w, eigvals_only=True, subset_by_index=[0, 0])[0])
    else:
        if lam_min(0.0) < 0:
            c_max = -math.inf
        else:
            lo, hi = 0.0, 1.0
            while lam_min(hi) >= 0 and hi < 1e300:
                lo, hi = hi, 2.0 * hi
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if lam_min(mid) >= 0 else (lo, mid)
                if hi - lo <= 1e-12 * hi:
                    break
            c_max = lo
    if c_max < 0:
        return Certificate(0.0, c_max, c_max, lam_min(0.0), dim)
    c_best = c_max * (1.0 - backoff)
    return Certificate(c_best, c_max - c_best, c_max, lam_min(c_best), dim)


def morawetz_weight(grid, sigma=2.0):
    """``(1+r_*^2)^(-sigma/2-1) + D1^T (1+r_*^2)^(-sigma/2) D1``."""
    x = interior_nodes(grid)
    D1 = first_difference(grid)
    s = 1.0 + x * x
    W = (D1.T * s ** (-sigma / 2.0)) @ D1
    W[np.diag_indices_from(W)] += s ** (-sigma / 2.0 - 1.0)
    return DiscreteOperator(W, SYMMETRIC, None, "W_morawetz")


def angular_weight(mode, grid, chi, delta):
    """``lambda^(2(1-3delta/2)) chi_alpha^2 + (1+r_*^2)^(-2)``."""
    x = interior_nodes(grid)
    w = mode.lam ** (2.0 * (1.0 - 1.5 * delta)) * chi(x) ** 2 + (1.0 + x * x) ** -2
    return DiscreteOperator(np.diag(w), SYMMETRIC, mode, "W_angular")


def smallest_psd_coefficient(C1, C2, Q=None, hi=1.0, rel_tol=1e-6):
    """Smallest ``c >= 0`` with ``C1 + c C2`` PSD on ``Q`` (bisection)."""
    a = C1.matrix if isinstance(C1, DiscreteOperator) else C1
    b = C2.matrix if isinstance(C2, DiscreteOperator) else C2
    if Q is not None:
        a, b = Q.T @ a @ Q, Q.T @ b @ Q

    def ok(c):
        m = a + c * b
        return linalg.eigvalsh(0.5 * (m + m.T), subset_by_index=[0, 0])[0] >= 0

    if ok(0.0):
        return 0.0
    while not ok(hi):
        hi *= 2.0
        if hi > 1e12:
            raise ContractError("no finite coefficient makes the form PSD")
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


# ---------------------------------------------------------------------------
# Heisenberg relation
# ---------------------------------------------------------------------------


def skew_expectation(A, phi, phidot):
    """``<phi, A phidot> - <phidot, A phi>``."""
    return float(phi @ (A @ phidot) - phidot @ (A @ phi))


def heisenberg_rhs(H, A, A_dot, phi, phidot, force=None):
    """``<phi,[H,A]phi> + <phi,A' phidot> - <phidot,A' phi>`` plus the
    nonlinear terms ``<force, A phi> - <phi, A force>`` for
    ``phi_tt = -H phi - force``."""
    Hphi = H @ phi
    val = float(Hphi @ (A @ phi) - phi @ (A @ Hphi))
    if A_dot is not None:
        val += skew_expectation(A_dot, phi, phidot)
    if force is not None:
        val += float(force @ (A @ phi) - phi @ (A @ force))
    return val


@dataclass
class HeisenbergResult:
    residual: float
    t: np.ndarray
    theta: np.ndarray
    fd: np.ndarray
    rhs: np.ndarray
    scale: float


def heisenberg_identity_check(stepper: Stepper, state, dt, n_steps, A_builder,
                              mode_index=0, time_dependent=False, sample_every=1):
    """Compare ``d theta/dt`` (centred difference of the leapfrog solution)
    with the right side of the Heisenberg relation.

    Parameters
    ----------
    stepper : Stepper
        Linear or radial semilinear integrator.
    state : FieldState
        Initial state.
    A_builder : callable
        ``t -> matrix`` on interior nodes (constant for static observables).
    time_dependent : bool
        Differentiate ``A`` in ``t`` by a centred difference with step ``dt``.

    Returns
    -------
    HeisenbergResult
        ``residual`` is ``max |fd - rhs| / max(max|theta|, E)``.
    """
    grid = stepper.grid
    mode = stepper.modes[mode_index]
    H = build_hamiltonian(mode, stepper.bg, grid).matrix
    phi = np.array(state.phi)
    phidot = np.array(state.phidot)
    acc = stepper.acceleration(phi)
    A_static = None if time_dependent else np.asarray(A_builder(state.t))
    ts, thetas, rhss = [], [], []
    t = state.t
    for k in range(n_steps + 1):
        p = phi[mode_index, 1:-1]
        v = phidot[mode_index, 1:-1]
        A = A_static if A_static is not None else np.asarray(A_builder(t))
        thetas.append(skew_expectation(A, p, v))
        if k % sample_every == 0:
            A_dot = None
            if time_dependent:
                A_dot = (np.asarray(A_builder(t + dt)) - np.asarray(A_builder(t - dt))) / (2 * dt)
            force = None
            if stepper.semilinear:
                force = -(acc[mode_index, 1:-1] + H @ p)
            rhss.append(heisenberg_rhs(H, A, A_dot, p, v, force))
            ts.append(t)
        else:
            rhss.append(np.nan)
            ts.append(t)
        if k < n_steps:
            phi, phidot, acc = stepper.step_arrays(phi, phidot, dt, acc)
            t = state.t + (k + 1) * dt
    theta = np.array(thetas)
    rhs = np.array(rhss)
    fd = np.full_like(theta, np.nan)
    fd[1:-1] = (theta[2:] - theta[:-2]) / (2.0 * dt)
    keep = np.isfinite(fd) & np.isfinite(rhs)
    p0 = np.array(state.phi)[mode_index, 1:-1]
    v0 = np.array(state.phidot)[mode_index, 1:-1]
    E = 0.5 * float(v0 @ v0 + p0 @ (H @ p0))
    scale = max(float(np.abs(theta).max()), E)
    res = float(np.abs(fd[keep] - rhs[keep]).max() / scale) if keep.any() else 0.0
    return HeisenbergResult(res, np.array(ts), theta, fd, rhs, scale)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def energy_bound_ratio(A, H, psi):
    """``||A psi||^2 / E[psi, 0]`` with ``E = <psi, H psi>/2``."""
    Ap = A @ psi
    E = 0.5 * float(psi @ (H @ psi))
    return float(Ap @ Ap) / E if E > 0 else 0.0


def energy_bound_supremum(A, H):
    """Exact ``sup ||A psi||^2 / E[psi, 0]`` (largest generalised eigenvalue)."""
    a = A.matrix if isinstance(A, DiscreteOperator) else A
    h = H.matrix if isinstance(H, DiscreteOperator) else H
    n = a.shape[0]
    return float(linalg.eigh(a.T @ a, 0.5 * h, eigvals_only=True,
                             subset_by_index=[n - 1, n - 1])[0])


def local_decay_report(t, morawetz_cum, E, fraction=0.1, threshold=0.01):
    """Ratio ``morawetz_cum(t_end)/E`` and saturation status."""
    from .functionals import tail_fraction
    total = float(np.asarray(morawetz_cum)[-1])
    ratio = total / E if E > 0 else 0.0
    tail = tail_fraction(t, morawetz_cum, fraction)
    return {"ratio": ratio, "tail_fraction": tail, "saturated": bool(tail < threshold),
            "morawetz_cum": total, "E": float(E)}
