"""Scalar functionals of a field state.

Quadratic functionals reduce to sums over harmonics of radial integrals:
the angular gradient contributes ``lt2 * phi_l^2`` and the sphere measure
is absorbed by orthonormality.  Functionals of cubic or higher order are
evaluated pointwise after axisymmetric synthesis.  The volume element is
``d^3mu = dr_* dOmega`` throughout.

Radial integrals use the trapezoid rule on the uniform grid.  The energy
gradient term uses forward differences, so that it equals
``<phi, -D2 phi>`` for Dirichlet data and is conserved by the leapfrog
scheme; pointwise densities (conformal charge, momentum) use centred
differences.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .background import Background, ChiAlpha, chi_alpha, potentials
from .errors import ConditionViolation, ConfigError
from .evolve import FieldState, RadialGrid, Stepper
from .harmonics import FOUR_PI, ModeSet, gauss_nodes, sphere_integral, synthesize_axisymmetric


def trapezoid(y, h):
    """Trapezoid rule along the last axis of uniformly spaced samples."""
    y = np.asarray(y, dtype=float)
    return h * (y.sum(axis=-1) - 0.5 * (y[..., 0] + y[..., -1]))


def centered_derivative(phi, h):
    """Centred first difference; one-sided on the two end nodes."""
    phi = np.asarray(phi, dtype=float)
    out = np.empty_like(phi)
    out[..., 1:-1] = (phi[..., 2:] - phi[..., :-2]) / (2.0 * h)
    out[..., 0] = (phi[..., 1] - phi[..., 0]) / h
    out[..., -1] = (phi[..., -1] - phi[..., -2]) / h
    return out


def forward_gradient_energy(phi, h):
    """``sum_i h ((phi_{i+1} - phi_i)/h)^2`` per mode."""
    d = np.diff(phi, axis=-1) / h
    return h * np.sum(d * d, axis=-1)


@dataclass
class FieldContext:
    """Grid-sampled geometry shared by all functionals of one run.

    Parameters
    ----------
    bg, modes, grid
        Background, harmonics and radial grid of the run.
    semilinear : bool
        Whether the radial nonlinearity is active.
    eps : float
        Angular-regularity loss ``epsilon``.
    """

    bg: Background
    modes: ModeSet
    grid: RadialGrid
    semilinear: bool = False
    eps: float = 0.1
    chi_terms: tuple | None = None
    _chi: ChiAlpha | None = field(default=None, repr=False)

    def __post_init__(self):
        x = self.grid.nodes
        s = potentials(self.bg, x)
        self.x = x
        self.h = self.grid.h
        self.sample = s
        self.Vl = s.V[None, :] + self.modes.lt2[:, None] * s.V_L[None, :]
        self.trap_l = s.trap_V[None, :] + self.modes.lt2[:, None] * s.trap_VL[None, :]
        if self.semilinear and (self.bg.p is None or len(self.modes) != 1):
            raise ConfigError("semilinear functionals need bg.p and a single radial mode")
        self.p = self.bg.p

    @property
    def chi(self) -> ChiAlpha:
        """Trapping cutoff; falls back to dominating ``V_L`` alone when the
        full positivity region is unbounded."""
        if self._chi is None:
            if self.chi_terms is not None:
                self._chi = chi_alpha(self.bg, terms=self.chi_terms)
            else:
                try:
                    self._chi = chi_alpha(self.bg)
                except ConditionViolation:
                    self._chi = chi_alpha(self.bg, terms=("VL",))
        return self._chi

    # pointwise value of the radial field and its F term
    def radial_pointwise(self, phi0):
        return phi0 / math.sqrt(FOUR_PI)

    def nonlinear_F_integral(self, phi):
        """``int_{S^2} F(|psi|^2) dOmega`` per node for a radial field."""
        u = np.abs(self.radial_pointwise(phi[0]))
        return FOUR_PI * u ** (self.p + 1.0) / (self.p + 1.0)


# ---------------------------------------------------------------------------
# Energy and conformal charge
# ---------------------------------------------------------------------------


def energy_per_mode(state, ctx: FieldContext):
    """Linear energy of each harmonic (no nonlinear term), shape ``(n_modes,)``."""
    h = ctx.h
    kin = trapezoid(state.phidot**2, h)
    grad = forward_gradient_energy(state.phi, h)
    pot = trapezoid(ctx.Vl * state.phi**2, h)
    return 0.5 * (kin + grad + pot)


def nonlinear_energy(state, ctx):
    """``int f F / 2 d^3mu``; zero for linear runs."""
    if not ctx.semilinear:
        return 0.0
    return 0.5 * float(trapezoid(ctx.sample.f * ctx.nonlinear_F_integral(state.phi), ctx.h))


def energy(state, ctx: FieldContext, dt=None, stepper: Stepper | None = None):
    """Total energy ``int e d^3mu``.

    When ``dt`` is given the leapfrog correction ``-(dt^2/8) |a|^2`` is
    included.  For linear runs this discrete energy is conserved by the
    kick-drift-kick scheme to round-off.
    """
    E = float(np.sum(energy_per_mode(state, ctx))) + nonlinear_energy(state, ctx)
    if dt is not None:
        if stepper is None:
            stepper = Stepper(ctx.bg, ctx.modes, ctx.grid, ctx.semilinear)
        a = stepper.acceleration(state.phi)
        E -= dt * dt / 8.0 * float(np.sum(trapezoid(a * a, ctx.h)))
    return E


def energy_L_power(state, ctx, s):
    """Linear energy of ``(L^s phi, L^s phidot)``."""
    return float(np.sum(ctx.modes.lam ** (2.0 * s) * energy_per_mode(state, ctx)))


def energy_density(state, ctx):
    """Pointwise ``e`` per mode (centred derivative), plus the nonlinear term
    on mode 0, and the momentum density ``p_* = phidot phi'``."""
    d = centered_derivative(state.phi, ctx.h)
    e = 0.5 * (state.phidot**2 + d * d + ctx.Vl * state.phi**2)
    if ctx.semilinear:
        e = e.copy()
        e[0] += 0.5 * ctx.sample.f * ctx.nonlinear_F_integral(state.phi)
    return e, state.phidot * d, d


def conformal_charge(state, ctx: FieldContext, t=None):
    """``(E_C, E_C_positive)`` at time ``t`` (defaults to ``state.t``).

    ``E_C`` integrates ``(t^2 + r_*^2) e + 2 t r_* p_* + e``.  The positive form
    replaces the first two terms by
    ``(t-r_*)^2 (w - v')^2 / 4 + (t+r_*)^2 (w + v')^2 / 4 + (t^2+r_*^2)(V v^2 + ...)/2``.
    """
    t = state.t if t is None else float(t)
    x = ctx.x
    e, pst, d = energy_density(state, ctx)
    w = state.phidot
    defin = (t * t + x * x) * e + 2.0 * t * x * pst + e
    pot = ctx.Vl * state.phi**2
    if ctx.semilinear:
        pot = pot.copy()
        pot[0] += ctx.sample.f * ctx.nonlinear_F_integral(state.phi)
    positive = (0.25 * (t - x) ** 2 * (w - d) ** 2 + 0.25 * (t + x) ** 2 * (w + d) ** 2
                + 0.5 * (t * t + x * x) * pot + e)
    return float(np.sum(trapezoid(defin, ctx.h))), float(np.sum(trapezoid(positive, ctx.h)))


def conformal_growth_rhs(state, ctx: FieldContext, t=None):
    """``int t(2V + r_*V') phi^2 + t(2V_L + r_*V_L') |grad phi|^2 + t(2f + r_*f') F``."""
    t = state.t if t is None else float(t)
    dens = ctx.trap_l * state.phi**2
    total = float(np.sum(trapezoid(dens, ctx.h)))
    if ctx.semilinear:
        total += float(trapezoid(ctx.sample.trap_f * ctx.nonlinear_F_integral(state.phi), ctx.h))
    return t * total


# ---------------------------------------------------------------------------
# Weighted L^2 norms
# ---------------------------------------------------------------------------


def hardy_norm(state, grid):
    """``||(1 + r_*^2)^(-1/2) phi||^2`` summed over harmonics."""
    x = grid.nodes
    return float(np.sum(trapezoid(state.phi**2 / (1.0 + x * x), grid.h)))


def morawetz_density(state, grid):
    """``||(1 + r_*^2)^(-1) phi||^2``."""
    x = grid.nodes
    return float(np.sum(trapezoid(state.phi**2 / (1.0 + x * x) ** 2, grid.h)))


def angular_density(state, ctx, eps=None):
    """``sum_l lambda_l^(2(1-eps)) int (chi_alpha phi_l)^2``."""
    eps = ctx.eps if eps is None else eps
    chi = ctx.chi(ctx.x)
    per = trapezoid((chi * state.phi) ** 2, ctx.h)
    return float(np.sum(ctx.modes.lam ** (2.0 * (1.0 - eps)) * per))


def l2_norm_squared(state, grid):
    return float(np.sum(trapezoid(state.phi**2, grid.h)))


# ---------------------------------------------------------------------------
# Pointwise (synthesised) functionals
# ---------------------------------------------------------------------------


def _pointwise(state, ctx):
    """Pointwise field on (r_*, mu) and the Gauss weights."""
    if ctx.modes.sphere:
        mu, wts = gauss_nodes(ctx.modes.l_max)
        return synthesize_axisymmetric(state.phi, ctx.modes, mu), wts
    if len(ctx.modes) == 1 and ctx.modes[0].lt2 == 0:
        mu, wts = gauss_nodes(0)
        return np.repeat(state.phi[0][:, None] / math.sqrt(FOUR_PI), mu.size, axis=1), wts
    raise ConfigError("pointwise functionals need the sphere spectrum")


def weighted_Lq(state, ctx: FieldContext, sigma):
    """``int V_L^((sigma-2)/2) |psi|^sigma d^3mu`` for ``2 <= sigma <= 6``."""
    sigma = float(sigma)
    if not 2.0 <= sigma <= 6.0:
        raise ConfigError(f"sigma must lie in [2, 6], got {sigma!r}")
    psi, wts = _pointwise(state, ctx)
    ang = sphere_integral(np.abs(psi) ** sigma, wts)
    return float(trapezoid(ctx.sample.V_L ** ((sigma - 2.0) / 2.0) * ang, ctx.h))


def L4_density(state, ctx):
    """``int w |psi|^4 d^3mu`` with ``w = V_L`` (``(1-2M/r)/r^2`` or ``r^-2``)."""
    psi, wts = _pointwise(state, ctx)
    return float(trapezoid(ctx.sample.V_L * sphere_integral(psi**4, wts), ctx.h))


def sobolev_sides(state, ctx: FieldContext):
    """Both sides of the angular-separated Sobolev inequality.

    ``lhs = int V_L^2 |psi|^6``;
    ``rhs = (int |psi'|^2 + |(V_L'/V_L) psi|^2) (int V_L (|grad psi|^2 + |psi|^2))^2``.

    Raises
    ------
    ConditionViolation
        If ``V_L'/V_L`` is not finite on the grid.
    """
    s = ctx.sample
    ratio = s.dV_L / s.V_L
    if not np.isfinite(ratio).all():
        raise ConditionViolation("V_L'/V_L is not finite on the grid")
    lhs = weighted_Lq(state, ctx, 6.0)
    d = centered_derivative(state.phi, ctx.h)
    first = float(np.sum(trapezoid(d * d + (ratio * state.phi) ** 2, ctx.h)))
    second = float(np.sum(trapezoid(s.V_L * (ctx.modes.lt2[:, None] + 1.0) * state.phi**2,
                                    ctx.h)))
    return lhs, first * second * second


# ---------------------------------------------------------------------------
# Diagnostics records and accumulators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One row of instantaneous and cumulative functionals."""

    t: float
    E: float
    E_L_eps: float
    E_L_18eps: float
    E_C: float
    E_C_positive: float
    dEC_dt_formula: float
    morawetz_cum: float
    angular_cum: float
    L4_cum: float
    L6_weighted: float
    hardy: float

    @classmethod
    def columns(cls):
        return tuple(f.name for f in fields(cls))

    def values(self):
        return tuple(getattr(self, c) for c in self.columns())


@dataclass(frozen=True)
class AccumulatorState:
    """Running space-time integrals and the integrands at the last tick."""

    t: float | None = None
    morawetz_cum: float = 0.0
    angular_cum: float = 0.0
    L4_cum: float = 0.0
    last: tuple = (0.0, 0.0, 0.0)


def accumulator_integrands(state, ctx):
    return (morawetz_density(state, ctx.grid), angular_density(state, ctx),
            L4_density(state, ctx))


def spacetime_accumulators(prev: AccumulatorState, state, ctx, dt=None):
    """Advance the cumulative integrals to ``state.t`` by the trapezoid rule.

    ``dt`` defaults to the time since the previous tick.  The first call
    (``prev.t is None``) only stores the integrands.
    """
    cur = accumulator_integrands(state, ctx)
    if prev.t is None:
        return AccumulatorState(state.t, 0.0, 0.0, 0.0, cur)
    dt = state.t - prev.t if dt is None else dt
    step = [0.5 * abs(dt) * (a + b) for a, b in zip(prev.last, cur)]
    return AccumulatorState(state.t, prev.morawetz_cum + step[0], prev.angular_cum + step[1],
                            prev.L4_cum + step[2], cur)


class DiagnosticsObserver:
    """Builds a DiagnosticsRecord per observer tick.

    Parameters
    ----------
    ctx : FieldContext
    dt : float, optional
        Time step, enabling the leapfrog-corrected energy.
    """

    def __init__(self, ctx: FieldContext, dt=None):
        self.ctx = ctx
        self.dt = dt
        self.acc = AccumulatorState()

    def __call__(self, state, stepper=None):
        ctx = self.ctx
        self.acc = spacetime_accumulators(self.acc, state, ctx)
        ec, ecp = conformal_charge(state, ctx)
        return DiagnosticsRecord(
            t=state.t,
            E=energy(state, ctx, self.dt, stepper),
            E_L_eps=energy_L_power(state, ctx, ctx.eps),
            E_L_18eps=energy_L_power(state, ctx, 18.0 * ctx.eps),
            E_C=ec,
            E_C_positive=ecp,
            dEC_dt_formula=conformal_growth_rhs(state, ctx),
            morawetz_cum=self.acc.morawetz_cum,
            angular_cum=self.acc.angular_cum,
            L4_cum=self.acc.L4_cum,
            L6_weighted=weighted_Lq(state, ctx, 6.0),
            hardy=hardy_norm(state, ctx.grid),
        )


# ---------------------------------------------------------------------------
# Run summaries
# ---------------------------------------------------------------------------


def loglog_slope(t, y, start_fraction=0.5):
    """Least-squares slope of ``log y`` against ``log t`` over the final part
    of the series.  Returns ``nan`` if fewer than three positive samples."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    k0 = int(start_fraction * t.size)
    t, y = t[k0:], y[k0:]
    keep = (y > 0) & (t > 0)
    if keep.sum() < 3:
        return float("nan")
    return float(np.polyfit(np.log(t[keep]), np.log(y[keep]), 1)[0])


def tail_fraction(t, cum, fraction=0.1):
    """Share of the final cumulative value accrued during the last ``fraction``
    of the time window.  Zero totals give zero."""
    t = np.asarray(t, dtype=float)
    cum = np.asarray(cum, dtype=float)
    total = cum[-1]
    if total <= 0:
        return 0.0
    t_cut = t[-1] - fraction * (t[-1] - t[0])
    before = np.interp(t_cut, t, cum)
    return float((total - before) / total)


def records_to_array(records):
    return np.array([r.values() for r in records], dtype=float)


def summarize(records):
    """Final cumulatives, drift and late-time slopes of a diagnostics series."""
    arr = records_to_array(records)
    cols = DiagnosticsRecord.columns()
    col = {c: arr[:, i] for i, c in enumerate(cols)}
    E0 = col["E"][0]
    out = {
        "n_records": len(records),
        "t_final": float(col["t"][-1]),
        "final": {c: float(col[c][-1]) for c in cols},
        "energy_drift_relative": float(np.max(np.abs(col["E"] - E0)) / E0) if E0 > 0 else 0.0,
        "E_C_max": float(col["E_C"].max()),
        "slopes": {c: loglog_slope(col["t"], col[c]) for c in
                   ("E_C", "L6_weighted", "hardy")},
        "tail_fraction": {c: tail_fraction(col["t"], col[c]) for c in
                          ("morawetz_cum", "angular_cum", "L4_cum")},
    }
    return out
