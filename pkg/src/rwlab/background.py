"""Geometry layer: tortoise coordinates, potentials and admissibility checks.

Two backgrounds are supported.

* Schwarzschild exterior of mass ``M``.  The radial variable is the tortoise
  coordinate ``r_*`` with ``dr/dr_* = 1 - 2M/r`` and ``r(0) = 3M``.
* Warped products ``R x W`` with metric ``dr_*^2 + r(r_*)^2 dw^2``.  The warp
  ``r(r_*)`` comes from a small analytic catalog or from a sampled table.

Both reduce the wave equation for ``phi = r * phi_geometric`` to

    phi_tt = phi'' - V phi - V_L (-Lap_W) phi - f |phi|^(p-1) phi.

Near the horizon ``r - 2M`` is exponentially small in ``r_*`` and cannot be
recovered from a float ``r``; the horizon gap ``r - 2M`` is therefore carried
alongside ``r`` wherever Schwarzschild quantities are evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import interpolate, optimize

from .errors import ConditionViolation, ConfigError, ConvergenceError, DomainError

LOG2 = math.log(2.0)

# Newton iteration cap for the tortoise inversion.
_NEWTON_CAP = 100


# ---------------------------------------------------------------------------
# Tortoise coordinate
# ---------------------------------------------------------------------------


def tortoise_from_area_radius(r, M, gap=None):
    """Tortoise coordinate of the area radius ``r``.

    ``r_* = r + 2M log((r - 2M)/2M) - 3M + 2M log 2``

    Parameters
    ----------
    r : float or array_like
        Area radius, ``r > 2M``.
    M : float
        Black-hole mass.
    gap : float or array_like, optional
        ``r - 2M`` computed without cancellation.  Supply it when ``r`` is so
        close to the horizon that ``r - 2M`` underflows relative to ``2M``.

    Raises
    ------
    DomainError
        If ``r <= 2M`` (horizon or interior).
    """
    r = np.asarray(r, dtype=float)
    gap = r - 2.0 * M if gap is None else np.asarray(gap, dtype=float)
    if np.any(~(gap > 0.0)):
        raise DomainError(f"area radius must satisfy r > 2M = {2.0 * M!r}")
    out = r + 2.0 * M * np.log(gap / (2.0 * M)) - 3.0 * M + 2.0 * M * LOG2
    return out[()] if out.ndim == 0 else out


def _solve_log_offset(c):
    """Solve ``exp(u) + u = c`` for ``u`` (vectorised).

    The left side is convex and increasing, so Newton converges from any
    start after at most one overshoot; a bisection sweep is kept as a guard.
    """
    c = np.asarray(c, dtype=float)
    u = np.where(c < 1.0, c - np.exp(np.minimum(c, 1.0)), np.log(np.maximum(c, 1.0)))
    big = c > 1.0
    u = np.where(big, np.log(np.maximum(c - np.log(np.maximum(c, 1.0)), 1e-300)), u)
    converged = np.zeros(c.shape, dtype=bool)
    for _ in range(_NEWTON_CAP):
        eu = np.exp(u)
        step = (eu + u - c) / (eu + 1.0)
        u = u - step
        converged = np.abs(step) <= 4e-16 * (1.0 + np.abs(u))
        if converged.all():
            break
    if not converged.all():
        for idx in zip(*np.nonzero(~converged)):
            ci = float(c[idx])
            lo = ci - math.exp(min(ci, 1.0)) - 1.0 if ci <= 1.0 else math.log(ci) - 1.0
            try:
                u[idx] = optimize.brentq(lambda v: math.exp(v) + v - ci, lo, ci,
                                         xtol=1e-300, rtol=4e-16, maxiter=500)
            except (ValueError, RuntimeError) as exc:  # pragma: no cover
                raise ConvergenceError(f"tortoise inversion failed at c={ci!r}") from exc
    return u


def horizon_gap_from_tortoise(r_star, M):
    """``r - 2M`` as a function of ``r_*``, accurate down to underflow."""
    r_star = np.asarray(r_star, dtype=float)
    if np.any(~np.isfinite(r_star)):
        raise DomainError("tortoise coordinate must be finite")
    c = r_star / (2.0 * M) + 0.5 - LOG2
    gap = 2.0 * M * np.exp(_solve_log_offset(c))
    return gap[()] if gap.ndim == 0 else gap


def area_radius_from_tortoise(r_star, M, return_gap=False):
    """Invert the tortoise map.

    Returns ``r`` (and ``r - 2M`` when ``return_gap`` is set).  The result is
    strictly increasing in ``r_*`` and ``r > 2M``; for ``r_* < -70M`` the float
    ``r`` rounds to ``2M`` and only the gap carries the information.
    """
    gap = horizon_gap_from_tortoise(r_star, M)
    r = 2.0 * M + gap
    if return_gap:
        return r, gap
    return r


# ---------------------------------------------------------------------------
# Warp functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Warp:
    """Warp ``r(r_*)`` with three derivatives.

    ``derivatives(x)`` returns ``(r, r', r'', r''')``.  ``p1_hint`` records
    the polynomial growth exponent of ``r`` at large ``|r_*|``.
    """

    name: str
    derivatives: Callable
    p1_hint: float
    params: dict = field(default_factory=dict)
    domain: tuple | None = None

    def __call__(self, x):
        return self.derivatives(np.asarray(x, dtype=float))[0]


def _one_plus_square(x):
    one = np.ones_like(x)
    return 1.0 + x * x, 2.0 * x, 2.0 * one, 0.0 * one


def _cosh(x):
    c, s = np.cosh(x), np.sinh(x)
    return c, s, c, s


def warp_one_plus_square():
    """``r = 1 + r_*^2``."""
    return Warp("one_plus_square", _one_plus_square, 2.0)


def warp_cosh():
    """``r = cosh r_*`` (exponential growth, violates the decay conditions)."""
    return Warp("cosh", _cosh, math.inf)


def warp_power(a):
    """``r = (1 + r_*^2)^a``; needs ``a >= 1/2`` for ``r'' >= 0``.

    For ``1/2 < a < 3/4`` every structural condition holds, including the
    compact positivity of ``2V + r_* V'``.
    """
    a = float(a)
    if a < 0.5:
        raise ConfigError(f"power warp needs exponent a >= 1/2, got {a!r}")

    def derivatives(x):
        s = 1.0 + x * x
        r = s ** a
        r1 = 2.0 * a * x * s ** (a - 1.0)
        r2 = s ** (a - 2.0) * (2.0 * a + (4.0 * a * a - 2.0 * a) * x * x)
        # d/dx of s^(a-2) * (2a + c x^2) with c = 4a^2 - 2a
        c = 4.0 * a * a - 2.0 * a
        r3 = (2.0 * (a - 2.0) * x * s ** (a - 3.0) * (2.0 * a + c * x * x)
              + s ** (a - 2.0) * 2.0 * c * x)
        return r, r1, r2, r3

    return Warp("power", derivatives, 2.0 * a, {"a": a})


def warp_polynomial(coeffs: Sequence[float]):
    """``r = sum_k coeffs[k] r_*^k``; must stay positive and convex."""
    poly = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    d1, d2, d3 = poly.deriv(1), poly.deriv(2), poly.deriv(3)

    def derivatives(x):
        return poly(x), d1(x), d2(x), d3(x)

    return Warp("polynomial", derivatives, float(poly.degree()),
                {"coeffs": [float(c) for c in coeffs]})


def warp_sampled(x_table, r_table, p1_hint=1.0):
    """Warp from a sampled table, interpolated by a quintic spline.

    Evaluation outside the table range raises ``DomainError``.
    """
    x_table = np.asarray(x_table, dtype=float)
    r_table = np.asarray(r_table, dtype=float)
    if x_table.ndim != 1 or x_table.shape != r_table.shape or x_table.size < 8:
        raise ConfigError("sampled warp needs matching 1-D tables with >= 8 samples")
    if np.any(np.diff(x_table) <= 0):
        raise ConfigError("sampled warp abscissae must be strictly increasing")
    spline = interpolate.make_interp_spline(x_table, r_table, k=5)
    lo, hi = float(x_table[0]), float(x_table[-1])

    def derivatives(x):
        if np.any((x < lo) | (x > hi)):
            raise DomainError(f"r_* outside sampled warp domain [{lo}, {hi}]")
        return spline(x), spline(x, 1), spline(x, 2), spline(x, 3)

    return Warp("sampled", derivatives, float(p1_hint), {"n": int(x_table.size)}, (lo, hi))


WARP_CATALOG = {
    "one_plus_square": warp_one_plus_square,
    "cosh": warp_cosh,
    "power": warp_power,
    "polynomial": warp_polynomial,
}


# ---------------------------------------------------------------------------
# Background and potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Background:
    """Immutable description of the geometry.

    ``kind`` is ``"schwarzschild"`` (uses ``M``) or ``"warped"`` (uses
    ``warp``).  ``p`` is the nonlinearity exponent; ``None`` means linear.
    """

    kind: str
    M: float = 1.0
    warp: Warp | None = None
    p: float | None = None

    def __post_init__(self):
        if self.kind == "schwarzschild":
            if not self.M > 0:
                raise ConfigError(f"Schwarzschild mass must be positive, got {self.M!r}")
        elif self.kind == "warped":
            if self.warp is None:
                raise ConfigError("warped background needs a warp function")
        else:
            raise ConfigError(f"unknown background kind {self.kind!r}")
        if self.p is not None and not self.p > 1:
            raise ConfigError(f"nonlinearity exponent must exceed 1, got {self.p!r}")

    @classmethod
    def schwarzschild(cls, M=1.0, p=None):
        return cls("schwarzschild", M=float(M), p=p)

    @classmethod
    def warped(cls, warp, p=None):
        return cls("warped", warp=warp, p=p)

    @property
    def semilinear(self):
        return self.p is not None

    @property
    def photon_sphere_star(self):
        """``(alpha_infinity)_*``: the maximum of ``V_L``."""
        return effective_potential_peak(self, None).alpha_star

    def describe(self):
        out = {"kind": self.kind, "p": self.p}
        if self.kind == "schwarzschild":
            out["M"] = self.M
        else:
            out["warp"] = self.warp.name
            out["warp_params"] = dict(self.warp.params)
        return out


@dataclass(frozen=True)
class PotentialSample:
    """Potentials, their ``r_*`` derivatives and trapping terms.

    Fields are floats or arrays matching ``r_star``.
    """

    r_star: np.ndarray
    r: np.ndarray
    V: np.ndarray
    V_L: np.ndarray
    f: np.ndarray
    dV: np.ndarray
    dV_L: np.ndarray
    df: np.ndarray

    @property
    def trap_V(self):
        return 2.0 * self.V + self.r_star * self.dV

    @property
    def trap_VL(self):
        return 2.0 * self.V_L + self.r_star * self.dV_L

    @property
    def trap_f(self):
        return 2.0 * self.f + self.r_star * self.df

    def V_l(self, lt2):
        return self.V + lt2 * self.V_L

    def dV_l(self, lt2):
        return self.dV + lt2 * self.dV_L

    CSV_COLUMNS = ("r_star", "r", "V", "V_L", "f", "trap_V", "trap_VL", "trap_f")

    def rows(self):
        cols = [np.atleast_1d(getattr(self, name)) for name in self.CSV_COLUMNS]
        return np.column_stack(cols)


def potentials(bg: Background, r_star) -> PotentialSample:
    """Evaluate ``V``, ``V_L``, ``f`` and their ``r_*`` derivatives."""
    x = np.asarray(r_star, dtype=float)
    p = bg.p
    if bg.kind == "schwarzschild":
        M = bg.M
        r, gap = area_radius_from_tortoise(x, M, return_gap=True)
        r, gap = np.asarray(r), np.asarray(gap)
        q = gap / r  # 1 - 2M/r without cancellation
        V = 2.0 * M * q / r**3
        V_L = q / r**2
        dV = q * (2.0 * M / r**5) * (8.0 * M - 3.0 * r)
        dV_L = q * (2.0 / r**4) * (3.0 * M - r)
        if p is None:
            f = df = np.zeros_like(r)
        else:
            f = q * r ** (1.0 - p)
            df = q * r ** (-p - 1.0) * ((1.0 - p) * r + 2.0 * M * p)
    else:
        r, r1, r2, r3 = (np.asarray(a, dtype=float) * np.ones_like(x)
                         for a in bg.warp.derivatives(x))
        if np.any(r <= 0):
            raise ConfigError("warp function must be positive")
        if np.any(r2 < -1e-14 * np.maximum(1.0, np.abs(r))):
            raise ConfigError("warp function must be convex (r'' >= 0)")
        V = r2 / r
        dV = r3 / r - r2 * r1 / r**2
        V_L = r**-2
        dV_L = -2.0 * r1 / r**3
        if p is None:
            f = df = np.zeros_like(r)
        else:
            f = r ** (1.0 - p)
            df = (1.0 - p) * r ** (-p) * r1
    return PotentialSample(x, r, V, V_L, f, dV, dV_L, df)


def trapping_terms(bg: Background, r_star):
    """``(2V + r_* V', 2V_L + r_* V_L', 2f + r_* f')``."""
    s = potentials(bg, r_star)
    return s.trap_V, s.trap_VL, s.trap_f


# ---------------------------------------------------------------------------
# Effective potential peak
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Peak:
    lt2: float
    alpha_r: float
    alpha_star: float


def schwarzschild_peak_radius(lt2, M=1.0):
    """Positive root ``alpha_{l,+}`` of ``lt2 r^2 - 3M(lt2 - 1) r - 8M^2``.

    Uses the cancellation-free branch of the quadratic formula so that
    ``lt2 = 0`` returns ``8M/3`` and ``lt2 -> inf`` tends to ``3M``.
    """
    if lt2 is None or math.isinf(lt2):
        return 3.0 * M
    a = float(lt2)
    b = -3.0 * M * (a - 1.0)
    c = -8.0 * M * M
    disc = math.sqrt(b * b - 4.0 * a * c)
    if -b > 0:
        return (-b + disc) / (2.0 * a)
    return 2.0 * c / (-b - disc)


def default_scan(bg: Background):
    """Scan domain ``(r_min, r_max, n)`` used by the condition checks."""
    if bg.kind == "schwarzschild":
        return (-200.0 * bg.M, 200.0 * bg.M, 8001)
    if bg.warp.domain is not None:
        lo, hi = bg.warp.domain
        return (lo, hi, 8001)
    return (-50.0, 50.0, 8001)


def _scan_grid(scan):
    lo, hi, n = scan
    return np.linspace(lo, hi, int(n))


def effective_potential_peak(bg: Background, l, lt2=None, scan=None) -> Peak:
    """Maximum of ``V_l = V + lt2 V_L``.

    ``l=None`` (or ``lt2=inf``) returns the maximum of ``V_L`` itself, the
    ``l -> infinity`` limit.  On Schwarzschild the closed form is used; on a
    warped product the maximum is located by a sign-change scan of ``V_l'``
    refined with Brent's method.

    Raises
    ------
    ConditionViolation
        If ``V_l'`` does not change sign exactly once, from + to -, on the scan.
    """
    if lt2 is None:
        lt2 = math.inf if l is None else float(l) * (float(l) + 1.0)
    if l is not None and l < 0:
        raise ConfigError("harmonic index must be non-negative")
    if bg.kind == "schwarzschild":
        a = schwarzschild_peak_radius(lt2, bg.M)
        return Peak(lt2, a, float(tortoise_from_area_radius(a, bg.M)))

    def dVl(x):
        s = potentials(bg, x)
        return s.dV_L if math.isinf(lt2) else s.dV_l(lt2)

    x = _scan_grid(scan or default_scan(bg))
    d = dVl(x)
    sign = np.sign(d)
    nz = np.nonzero(sign)[0]
    changes = [i for i, j in zip(nz[:-1], nz[1:]) if sign[i] != sign[j]]
    if len(changes) != 1 or not (sign[changes[0]] > 0):
        raise ConditionViolation(
            f"effective potential (lt2={lt2}) has {len(changes)} critical points on the scan")
    i = changes[0]
    j = nz[nz > i][0]
    if sign[i + 1] == 0 and j == i + 2:
        root = float(x[i + 1])
    else:
        root = optimize.brentq(lambda t: float(dVl(np.array(t))), x[i], x[j], xtol=1e-14)
    return Peak(lt2, float(bg.warp(root)), root)


# ---------------------------------------------------------------------------
# Condition checker
# ---------------------------------------------------------------------------

PASS, FAIL, NA = "pass", "fail", "not-applicable"

# Fraction of the scan domain at each edge in which a positive trapping term
# means "positivity region is not compact".
EDGE_FRACTION = 0.1
# Largest log-log growth rate (vs 1+|r_*|) accepted as "bounded" in the edge bands.
GROWTH_TOL = 0.25


@dataclass
class ConditionStatus:
    status: str
    witness: float | None = None
    detail: str = ""

    def to_dict(self):
        return {"status": self.status, "witness": self.witness, "detail": self.detail}


@dataclass
class ConditionReport:
    """Status of conditions 1-9 for one background and scan."""

    conditions: dict
    scan: tuple
    background: dict

    def status(self, k):
        return self.conditions[k].status

    def passed(self, ks):
        return all(self.conditions[k].status == PASS for k in ks)

    def to_dict(self):
        return {
            "background": self.background,
            "scan": {"r_min": self.scan[0], "r_max": self.scan[1], "n": int(self.scan[2])},
            "conditions": {str(k): v.to_dict() for k, v in sorted(self.conditions.items())},
        }


def _edge_masks(x, frac=EDGE_FRACTION):
    lo, hi = x[0], x[-1]
    width = frac * (hi - lo)
    return x <= lo + width, x >= hi - width


def _growth_witness(values, x, tol=GROWTH_TOL):
    """Return the r_* of a band whose non-negative ``values`` grow too fast.

    A quantity counts as bounded when, in each edge band, the least-squares
    slope of log(values) against log(1 + |r_*|) is at most ``tol``.
    """
    for mask in _edge_masks(x):
        v = values[mask]
        xs = x[mask]
        keep = v > 0
        if keep.sum() < 4:
            continue
        slope = np.polyfit(np.log1p(np.abs(xs[keep])), np.log(v[keep]), 1)[0]
        if slope > tol:
            k = np.argmax(np.abs(xs[keep]))
            return float(xs[keep][k])
    return None


def _positivity_interval(values, x):
    pos = values > 0
    if not pos.any():
        return None
    idx = np.nonzero(pos)[0]
    return float(x[idx[0]]), float(x[idx[-1]])


def _compact_positivity(values, x):
    """Witness of positivity within the edge bands, else None."""
    left, right = _edge_masks(x)
    bad = (values > 0) & (left | right)
    if bad.any():
        return float(x[np.nonzero(bad)[0][0]])
    return None


def _count_maxima(d, x):
    sign = np.sign(d)
    nz = np.nonzero(sign)[0]
    changes = [(i, j) for i, j in zip(nz[:-1], nz[1:]) if sign[i] != sign[j]]
    return changes, sign


def check_conditions(bg: Background, scan=None, l_values=range(0, 21)) -> ConditionReport:
    """Numerically evaluate conditions 1-9 on a finite scan domain.

    Condition 3b is tested on ``V_l'`` (which vanishes linearly at the
    maximum); conditions 6-9 are not applicable for linear backgrounds.
    Failures are reported, never raised.
    """
    scan = tuple(scan or default_scan(bg))
    x = _scan_grid(scan)
    s = potentials(bg, x)
    out = {}

    out[1] = ConditionStatus(PASS, None, "potentials are evaluated from closed forms in r_* only")

    neg = np.nonzero((s.V < 0) | (s.V_L < 0))[0]
    out[2] = (ConditionStatus(PASS, None, f"min V={s.V.min():.3e}, min V_L={s.V_L.min():.3e}")
              if neg.size == 0 else
              ConditionStatus(FAIL, float(x[neg[0]]), "negative potential"))

    # condition 3: unique non-degenerate maxima, convergence of peaks
    h = x[1] - x[0]
    fail3 = None
    peaks = []
    curves = [(float(l) * (l + 1.0), s.dV_l(float(l) * (l + 1.0))) for l in l_values]
    curves += [("V", s.dV), ("V_L", s.dV_L)]
    for label, d in curves:
        changes, sign = _count_maxima(d, x)
        if len(changes) != 1 or sign[changes[0][0]] < 0:
            fail3 = (float(x[changes[0][0]]) if changes else float(x[0]),
                     f"V_l' for {label} changes sign {len(changes)} times")
            break
        i, j = changes[0]
        slope = (d[j] - d[i]) / ((j - i) * h)
        scale = np.max(np.abs(d)) / (x[-1] - x[0])
        if not slope < -1e-8 * scale:
            fail3 = (float(x[i]), f"V_l' for {label} does not vanish linearly")
            break
        if label not in ("V", "V_L"):
            peaks.append(0.5 * (x[i] + x[j]))
    if fail3 is None and bg.kind == "schwarzschild":
        dist = [abs(effective_potential_peak(bg, l).alpha_star) for l in l_values]
    elif fail3 is None:
        a_inf = effective_potential_peak(bg, None, scan=scan).alpha_star
        dist = [abs(p - a_inf) for p in peaks]
    if fail3 is None and len(dist) > 1 and not dist[-1] <= dist[0] + h:
        fail3 = (float(peaks[-1]) if peaks else None, "peaks do not approach (alpha_inf)_*")
    out[3] = (ConditionStatus(PASS, None,
                              "unique maxima with linearly vanishing V_l' (3b read as V_l')")
              if fail3 is None else ConditionStatus(FAIL, fail3[0], fail3[1]))

    w_v, w_vl = _compact_positivity(s.trap_V, x), _compact_positivity(s.trap_VL, x)
    if w_v is None and w_vl is None:
        iv = _positivity_interval(np.maximum(s.trap_V, s.trap_VL), x)
        out[4] = ConditionStatus(PASS, None, f"trapping terms positive only on {iv}")
    else:
        which = "2V + r_* V'" if w_v is not None else "2V_L + r_* V_L'"
        out[4] = ConditionStatus(FAIL, w_v if w_v is not None else w_vl,
                                 f"{which} positive within {EDGE_FRACTION:.0%} of the scan edge")

    ratio = s.dV_L / s.V_L
    w = _growth_witness(np.maximum(ratio, 0.0), x)
    w2 = _growth_witness(s.V_L * (1.0 + x * x), x)
    out[5] = (ConditionStatus(PASS, None, "V_L'/V_L bounded above, V_L <= C/(1+r_*^2)")
              if w is None and w2 is None else
              ConditionStatus(FAIL, w if w is not None else w2, "weight bound violated"))

    if not bg.semilinear:
        for k in (6, 7, 8, 9):
            out[k] = ConditionStatus(NA, None, "no semilinear term configured")
    else:
        w = _growth_witness(np.abs(ratio) * (1.0 + np.abs(x)), x)
        out[6] = (ConditionStatus(PASS, None, "|V_L'/V_L| <= C/(1+|r_*|), V_L <= C/(1+r_*^2)")
                  if w is None and w2 is None else
                  ConditionStatus(FAIL, w if w is not None else w2,
                                  "|V_L'/V_L| does not decay like 1/|r_*|"))
        neg = np.nonzero(s.f < 0)[0]
        out[7] = (ConditionStatus(PASS, None, "f >= 0") if neg.size == 0
                  else ConditionStatus(FAIL, float(x[neg[0]]), "negative f"))
        w = _compact_positivity(s.trap_f, x)
        pos = s.trap_f > 0
        notpos = np.nonzero(pos & ~(s.f > 0))[0]
        if w is not None:
            out[8] = ConditionStatus(FAIL, w, "2f + r_* f' positive near the scan edge")
        elif notpos.size:
            out[8] = ConditionStatus(FAIL, float(x[notpos[0]]), "f vanishes where 2f + r_* f' > 0")
        else:
            out[8] = ConditionStatus(PASS, None,
                                     f"2f + r_* f' positive only on {_positivity_interval(s.trap_f, x)}")
        with np.errstate(divide="ignore", over="ignore"):
            q = s.f * s.V_L ** ((1.0 - bg.p) / 2.0)
        q = np.where(np.isfinite(q), q, np.inf)
        w = _growth_witness(q, x)
        out[9] = (ConditionStatus(PASS, None, "f V_L^((1-p)/2) bounded")
                  if w is None and np.isfinite(q).all() else
                  ConditionStatus(FAIL, w if w is not None else float(x[np.argmax(q)]),
                                  "f V_L^((1-p)/2) unbounded"))
    return ConditionReport(out, scan, bg.describe())


# ---------------------------------------------------------------------------
# Trapping-region cutoff
# ---------------------------------------------------------------------------


def _smoothstep5(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


@dataclass(frozen=True)
class ChiAlpha:
    """C^2 bump dominating the positive part of the trapping terms.

    Equal to ``height`` on ``[a, b]`` (the positivity region) and ramping to
    zero over ``20%`` of its width on each side with a quintic smoothstep.
    """

    a: float
    b: float
    height: float
    terms: tuple
    margin: float = 0.2

    @property
    def support(self):
        w = self.margin * (self.b - self.a)
        return self.a - w, self.b + w

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        w = self.margin * (self.b - self.a)
        left = _smoothstep5((x - (self.a - w)) / w)
        right = _smoothstep5(((self.b + w) - x) / w)
        out = self.height * np.minimum(left, right)
        return out[()] if out.ndim == 0 else out


def chi_alpha(bg: Background, scan=None, terms=None) -> ChiAlpha:
    """Build the trapping cutoff ``chi_alpha`` for ``bg``.

    ``terms`` selects which trapping terms are dominated; by default
    ``("V", "VL")`` plus ``"f"`` when a semilinear term is configured.

    Raises
    ------
    ConditionViolation
        If a selected trapping term is positive near the scan edges, i.e. its
        positivity region is not compact.
    """
    if terms is None:
        terms = ("V", "VL", "f") if bg.semilinear else ("V", "VL")
    terms = tuple(terms)
    scan = tuple(scan or default_scan(bg))
    x = _scan_grid(scan)

    def combined(xx):
        s = potentials(bg, xx)
        vals = {"V": s.trap_V, "VL": s.trap_VL, "f": s.trap_f}
        return np.max(np.stack([np.asarray(vals[t], dtype=float) for t in terms]), axis=0)

    y = combined(x)
    w = _compact_positivity(y, x)
    if w is not None:
        raise ConditionViolation(
            f"trapping terms {terms} positive near scan edge at r_*={w}; region not compact")
    iv = _positivity_interval(y, x)
    if iv is None:
        raise ConditionViolation("no positive trapping term on the scan")
    idx = np.nonzero(y > 0)[0]
    i0, i1 = idx[0], idx[-1]

    def root(xa, xb):
        return optimize.brentq(lambda t: float(combined(np.array(t))), xa, xb, xtol=1e-13)

    a = root(x[i0 - 1], x[i0]) if i0 > 0 else float(x[i0])
    b = root(x[i1], x[i1 + 1]) if i1 + 1 < x.size else float(x[i1])
    return ChiAlpha(float(a), float(b), float(y.max()), terms)
