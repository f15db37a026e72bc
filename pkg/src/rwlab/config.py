"""Run configuration: flat INI sections of ``key = value`` pairs.

Sections and keys (defaults in brackets)::

    [background]  kind (schwarzschild | warped), M [1], warp, warp_a [2/3],
                  warp_coeffs, warp_table, p
    [modes]       l_max [0], spectrum, weights
    [grid]        r_min, r_max, and one of n or h
    [solver]      dt or cfl [0.5], t_end [0], semilinear [false]
    [data]        center [0], width [1], amplitude [1], profile [outgoing]
    [estimates]   sigma [2], b [0.2], b_scan, delta [= eps], eps [0.1], N [1],
                  margin [0.1], resolved_fraction [0.5], l_values, phase_l_values,
                  t_ref [20]
    [output]      directory [.], cadence [1], formats [csv,json], dump_matrices [false]

Unknown sections or keys are rejected with their line number.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .background import (Background, WARP_CATALOG, warp_cosh, warp_one_plus_square,
                         warp_polynomial, warp_power, warp_sampled)
from .errors import ConfigError
from .evolve import MAX_CFL, RadialGrid, SolverConfig
from .harmonics import make_modeset

SCHEMA = {
    "background": {"kind", "M", "warp", "warp_a", "warp_coeffs", "warp_table", "p"},
    "modes": {"l_max", "spectrum", "weights"},
    "grid": {"r_min", "r_max", "n", "h"},
    "solver": {"dt", "cfl", "t_end", "semilinear"},
    "data": {"center", "width", "amplitude", "profile"},
    "estimates": {"sigma", "b", "b_scan", "delta", "eps", "N", "margin",
                  "resolved_fraction", "l_values", "phase_l_values", "t_ref"},
    "output": {"directory", "cadence", "formats", "dump_matrices"},
}
REQUIRED_SECTIONS = ("background", "grid")


def _line_index(text):
    """Map ``(section, key) -> line number`` by scanning the raw text."""
    where = {}
    section = None
    for k, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = k
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip()), k)
    return where


class _Reader:
    """Typed access to a parsed section with located error messages."""

    def __init__(self, cp, section, lines):
        self.cp, self.section, self.lines = cp, section, lines
        self.data = cp[section] if cp.has_section(section) else {}

    def where(self, key):
        k = self.lines.get((self.section, key))
        return f"line {k}, [{self.section}] {key}" if k else f"[{self.section}] {key}"

    def fail(self, key, msg):
        raise ConfigError(f"{self.where(key)}: {msg}")

    def has(self, key):
        return key in self.data

    def raw(self, key, default=None):
        return self.data[key] if key in self.data else default

    def float(self, key, default=None, required=False):
        if key not in self.data:
            if required:
                raise ConfigError(f"[{self.section}] missing required key '{key}'")
            return default
        try:
            v = float(self.data[key])
        except ValueError:
            self.fail(key, f"expected a number, got {self.data[key]!r}")
        if not math.isfinite(v):
            self.fail(key, "value must be finite")
        return v

    def int(self, key, default=None):
        if key not in self.data:
            return default
        try:
            return int(self.data[key])
        except ValueError:
            self.fail(key, f"expected an integer, got {self.data[key]!r}")

    def bool(self, key, default=False):
        if key not in self.data:
            return default
        v = self.data[key].strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        self.fail(key, f"expected a boolean, got {self.data[key]!r}")

    def floats(self, key, default=None):
        if key not in self.data:
            return default
        try:
            return [float(t) for t in self.data[key].replace(",", " ").split()]
        except ValueError:
            self.fail(key, f"expected a list of numbers, got {self.data[key]!r}")

    def ints(self, key, default=None):
        vals = self.floats(key, None)
        if vals is None:
            return default
        if any(v != int(v) for v in vals):
            self.fail(key, "expected a list of integers")
        return [int(v) for v in vals]


@dataclass
class RunConfig:
    """Validated run configuration.  ``echo`` holds the parsed key/value
    strings exactly as written."""

    background: Background
    modes: object
    grid: RadialGrid
    solver: SolverConfig
    data: dict
    estimates: dict
    output: dict
    echo: dict = field(default_factory=dict)


def _parse_background(r: _Reader):
    kind = (r.raw("kind") or "").strip().lower()
    p = r.float("p")
    if p is not None and not p > 1:
        r.fail("p", f"nonlinearity exponent must exceed 1, got {p}")
    if kind == "schwarzschild":
        M = r.float("M", 1.0)
        if not M > 0:
            r.fail("M", f"mass must be positive, got {M}")
        for key in ("warp", "warp_a", "warp_coeffs", "warp_table"):
            if r.has(key):
                r.fail(key, "only valid for kind = warped")
        return Background.schwarzschild(M, p)
    if kind == "warped":
        name = (r.raw("warp") or "").strip().lower()
        if name == "one_plus_square":
            warp = warp_one_plus_square()
        elif name == "cosh":
            warp = warp_cosh()
        elif name == "power":
            a = r.float("warp_a", 2.0 / 3.0)
            if a < 0.5:
                r.fail("warp_a", f"power warp needs a >= 1/2, got {a}")
            warp = warp_power(a)
        elif name == "polynomial":
            coeffs = r.floats("warp_coeffs")
            if not coeffs:
                r.fail("warp_coeffs", "polynomial warp needs coefficients")
            warp = warp_polynomial(coeffs)
        elif name == "sampled":
            path = r.raw("warp_table")
            if not path:
                r.fail("warp_table", "sampled warp needs a table path")
            try:
                table = np.loadtxt(path, delimiter=",", ndmin=2)
            except OSError as exc:
                r.fail("warp_table", f"cannot read {path}: {exc}")
            warp = warp_sampled(table[:, 0], table[:, 1])
        else:
            known = ", ".join(sorted(set(WARP_CATALOG) | {"sampled"}))
            r.fail("warp", f"unknown warp {name!r} (known: {known})")
        if r.has("M"):
            r.fail("M", "only valid for kind = schwarzschild")
        return Background.warped(warp, p)
    r.fail("kind", f"expected schwarzschild or warped, got {kind!r}")


def parse_config(text, base_dir=None):
    """Parse and validate a configuration text.

    Raises
    ------
    ConfigError
        With the offending line and key for parse and validation failures.
    """
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    lines = _line_index(text)
    for sec in cp.sections():
        if sec not in SCHEMA:
            k = lines.get((sec, None))
            raise ConfigError(f"line {k}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                k = lines.get((sec, key))
                raise ConfigError(f"line {k}, [{sec}]: unknown key '{key}'")
    for sec in REQUIRED_SECTIONS:
        if not cp.has_section(sec):
            raise ConfigError(f"missing required section [{sec}]")
    R = {sec: _Reader(cp, sec, lines) for sec in SCHEMA}

    bg = _parse_background(R["background"])

    m = R["modes"]
    spectrum = m.floats("spectrum")
    if spectrum is not None and m.has("l_max"):
        m.fail("spectrum", "give either l_max or spectrum, not both")
    if spectrum is not None:
        if bg.kind == "schwarzschild":
            m.fail("spectrum", "custom spectra are only meaningful on warped products")
        modes = make_modeset(spectrum=spectrum)
    else:
        l_max = m.int("l_max", 0)
        if l_max < 0:
            m.fail("l_max", "must be non-negative")
        modes = make_modeset(l_max)
    weights = m.floats("weights")
    if weights is not None and len(weights) != len(modes):
        m.fail("weights", f"need {len(modes)} weights, got {len(weights)}")

    g = R["grid"]
    r_min = g.float("r_min", required=True)
    r_max = g.float("r_max", required=True)
    if not r_max > r_min:
        g.fail("r_max", "must exceed r_min")
    if g.has("n") == g.has("h"):
        raise ConfigError("[grid] give exactly one of n or h")
    if g.has("n"):
        n = g.int("n")
        if n < 16:
            g.fail("n", "grid needs n >= 16")
        grid = RadialGrid(r_min, r_max, n)
    else:
        h = g.float("h")
        if not h > 0:
            g.fail("h", "must be positive")
        grid = RadialGrid.from_spacing(r_min, r_max, h)
        if grid.n < 16:
            g.fail("h", "grid needs n >= 16")

    s = R["solver"]
    t_end = s.float("t_end", 0.0)
    if t_end < 0:
        s.fail("t_end", "must be non-negative")
    semilinear = s.bool("semilinear", False)
    if s.has("dt") and s.has("cfl"):
        s.fail("cfl", "give either dt or cfl, not both")
    if s.has("dt"):
        dt = s.float("dt")
        if not dt > 0:
            s.fail("dt", "must be positive")
        if dt / grid.h > MAX_CFL + 1e-12:
            s.fail("dt", f"cfl = dt/h = {dt / grid.h:.4g} violates cfl <= {MAX_CFL}")
    else:
        cfl = s.float("cfl", 0.5)
        if not 0 < cfl <= MAX_CFL:
            s.fail("cfl" if s.has("cfl") else "dt", f"cfl = {cfl} violates 0 < cfl <= {MAX_CFL}")
        dt = cfl * grid.h
        if t_end > 0:
            # shrink dt slightly so that t_end is a whole number of steps
            dt = t_end / math.ceil(t_end / dt - 1e-12)
    solver = SolverConfig(dt, t_end, semilinear)
    if t_end > 0:
        try:
            solver.n_steps()
        except ConfigError as exc:
            s.fail("t_end", str(exc))
    if semilinear:
        if len(modes) != 1 or modes[0].lt2 != 0:
            s.fail("semilinear", "semilinear term is radial only: requires l_max = 0")
        if bg.p is None:
            s.fail("semilinear", "semilinear term requires [background] p")

    d = R["data"]
    profile = (d.raw("profile") or "outgoing").strip().lower()
    if profile not in ("outgoing", "time_symmetric"):
        d.fail("profile", "expected outgoing or time_symmetric")
    data = {"center": d.float("center", 0.0), "width": d.float("width", 1.0),
            "amplitude": d.float("amplitude", 1.0), "outgoing": profile == "outgoing",
            "weights": weights}
    if not data["width"] > 0:
        d.fail("width", "must be positive")
    lo, hi = data["center"] - 4 * data["width"], data["center"] + 4 * data["width"]
    if not (grid.r_min < lo and hi < grid.r_max):
        d.fail("center" if d.has("center") else "width",
               f"bump support [{lo}, {hi}] not strictly inside the grid")

    e = R["estimates"]
    eps = e.float("eps", 0.1)
    if not eps > 0:
        e.fail("eps", "must be positive")
    sigma = e.float("sigma", 2.0)
    if not sigma > 1:
        e.fail("sigma", f"multiplier needs sigma > 1, got {sigma}")
    b = e.float("b", 0.2)
    if not b > 0:
        e.fail("b", "must be positive")
    b_scan = e.floats("b_scan")
    if b_scan is not None:
        if len(b_scan) != 3 or not (0 < b_scan[0] < b_scan[1]) or b_scan[2] < 2:
            e.fail("b_scan", "expected 'b_lo, b_hi, count' with 0 < b_lo < b_hi, count >= 2")
    delta = e.float("delta", eps)
    if not delta > 0:
        e.fail("delta", "must be positive")
    margin = e.float("margin", 0.1)
    if not 0 <= margin < 0.5:
        e.fail("margin", "must lie in [0, 0.5)")
    frac = e.float("resolved_fraction", 0.5)
    if not 0 < frac <= 1:
        e.fail("resolved_fraction", "must lie in (0, 1]")
    l_values = e.ints("l_values", list(range(len(modes))) if modes.sphere else [0])
    phase_l = e.ints("phase_l_values", [5, 10, 20])
    for key, vals in (("l_values", l_values), ("phase_l_values", phase_l)):
        if any(v < 0 for v in vals):
            e.fail(key, "harmonic indices must be non-negative")
    N = e.float("N", 1.0)
    if not N >= 1:
        e.fail("N", "must be >= 1")
    estimates = {"sigma": sigma, "b": b, "b_scan": b_scan, "delta": delta, "eps": eps,
                 "N": N, "margin": margin, "resolved_fraction": frac,
                 "l_values": l_values, "phase_l_values": phase_l,
                 "t_ref": e.float("t_ref", 20.0)}

    o = R["output"]
    cadence = o.int("cadence", 1)
    if cadence < 1:
        o.fail("cadence", "must be a positive integer")
    n_steps = solver.n_steps()
    if n_steps and n_steps % cadence:
        o.fail("cadence", f"cadence {cadence} does not divide the {n_steps} time steps")
    formats = [f.strip() for f in (o.raw("formats") or "csv,json").split(",") if f.strip()]
    if not set(formats) <= {"csv", "json"}:
        o.fail("formats", "supported formats are csv and json")
    output = {"directory": o.raw("directory", "."), "cadence": cadence, "formats": formats,
              "dump_matrices": o.bool("dump_matrices", False)}

    echo = {sec: {k: cp[sec][k] for k in cp[sec]} for sec in cp.sections()}
    return RunConfig(bg, modes, grid, solver, data, estimates, output, echo)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
