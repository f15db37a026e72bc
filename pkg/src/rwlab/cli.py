"""Command line entry point.

    rwlab <subcommand> --config <path> [--out <dir>]

Subcommands: potential, check, evolve, verify-morawetz, verify-phase,
verify-estimates.  Exit status 0 on success, 1 when a verification fails,
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .background import check_conditions, effective_potential_peak, potentials, PotentialSample
from .config import RunConfig, load_config
from .errors import ConditionViolation, ConfigError, RwlabError
from .evolve import Observer, evolve_run, initial_data_bump
from .functionals import (DiagnosticsObserver, DiagnosticsRecord, FieldContext,
                          centered_derivative, summarize, tail_fraction, trapezoid)
from .harmonics import Mode
from .io import ensure_dir, write_csv, write_json, write_matrix
from .observables import (SKEW, DiscreteOperator, angular_weight, build_full_phase_observable,
                          build_gamma, build_hamiltonian, build_partial_phase_observable,
                          certify_positivity, commutator, energy_bound_supremum,
                          local_decay_report, morawetz_weight, phase_observable_indices,
                          phase_setup, smallest_psd_coefficient, resolved_subspace)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _out(cfg, out):
    return ensure_dir(out or cfg.output["directory"])


def _want(cfg, fmt):
    return fmt in cfg.output["formats"]


# ---------------------------------------------------------------------------
# potential / check
# ---------------------------------------------------------------------------


def run_potential(cfg: RunConfig, out=None):
    d = _out(cfg, out)
    s = potentials(cfg.background, cfg.grid.nodes)
    rows = []
    for m in cfg.modes:
        pk = effective_potential_peak(cfg.background, None if not cfg.modes.sphere else m.l,
                                      lt2=m.lt2)
        rows.append((m.l, m.lt2, pk.alpha_r, pk.alpha_star))
    if _want(cfg, "csv"):
        write_csv(os.path.join(d, "potential.csv"), PotentialSample.CSV_COLUMNS, s.rows())
        write_csv(os.path.join(d, "peaks.csv"), ("l", "lt2", "alpha_r", "alpha_star"), rows)
    report = {"config": cfg.echo, "peaks": [dict(zip(("l", "lt2", "alpha_r", "alpha_star"), r))
                                            for r in rows]}
    return EXIT_OK, report


def run_check(cfg: RunConfig, out=None):
    d = _out(cfg, out)
    rep = check_conditions(cfg.background)
    report = {"config": cfg.echo, **rep.to_dict()}
    if _want(cfg, "json"):
        write_json(os.path.join(d, "conditions.json"), report)
    failed = [k for k, v in rep.conditions.items() if v.status == "fail"]
    return (EXIT_FAIL if failed else EXIT_OK), report


# ---------------------------------------------------------------------------
# evolve / verify-estimates
# ---------------------------------------------------------------------------


def _context(cfg):
    return FieldContext(cfg.background, cfg.modes, cfg.grid, cfg.solver.semilinear,
                        cfg.estimates["eps"])


def _initial(cfg):
    dd = cfg.data
    return initial_data_bump(cfg.grid, cfg.modes, dd["center"], dd["width"], dd["amplitude"],
                             dd["weights"], dd["outgoing"])


def simulate(cfg: RunConfig, extra=()):
    """Run the configured evolution with the diagnostics observer."""
    ctx = _context(cfg)
    obs = DiagnosticsObserver(ctx, cfg.solver.dt)
    observers = [Observer(obs, cfg.output["cadence"], "diagnostics"), *extra]
    res = evolve_run(cfg.solver, cfg.background, cfg.modes, cfg.grid, _initial(cfg), observers)
    return res, res.outputs["diagnostics"], ctx


def run_evolve(cfg: RunConfig, out=None):
    d = _out(cfg, out)
    res, records, ctx = simulate(cfg)
    summary = {"config": cfg.echo, "grid": cfg.grid.describe(), "dt": cfg.solver.dt,
               "n_steps": res.n_steps, "chi_alpha_terms": list(ctx.chi.terms),
               **summarize(records)}
    if _want(cfg, "csv"):
        write_csv(os.path.join(d, "diagnostics.csv"), DiagnosticsRecord.columns(),
                  [r.values() for r in records])
    if _want(cfg, "json"):
        write_json(os.path.join(d, "summary.json"), summary)
    return EXIT_OK, summary


def local_energy_monitor(ctx):
    """Observer for ``int chi_alpha (phidot^2 + phi'^2 + phi^2 + |grad phi|^2)``."""
    chi = None

    def fn(state, stepper=None):
        nonlocal chi
        if chi is None:
            chi = ctx.chi(ctx.x) / ctx.chi.height
        dphi = centered_derivative(state.phi, ctx.h)
        dens = chi * (state.phidot**2 + dphi**2
                      + (1.0 + ctx.modes.lt2[:, None]) * state.phi**2)
        return (state.t, float(np.sum(trapezoid(dens, ctx.h))))

    return fn


def estimates_table(records, local, t_ref=20.0, semilinear=False):
    """Monitors for the summary estimates, each with a pass flag."""
    t = np.array([r.t for r in records])
    E = np.array([r.E for r in records])
    EC = np.array([r.E_C for r in records])
    L6 = np.array([r.L6_weighted for r in records])
    loc = np.array([v for _, v in local])
    rows = {}
    E0 = E[0]
    rel = float(np.max(np.abs(E - E0)) / E0) if E0 > 0 else 0.0
    if semilinear:
        rows["energy_within_2x"] = {"value": float(E.max() / E0) if E0 > 0 else 0.0,
                                    "bound": 2.0}
        rows["conformal_within_2x"] = {"value": float(EC.max() / EC[0]) if EC[0] > 0 else 0.0,
                                       "bound": 2.0}
    else:
        rows["energy_drift"] = {"value": rel, "bound": 1e-6}
    mor = np.array([r.morawetz_cum for r in records])
    ang = np.array([r.angular_cum for r in records])
    L4 = np.array([r.L4_cum for r in records])
    rows["morawetz_tail_last_10pct"] = {"value": tail_fraction(t, mor, 0.1), "bound": 0.01}
    rows["angular_tail_last_10pct"] = {"value": tail_fraction(t, ang, 0.1), "bound": 0.01}
    rows["L4_tail_final_half"] = {"value": tail_fraction(t, L4, 0.5), "bound": 0.05}
    rows["morawetz_over_E"] = {"value": float(mor[-1] / E0) if E0 > 0 else 0.0, "bound": None}
    if t[-1] >= t_ref and EC.max() > 0:
        k = int(np.searchsorted(t, t_ref))
        ref = EC[k]
        rows["conformal_growth_after_t_ref"] = {
            "value": float(EC[k:].max() / ref) if ref > 0 else 0.0, "bound": 3.0}
    with np.errstate(divide="ignore", invalid="ignore"):
        mon6 = np.where(EC > 0, L6 * t**4 / EC**3, 0.0)
        monloc = np.where(EC > 0, loc * (1.0 + t**2) / EC, 0.0)
    half = t.size // 2
    for name, mon in (("sobolev_L6_monitor", mon6), ("local_energy_monitor", monloc)):
        first = float(mon[: max(half, 1)].max())
        second = float(mon[half:].max())
        rows[name] = {"value": float(mon.max()), "late_over_early": second / first
                      if first > 0 else 0.0, "bound": None}
    for row in rows.values():
        row["pass"] = True if row["bound"] is None else bool(row["value"] < row["bound"])
    return rows


def run_verify_estimates(cfg: RunConfig, out=None):
    d = _out(cfg, out)
    ctx = _context(cfg)
    local = Observer(local_energy_monitor(ctx), cfg.output["cadence"], "local")
    res, records, ctx = simulate(cfg, [local])
    table = estimates_table(records, res.outputs["local"], cfg.estimates["t_ref"],
                            cfg.solver.semilinear)
    decay = local_decay_report([r.t for r in records], [r.morawetz_cum for r in records],
                               records[0].E)
    report = {"config": cfg.echo, "estimates": table, "local_decay": decay,
              "N": cfg.estimates["N"], **summarize(records)}
    if _want(cfg, "csv"):
        write_csv(os.path.join(d, "diagnostics.csv"), DiagnosticsRecord.columns(),
                  [r.values() for r in records])
    if _want(cfg, "json"):
        write_json(os.path.join(d, "estimates.json"), report)
    ok = all(r["pass"] for r in table.values())
    return (EXIT_OK if ok else EXIT_FAIL), report


# ---------------------------------------------------------------------------
# verify-morawetz / verify-phase
# ---------------------------------------------------------------------------


def morawetz_certificates(bg, grid, l_values, sigma, b, margin=0.1, resolved_fraction=0.5,
                          dump_dir=None):
    """Certify ``[H, gamma] >= c W`` for each ``l``; returns per-l dicts."""
    Q = resolved_subspace(grid, margin, resolved_fraction)
    W = morawetz_weight(grid, sigma)
    out = []
    for l in l_values:
        mode = Mode.from_index(l)
        C = commutator(build_hamiltonian(mode, bg, grid), build_gamma(mode, bg, grid, sigma, b))
        cert = certify_positivity(C, W, Q)
        out.append({"l": l, "sigma": sigma, "b": b, **cert.to_dict()})
        if dump_dir:
            write_matrix(os.path.join(dump_dir, f"commutator_l{l}_b{b!r}.bin"), C.matrix,
                         {"l": l, "b": b, "sigma": sigma, "grid": grid.describe()})
    return out


def uniformity(cs):
    cs = np.asarray(cs, dtype=float)
    med = float(np.median(cs))
    return {"min": float(cs.min()), "median": med,
            "min_over_median": float(cs.min() / med) if med > 0 else 0.0,
            "argmin_l_index": int(np.argmin(cs))}


def run_verify_morawetz(cfg: RunConfig, out=None):
    d = _out(cfg, out)
    est = cfg.estimates
    if est["b_scan"] is not None:
        lo, hi, k = est["b_scan"]
        bs = [float(v) for v in np.geomspace(lo, hi, int(k))]
    else:
        bs = [est["b"]]
    dump = d if cfg.output["dump_matrices"] else None
    scans = []
    for b in bs:
        rows = morawetz_certificates(cfg.background, cfg.grid, est["l_values"], est["sigma"], b,
                                     est["margin"], est["resolved_fraction"], dump)
        cs = [r["c_best"] for r in rows]
        certified = all(r["c_best"] > 0 and r["margin"] >= 0 for r in rows)
        scans.append({"b": b, "certified": certified, "per_l": rows, "uniformity": uniformity(cs)})
    good = [s for s in scans if s["certified"]]
    best = max(good, key=lambda s: s["uniformity"]["min"]) if good else None
    report = {"config": cfg.echo, "grid": cfg.grid.describe(), "scans": scans,
              "best_b": best["b"] if best else None,
              "resolved_subspace": {"margin": est["margin"],
                                "resolved_fraction": est["resolved_fraction"]}}
    if _want(cfg, "json"):
        write_json(os.path.join(d, "morawetz.json"), report)
    return (EXIT_OK if best else EXIT_FAIL), report


def phase_certificates(bg, grid, l_values, delta, eps, sigma, b, margin=0.1,
                       resolved_fraction=0.5):
    """Certify ``[H, Gamma + C_Gamma gamma]`` against the angular weight and
    report the energy-boundedness suprema of each ``Gamma_{n,m}``."""
    Q = resolved_subspace(grid, margin, resolved_fraction)
    setup = phase_setup(bg, sigma, b)
    out = []
    for l in l_values:
        mode = Mode.from_index(l)
        H = build_hamiltonian(mode, bg, grid)
        G = build_full_phase_observable(mode, delta, eps, bg, grid, setup)
        g = build_gamma(mode, bg, grid, sigma, b, "uniform")
        CG, Cg = commutator(H, G), commutator(H, g)
        c_min = smallest_psd_coefficient(CG, Cg, Q)
        C_Gamma = 2.0 * max(c_min, 1e-3)
        A = DiscreteOperator(G.matrix + C_Gamma * g.matrix, SKEW)
        cert = certify_positivity(commutator(H, A), angular_weight(mode, grid, setup.chi, delta),
                                  Q)
        bounds = {}
        for n, m in phase_observable_indices(delta):
            P = build_partial_phase_observable(mode, n, m, delta, eps, bg, grid, setup)
            bounds[f"{n!r},{m!r}"] = energy_bound_supremum(P, H)
        out.append({"l": l, "C_Gamma_min": c_min, "C_Gamma": C_Gamma, **cert.to_dict(),
                    "energy_bound_sup": bounds})
    return out, setup


def run_verify_phase(cfg: RunConfig, out=None):
    d = _out(cfg, out)
    est = cfg.estimates
    phase_observable_indices(est["delta"])  # validates delta before any work
    rows, setup = phase_certificates(cfg.background, cfg.grid, est["phase_l_values"],
                                     est["delta"], est["eps"], est["sigma"], est["b"],
                                     est["margin"], est["resolved_fraction"])
    report = {"config": cfg.echo, "grid": cfg.grid.describe(), "per_l": rows,
              "chi_alpha": {"a": setup.chi.a, "b": setup.chi.b, "height": setup.chi.height,
                            "terms": list(setup.chi.terms)}}
    if _want(cfg, "json"):
        write_json(os.path.join(d, "phase.json"), report)
    ok = all(r["c_best"] > 0 and r["margin"] >= 0 for r in rows)
    return (EXIT_OK if ok else EXIT_FAIL), report


COMMANDS = {
    "potential": run_potential,
    "check": run_check,
    "evolve": run_evolve,
    "verify-morawetz": run_verify_morawetz,
    "verify-phase": run_verify_phase,
    "verify-estimates": run_verify_estimates,
}


def dispatch(subcommand, cfg, out=None):
    """Run one subcommand; returns ``(exit_status, report)``."""
    if subcommand not in COMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    return COMMANDS[subcommand](cfg, out)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="rwlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rwlab {__version__}")
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to the INI run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides [output])")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        status, _ = dispatch(args.subcommand, cfg, args.out)
    except ConfigError as exc:
        print(f"rwlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConditionViolation as exc:
        print(f"rwlab: condition violated: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except RwlabError as exc:
        print(f"rwlab: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
