"""Command-line entry point.

One executable with subcommands over all modules.  Anything with more than a
few parameters is driven by a JSON config file (schema below); flags cover
quick overrides.  Exit codes: 0 success, 1 acceptance/dominance failure,
2 configuration error.

Config files are versioned ("schema_version": 1), reject unknown keys, and
require a seed for every stochastic subcommand.  Each run writes its fully
resolved effective config next to its outputs, and re-running from that file
reproduces the outputs bit for bit.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bounds, limits
from . import simulate as sim
from .errors import ConfigurationError
from .functions import get as get_phi, tags as phi_tags
from .gheat import GParams, PdeGrid, auto_grid, gnormal_expect, solve_g_heat
from .kernels import backend_name, set_workers
from .scenario import ScenarioSet, choquet_integral, conjugate_expect, sublinear_expect

SCHEMA_VERSION = 1

STOCHASTIC_COMMANDS = {"simulate", "verify-ineq", "run-clt", "run-wlln", "run-lil"}

_ALLOWED_KEYS = {
    "simulate": {"schema_version", "seed", "family", "policy", "policies",
                 "n_steps", "n_paths", "event"},
    "run-clt": {"schema_version", "seed", "family", "phi", "n_list",
                "n_paths", "paths_by_n", "policies", "include_feedback", "nx"},
    "run-wlln": {"schema_version", "seed", "family", "phi", "n_list",
                 "n_paths", "paths_by_n", "policies"},
    "run-lil": {"schema_version", "seed", "family", "policy", "n_max",
                "n_paths", "checkpoint_ratio", "window_start",
                "tail_fraction", "bin_width"},
    "check-moment": {"schema_version", "family", "delta_list", "n_truncation"},
    "solve-gheat": {"schema_version", "phi_tag", "sigma_lower_sq",
                    "sigma_upper_sq", "t_horizon", "nx", "x_min", "x_max", "nt"},
}


def _load_config(path: str, command: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"malformed JSON in {path} at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}"
        ) from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError("config root must be a JSON object")
    version = cfg.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigurationError(
            f"config schema_version {version!r} does not match this build "
            f"({SCHEMA_VERSION})"
        )
    allowed = _ALLOWED_KEYS.get(command)
    if allowed is not None:
        unknown = set(cfg) - allowed
        if unknown:
            raise ConfigurationError(
                f"unknown config fields for {command}: {sorted(unknown)}"
            )
    if command in STOCHASTIC_COMMANDS and "seed" not in cfg:
        raise ConfigurationError(f"{command} is stochastic: config needs a seed")
    return cfg


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("SUBEXPECT_OUTDIR", ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_series(path: Path, xs, ys) -> None:
    # two-column plot data, tab separated
    with path.open("w") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{x}\t{y}\n")


def _effective(cfg: dict, extra: dict | None = None) -> dict:
    eff = dict(cfg)
    eff["schema_version"] = SCHEMA_VERSION
    if extra:
        eff.update(extra)
    return eff


# -- subcommand implementations ---------------------------------------------


def _cmd_solve_gheat(args) -> int:
    cfg = _load_config(args.config, "solve-gheat")
    phi = get_phi(cfg.get("phi_tag", "ramp"))
    params = GParams(float(cfg["sigma_lower_sq"]), float(cfg["sigma_upper_sq"]))
    t_horizon = float(cfg.get("t_horizon", 1.0))
    nx = int(cfg.get("nx", 2001))
    if "x_min" in cfg or "x_max" in cfg or "nt" in cfg:
        need = {"x_min", "x_max", "nt"}
        if not need <= set(cfg):
            raise ConfigurationError("explicit grids need x_min, x_max and nt")
        grid = PdeGrid(float(cfg["x_min"]), float(cfg["x_max"]), nx,
                       t_horizon, int(cfg["nt"]))
    else:
        grid = auto_grid(phi, params, t_horizon, nx)
    sol = solve_g_heat(phi, params, grid)
    out = _out_dir(args)
    rows = []
    for i, t in enumerate(sol.times):
        for j, x in enumerate(grid.x):
            rows.append((t, x, sol.values[i, j]))
    _write_csv(out / "gheat_surface.csv", ("t", "x", "u"), rows)
    summary = {
        "value_at_origin": sol.value_at_origin(),
        "scheme_params": {"x_min": grid.x_min, "x_max": grid.x_max,
                          "nx": grid.nx, "nt": grid.nt, "dt": grid.dt,
                          "dx": grid.dx, "t_horizon": t_horizon,
                          "backend": backend_name()},
        "effective_config": _effective(cfg),
    }
    _write_json(out / "gheat_summary.json", summary)
    print(f"u(t={t_horizon:g}, 0) = {sol.value_at_origin():.10g}")
    print(f"wrote {out / 'gheat_surface.csv'} and {out / 'gheat_summary.json'}")
    return 0


def _cmd_eval_gnormal(args) -> int:
    params = GParams(args.sigma_lo, args.sigma_hi)
    value = gnormal_expect(args.phi, params, nx=args.nx, t_horizon=args.t)
    print(f"{value:.10g}")
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config, "simulate")
    family = sim.family_from_config(cfg["family"])
    n_steps = int(cfg["n_steps"])
    n_paths = int(cfg["n_paths"])
    seed = int(cfg["seed"])
    out = _out_dir(args)
    summary: dict = {"effective_config": _effective(cfg),
                     "backend": backend_name()}
    if "policies" in cfg or "event" in cfg:
        policies = sim.policies_from_config(cfg.get("policies", "default"), family)
        event_cfg = cfg.get("event")
        if event_cfg is None:
            raise ConfigurationError("capacity estimation needs an event")
        event = _event_from_config(event_cfg, n_steps)
        upper = sim.estimate_upper_capacity(event, family, policies, n_steps,
                                            n_paths, seed)
        lower = sim.estimate_lower_capacity(event, family, policies, n_steps,
                                            n_paths, seed)
        summary["upper_capacity"] = upper.as_dict()
        summary["lower_capacity"] = lower.as_dict()
        print(f"upper capacity estimate: {upper.value:.6f} +- {upper.se:.6f}")
        print(f"lower capacity estimate: {lower.value:.6f} +- {lower.se:.6f}")
    else:
        policy = sim.policy_from_config(cfg["policy"])
        batch = sim.simulate_paths(family, policy, n_steps, n_paths, seed)
        _write_csv(out / "paths.csv",
                   ("path", "final_sum", "max_step", "max_abs_sum",
                    "bn_realized"),
                   ((i, batch.final_sums[i], batch.max_steps[i],
                     batch.max_abs_sums[i], batch.bn_realized[i])
                    for i in range(n_paths)))
        summary["aggregates"] = {
            "mean_final_sum": float(batch.final_sums.mean()),
            "var_final_sum": float(batch.final_sums.var()),
            "max_step": float(batch.max_steps.max()),
            "b_n_family": batch.b_n,
        }
        print(f"wrote {out / 'paths.csv'}")
    _write_json(out / "simulate_summary.json", summary)
    return 0


def _event_from_config(cfg: dict, n_steps: int):
    kind = cfg.get("type")
    if kind == "final_ge":
        return sim.event_final_at_least(float(cfg["x"]))
    if kind == "max_step_ge":
        return sim.event_max_step_at_least(float(cfg["y"]))
    if kind == "scaled_ball":
        scale = cfg.get("scale")
        if scale == "lil":  # 1 / (y_n sqrt(n)) with y_n = sqrt(2 loglog n)
            scale = 1.0 / (math.sqrt(2.0 * limits.loglog(n_steps))
                           * math.sqrt(n_steps))
        return sim.event_scaled_ball(float(scale), float(cfg.get("center", 0.0)),
                                     float(cfg["epsilon"]))
    raise ConfigurationError(f"unknown event type {kind!r}")


def _cmd_verify_ineq(args) -> int:
    overrides = None
    if args.config:
        overrides = _load_config(args.config, "verify-ineq-overrides")
        overrides.pop("schema_version", None)
    report = bounds.verify_bound(args.bound, overrides)
    out = _out_dir(args)
    _write_json(out / f"bound_{args.bound}.json", report.as_dict())
    print(f"{'DOMINATED' if report.dominated else 'VIOLATED'}: {args.bound}  "
          f"analytic={report.analytic_value:.6g} "
          f"empirical={report.empirical_estimate:.6g} "
          f"se={report.standard_error:.2g}")
    for cell in report.cells[: args.max_rows]:
        print("  " + " ".join(f"{k}={v:.4g}" if isinstance(v, float)
                              else f"{k}={v}" for k, v in cell.items()))
    if len(report.cells) > args.max_rows:
        print(f"  ... {len(report.cells) - args.max_rows} more cells in JSON")
    return 0 if report.dominated else 1


def _run_convergence(args, command: str) -> int:
    cfg = _load_config(args.config, command)
    family = sim.family_from_config(cfg["family"])
    n_list = [int(n) for n in cfg["n_list"]]
    if "paths_by_n" in cfg:
        n_paths = {int(k): int(v) for k, v in cfg["paths_by_n"].items()}
    else:
        n_paths = int(cfg["n_paths"])
    seed = int(cfg["seed"])
    if command == "run-clt":
        table = limits.clt_experiment(
            cfg.get("phi", "ramp"), family, n_list, n_paths, seed,
            include_feedback=bool(cfg.get("include_feedback", True)),
            nx=int(cfg.get("nx", 2001)))
        stem = "clt"
    else:
        table = limits.wlln_experiment(cfg.get("phi", "identity"), family,
                                       n_list, n_paths, seed)
        stem = "wlln"
    out = _out_dir(args)
    _write_csv(out / f"{stem}_table.csv",
               ("n", "estimate", "se", "error", "policy"),
               ((r["n"], r["estimate"], r["se"], r["error"], r["policy"])
                for r in table.rows))
    _write_series(out / f"{stem}_errors.tsv",
                  [r["n"] for r in table.rows],
                  [r["error"] for r in table.rows])
    summary = table.as_dict()
    summary["effective_config"] = _effective(cfg)
    _write_json(out / f"{stem}_summary.json", summary)
    print(f"reference = {table.reference:.6f}")
    for r in table.rows:
        print(f"  n={r['n']:>7} estimate={r['estimate']:.5f} "
              f"se={r['se']:.5f} error={r['error']:.5f} ({r['policy']})")
    print(f"errors nonincreasing within 2se: {table.monotone_within_2se}; "
          f"final error {table.final_error:.5f}")
    return 0


def _cmd_run_lil(args) -> int:
    cfg = _load_config(args.config, "run-lil")
    family = sim.family_from_config(cfg["family"])
    policy = (sim.policy_from_config(cfg["policy"]) if "policy" in cfg
              else sim.AdversaryPolicy.constant(
                  int(np.argmax(family.sigmas)), "max-variance"))
    res = limits.lil_experiment(
        family, policy, int(cfg["n_max"]), int(cfg["n_paths"]),
        int(cfg["seed"]),
        checkpoint_ratio=float(cfg.get("checkpoint_ratio", limits.CHECKPOINT_RATIO)),
        window_start=int(cfg.get("window_start", 100)),
        tail_fraction=float(cfg.get("tail_fraction", 0.1)),
        bin_width=float(cfg.get("bin_width", 0.05)))
    out = _out_dir(args)
    tr = res.trace
    rows = []
    for p in range(res.n_paths):
        for i, n in enumerate(tr.checkpoint_ns):
            rows.append((p, int(n), tr.a_values[i], tr.values[p, i]))
    _write_csv(out / "lil_trace.csv", ("path", "n", "a_n", "s_over_a"), rows)
    _write_series(out / "lil_ensemble_max.tsv", tr.checkpoint_ns,
                  tr.values.max(axis=0))
    summary = {
        "verdicts": res.verdicts,
        "cluster": {
            "liminf_estimate": res.cluster.liminf_estimate,
            "limsup_estimate": res.cluster.limsup_estimate,
            "outer_ok": res.cluster.outer_ok(),
            "inner_ok": res.cluster.inner_ok(),
            "tail_start": res.cluster.tail_start,
        },
        "running_max_quantiles": {
            str(q): float(np.quantile(tr.running_max, q))
            for q in (0.05, 0.25, 0.5, 0.75, 0.95)
        },
        "effective_config": _effective(cfg),
        "note": ("banded desk-scale check of an asymptotic statement; "
                 "see README"),
    }
    _write_json(out / "lil_summary.json", summary)
    print(json.dumps(summary["verdicts"], indent=2))
    return 0


def _cmd_check_moment(args) -> int:
    if args.config:
        cfg = _load_config(args.config, "check-moment")
        family = sim.family_from_config(cfg["family"])
        deltas = tuple(cfg.get("delta_list", (0.5, 1.0)))
        trunc = int(cfg.get("n_truncation", 10 ** 6))
    else:
        members = [{"sigma": 1.0}]
        fam_cfg = {"profile": args.profile, "members": members}
        if args.profile == "pareto":
            fam_cfg["tail_alpha"] = args.alpha
        if args.profile == "truncated_gaussian":
            fam_cfg["truncation"] = 3.0
        family = sim.family_from_config(fam_cfg)
        deltas = (0.5, 1.0)
        trunc = 10 ** 6
        cfg = {"family": fam_cfg, "delta_list": list(deltas),
               "n_truncation": trunc}
    report = limits.choquet_moment_check(family, deltas, n_truncation=trunc)
    out = _out_dir(args)
    report["effective_config"] = _effective(cfg)
    _write_json(out / "moment_check.json", report)
    print(f"classification: {report['classification']} "
          f"(sides agree: {report['sides_agree']}, "
          f"oracle: {report['oracle']})")
    return 0


def _cmd_choquet(args) -> int:
    try:
        text = Path(args.set).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario set: {exc}") from exc
    scen = ScenarioSet.from_json(text)
    phi = get_phi(args.phi)
    upper = choquet_integral(scen, phi, "upper")
    lower = choquet_integral(scen, phi, "lower")
    print(f"sublinear_expect = {sublinear_expect(scen, phi):.10g}")
    print(f"conjugate_expect = {conjugate_expect(scen, phi):.10g}")
    print(f"choquet_upper    = {upper:.10g}")
    print(f"choquet_lower    = {lower:.10g}")
    return 0


def _cmd_selftest(args) -> int:
    from . import selftest
    results = selftest.run_quick() if args.quick else selftest.run_all()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subexpect",
        description="sub-linear expectation numerics: scenario envelopes, "
                    "G-normal solvers, adversarial simulation, inequality "
                    "verification, limit experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads for the numba backend "
                             "(never affects results)")
    parser.add_argument("--out", default=None,
                        help="output directory (default $SUBEXPECT_OUTDIR or .)")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("solve-gheat", help="solve the G-heat equation from a "
                                           "JSON config; writes CSV surface")
    p.add_argument("--config", required=True)

    p = sub.add_parser("eval-gnormal", help="E[phi(xi)] for the G-normal law")
    p.add_argument("--phi", required=True, choices=phi_tags())
    p.add_argument("--sigma-lo", type=float, required=True,
                   help="lower variance bound (sigma_lower^2)")
    p.add_argument("--sigma-hi", type=float, required=True,
                   help="upper variance bound (sigma_upper^2)")
    p.add_argument("--nx", type=int, default=2001)
    p.add_argument("--t", type=float, default=1.0)

    p = sub.add_parser("simulate", help="adversarial path simulation / "
                                        "capacity estimation from JSON config")
    p.add_argument("--config", required=True)

    p = sub.add_parser("verify-ineq", help="verify one bound empirically")
    p.add_argument("--bound", required=True, choices=sorted(bounds.CANNED_CONFIGS))
    p.add_argument("--config", default=None, help="JSON overrides")
    p.add_argument("--max-rows", type=int, default=12)

    for name in ("run-clt", "run-wlln"):
        p = sub.add_parser(name, help=f"{name[4:].upper()} convergence experiment")
        p.add_argument("--config", required=True)

    p = sub.add_parser("run-lil", help="LIL trace / cluster experiment")
    p.add_argument("--config", required=True)

    p = sub.add_parser("check-moment", help="Choquet moment condition check")
    p.add_argument("--config", default=None)
    p.add_argument("--profile", default="gaussian", choices=sim.PROFILES)
    p.add_argument("--alpha", type=float, default=2.0,
                   help="pareto tail exponent")

    p = sub.add_parser("choquet", help="evaluate expectations and Choquet "
                                       "integrals of a scenario-set JSON file")
    p.add_argument("--set", required=True, help="scenario set JSON path")
    p.add_argument("--phi", default="identity", choices=phi_tags())

    p = sub.add_parser("selftest", help="run the acceptance suite")
    p.add_argument("--quick", action="store_true")
    return parser


_DISPATCH = {
    "solve-gheat": _cmd_solve_gheat,
    "eval-gnormal": _cmd_eval_gnormal,
    "simulate": _cmd_simulate,
    "verify-ineq": _cmd_verify_ineq,
    "run-clt": lambda a: _run_convergence(a, "run-clt"),
    "run-wlln": lambda a: _run_convergence(a, "run-wlln"),
    "run-lil": _cmd_run_lil,
    "check-moment": _cmd_check_moment,
    "choquet": _cmd_choquet,
    "selftest": _cmd_selftest,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, 0 on --help; keep its choice
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage()
        return 2
    if args.workers is not None:
        try:
            set_workers(args.workers)
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
    try:
        return _DISPATCH[args.command](args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())
