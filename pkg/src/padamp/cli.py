"""Command-line interface: run, sweep, norm-sim, check, grad-check.

Every subcommand accepts --seed, --steps, and --out. When --out is omitted,
files land in $PADAMP_OUT_DIR (default: current directory).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from typing import Dict, List, Optional

import numpy as np

from . import harness
from .diagnostics import (
    DiagnosticsReport,
    momentum_norm_ratio_limit,
    simulate_norm_growth,
)
from .objectives import finite_difference_grad


def _default_out(filename: str, out_flag: Optional[str]) -> str:
    if out_flag:
        return out_flag
    return os.path.join(os.environ.get("PADAMP_OUT_DIR", "."), filename)


def _parse_sets(pairs: List[str]) -> Dict[str, str]:
    mapping: Dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping


def _load_config(args) -> harness.ExperimentConfig:
    mapping = harness.parse_config_file(args.config) if args.config else {}
    overrides = _parse_sets(args.set or [])
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.steps is not None:
        overrides["run.steps"] = str(args.steps)
        mapping.pop("run.epochs", None)
        overrides.pop("run.epochs", None)
    return harness.build_config(mapping, overrides)


def _print_run(result: harness.RunResult) -> None:
    s = result.summary
    acc = "n/a" if np.isnan(s["final_accuracy"]) else f"{s['final_accuracy']:.4f}"
    print(f"steps={len(result.records)} final_loss={s['final_loss']:.6g} "
          f"final_accuracy={acc} min_grad_norm_sq={s['min_grad_norm_sq']:.6g} "
          f"wall={s['wall_time_s']:.2f}s")
    print(result.report)


def _cmd_run(args) -> int:
    config = _load_config(args)
    out = _default_out("run.csv", args.out)
    if config.output_path is None or args.out:
        config = replace(config, output_path=out)
    result = harness.run(config)
    _print_run(result)
    print(f"telemetry: {config.output_path}")
    return 0


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    values = [_parse_value(v) for v in args.values.split(",") if v.strip()]
    out_dir = _default_out("sweep", args.out)
    results = harness.sweep(config, args.axis, values, out_dir=out_dir)
    for value, result in zip(values, results):
        s = result.summary
        print(f"{args.axis}={value}: final_loss={s['final_loss']:.6g} "
              f"diagnostics={'pass' if result.report.all_passed else 'FAIL'}")
    print(f"summary: {os.path.join(out_dir, 'summary.csv')}")
    return 0


def _make_updates(pattern: str, steps: int, cutoff: int, seed: int) -> np.ndarray:
    t = np.arange(1, steps + 1, dtype=np.float64)
    if pattern == "inverse-square":
        return 1.0 / t**2
    if pattern == "step":
        return np.where(t <= cutoff, 1.0, 0.0)
    if pattern == "random":
        rng = np.random.default_rng(seed)
        return rng.standard_normal(steps) ** 2 / t**2
    raise ValueError(f"unknown update pattern {pattern!r}")


def _cmd_norm_sim(args) -> int:
    betas = [float(b) for b in args.beta.split(",") if b.strip()]
    if not betas:
        raise ValueError("--beta needs at least one value")
    u = _make_updates(args.pattern, args.steps, args.cutoff, args.seed)
    out = _default_out("norm_sim.csv", args.out)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "t", "norm_sq_gd", "norm_sq_gdm", "ratio"])
        for beta in betas:
            trace = simulate_norm_growth(u, beta, args.eta, args.theta0_norm_sq)
            for row in trace:
                w.writerow([repr(beta), row.t, repr(row.norm_sq_gd),
                            repr(row.norm_sq_gdm), repr(row.ratio)])
            limit = momentum_norm_ratio_limit(beta)
            print(f"beta={beta}: final_ratio={trace[-1].ratio:.6f} "
                  f"limit={limit:.6f} "
                  f"rel_err={abs(trace[-1].ratio - limit) / limit:.3e}")
    print(f"trace: {out}")
    return 0


def _check_rows(cols: Dict[str, np.ndarray], limit: Optional[int]) -> DiagnosticsReport:
    if limit is not None:
        cols = {k: v[:limit] for k, v in cols.items()}
    report = DiagnosticsReport()
    t = cols["t"]
    report.add("t_strictly_increasing", float(np.min(np.diff(t))) if t.size > 1 else 1.0,
               t.size < 2 or bool(np.all(np.diff(t) > 0)))
    epoch = cols["epoch"]
    report.add("epoch_non_decreasing", 0.0,
               epoch.size < 2 or bool(np.all(np.diff(epoch) >= 0)))
    eta = cols["eta_t"]
    rise = float(np.max(np.diff(eta))) if eta.size > 1 else 0.0
    report.add("eta_max_increase", max(rise, 0.0), rise <= 0.0)
    p = cols["p_now"][np.isfinite(cols["p_now"])]
    p_rise = float(np.max(np.diff(p))) if p.size > 1 else 0.0
    report.add("p_max_increase", max(p_rise, 0.0), p_rise <= 0.0)

    must_be_finite = ["loss", "grad_norm_sq", "eta_t"]
    must_be_finite += [c for c in cols
                       if c.endswith("_param_norm") or c.endswith("_effective_step_norm")]
    n_bad = sum(int(np.sum(~np.isfinite(cols[c]))) for c in must_be_finite)
    report.add("non_finite_values", float(n_bad), n_bad == 0)

    for c in cols:
        if c.endswith("_projected"):
            ok = bool(np.all(np.isin(cols[c], (0.0, 1.0))))
            report.add(f"{c}_is_flag", 0.0 if ok else 1.0, ok)
        if c.endswith("_cos_sim"):
            vals = cols[c][np.isfinite(cols[c])]
            ok = vals.size == 0 or bool(np.all((vals >= 0.0) & (vals <= 1.0)))
            report.add(f"{c}_in_unit_interval", 0.0 if ok else 1.0, ok)

    resid = cols["lemma2_residual"][np.isfinite(cols["lemma2_residual"])]
    max_resid = float(resid.max()) if resid.size else 0.0
    report.add("lemma2_max_scaled_residual", max_resid, max_resid < 1e-10)
    margin = cols["lemma3_margin"][np.isfinite(cols["lemma3_margin"])]
    min_margin = float(margin.min()) if margin.size else 0.0
    report.add("lemma3_min_margin", min_margin, min_margin >= 0.0)

    grad = cols["grad_norm_sq"]
    running = np.minimum.accumulate(grad)
    run_rise = float(np.max(np.diff(running))) if running.size > 1 else 0.0
    report.add("running_min_max_increase", max(run_rise, 0.0), run_rise <= 0.0)
    return report


def _cmd_check(args) -> int:
    cols = harness.read_telemetry(args.csv)
    report = _check_rows(cols, args.steps)
    print(report)
    if args.out:
        report.to_csv(args.out)
        print(f"report: {args.out}")
    return 0 if report.all_passed else 1


def _cmd_grad_check(args) -> int:
    params_map = _parse_sets(args.param or [])
    objective = harness.build_objective(args.objective, params_map, args.seed)
    # The MLP default is looser: centered differences straddling a ReLU kink
    # carry truncation error the analytic subgradient does not have.
    tol = args.tol if args.tol is not None else (
        1e-4 if args.objective == "tiny_mlp" else 1e-6)
    if tol <= 0:
        raise ValueError("--tol must be positive")
    rng = np.random.default_rng(args.seed)
    report = DiagnosticsReport()
    for i in range(args.steps):
        params = objective.init_params(rng, scale=0.5)
        analytic = objective.grad(params)
        numeric = finite_difference_grad(objective, params)
        an = np.concatenate([analytic[p.name] for p in params])
        num = np.concatenate([numeric[p.name] for p in params])
        rel = float(np.linalg.norm(num - an) / max(np.linalg.norm(an), 1e-30))
        report.add(f"point_{i:02d}_rel_error", rel, rel < tol)
    print(report)
    if args.out:
        report.to_csv(args.out)
        print(f"report: {args.out}")
    return 0 if report.all_passed else 1


def _add_common(sub, steps_help: str, steps_default=None) -> None:
    sub.add_argument("--seed", type=int, default=None, help="base RNG seed")
    sub.add_argument("--steps", type=int, default=steps_default, help=steps_help)
    sub.add_argument("--out", default=None, help="output path (file or directory)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="padamp",
        description="Partially adaptive momentum optimizer with tangent projection: "
                    "training runs, sweeps, and math diagnostics.")
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="execute one configured training run")
    p_run.add_argument("--config", help="key=value config file with dotted keys")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
    _add_common(p_run, "override the step budget")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = subs.add_parser("sweep", help="run one config across parameter values")
    p_sweep.add_argument("--config", help="key=value config file with dotted keys")
    p_sweep.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override a config key (repeatable)")
    p_sweep.add_argument("--axis", required=True,
                         help="swept parameter (e.g. hp.p, schedule.eta0, seed)")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values for the axis")
    _add_common(p_sweep, "override the step budget")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_sim = subs.add_parser("norm-sim",
                            help="simulate plain vs momentum norm growth")
    p_sim.add_argument("--beta", default="0.5,0.9,0.99",
                       help="comma-separated momentum coefficients")
    p_sim.add_argument("--pattern", default="inverse-square",
                       choices=("inverse-square", "step", "random"),
                       help="update-norm sequence shape")
    p_sim.add_argument("--cutoff", type=int, default=200,
                       help="last nonzero step for the step pattern")
    p_sim.add_argument("--eta", type=float, default=1.0, help="step size")
    p_sim.add_argument("--theta0-norm-sq", type=float, default=1.0,
                       help="initial squared parameter norm")
    _add_common(p_sim, "simulated steps", steps_default=10_000)
    p_sim.set_defaults(func=_cmd_norm_sim)

    p_check = subs.add_parser("check",
                              help="validate a telemetry CSV against the "
                                   "lemma and schedule invariants")
    p_check.add_argument("--csv", required=True, help="telemetry CSV from a run")
    _add_common(p_check, "check only the first N rows")
    p_check.set_defaults(func=_cmd_check)

    p_grad = subs.add_parser("grad-check",
                             help="finite-difference audit of an objective")
    p_grad.add_argument("--objective", required=True,
                        help="objective name (quadratic, rosenbrock, "
                             "scale_invariant, logistic, tiny_mlp)")
    p_grad.add_argument("--param", action="append", metavar="KEY=VALUE",
                        help="objective parameter (repeatable)")
    p_grad.add_argument("--tol", type=float, default=None,
                        help="per-point relative-error threshold (default "
                             "1e-6, or 1e-4 for tiny_mlp)")
    _add_common(p_grad, "number of random points to audit", steps_default=20)
    p_grad.set_defaults(func=_cmd_grad_check)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None:
        args.seed = 0
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
