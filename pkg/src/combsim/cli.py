"""Command-line surface: validate | solve | perturb | window | export.

Exit codes: 0 on success, 1 when hypothesis validation fails, 2 on runtime
errors.  Every solve or perturb run writes a manifest recording the scenario,
configuration, seeds and constants, so any number in the reports can be
reproduced from manifest + scenario + seed.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .errors import CombsimError, ScenarioError
from .harness import solve_scenario, validate_full
from .output import (
    plot_dependence,
    plot_global_monitors,
    plot_norms,
    plot_solution,
    write_dependence_csv,
    write_diagnostics_csv,
    write_json,
    write_solution_csvs,
    CSV_SCHEMA_VERSION,
)
from .scenario import SCENARIO_SCHEMA, export_scenario, load_scenario
from .wellposed import PerturbationPlan, perturb_initial, perturb_parameters

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _render_report(report) -> str:
    lines = []
    lines.append(f"passed: {report.passed}")
    lines.append(f"k1 = {report.k1:.8g}   k2 = {report.k2:.8g}   k3 = {report.k3:.8g}")
    if report.mu0 is not None:
        lines.append(f"mu0 = k1/(k2*(1+k3)) = {report.mu0:.8g}")
        lines.append(f"mu1 = k2/k1 = {report.mu1:.8g}")
    lines.append("beta per layer: " + ", ".join(f"{b:.8g}" for b in report.beta_per_layer))
    lines.append(f"beta = {report.beta:.8g}")
    lines.append("R per layer: " + ", ".join(f"{r:.8g}" for r in report.R_per_layer))
    lines.append(f"R_tilde = {report.R_tilde:.8g}")
    g0, g1, g2 = report.g_bounds
    lines.append(f"g bounds: |g| <= {g0:.8g}, |g'| <= {g1:.8g}, |g''| <= {g2:.8g}")
    if report.rho is not None:
        lines.append(f"rho = {report.rho:.8g}")
    if report.beta_tilde is not None:
        lines.append(f"beta_tilde (measured) = {report.beta_tilde:.8g}")
    if report.kappa is not None:
        lines.append(f"kappa (measured) = {report.kappa:.8g}")
    if report.mu_source is not None:
        lines.append(f"mu (measured) = {report.mu_source:.8g}")
    if report.violations:
        lines.append("violated clauses:")
        for v in report.violations:
            where = f"layer {v.layer + 1}, " if v.layer is not None else ""
            lines.append(f"  - {v.clause}: {where}{v.detail}")
    return "\n".join(lines)


def _render_window(window) -> str:
    lines = [
        f"rho = {window.rho:.8g}",
        f"M = {window.M:.8g}",
        f"R = {window.R:.8g}",
        f"T = {window.T:.8g}",
        f"beta = {window.beta:.8g}   beta_tilde = {window.beta_tilde:.8g}",
        f"mu = {window.mu:.8g}   kappa = {window.kappa:.8g}",
        "window bound terms:",
    ]
    for name, value in window.terms.items():
        lines.append(f"  {name} = {value:.8g}")
    lines.append(f"T' = {window.safety} * min(...) = {window.T_prime:.8g}")
    lines.append(f"contraction bound T'*kappa*exp(beta*T) = {window.contraction_bound:.8g}")
    return "\n".join(lines)


def _manifest(args, scn, config, extra: dict | None = None) -> dict:
    out = {
        "command": args.command,
        "scenario": scn.to_dict(),
        "config": {
            "dt": config.dt, "theta": config.theta, "tol": config.tol,
            "max_iter": config.max_iter, "horizon": config.horizon,
            "default_T": config.default_T, "seed": config.seed, "threads": config.threads,
        },
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "versions": {
            "combsim": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
    }
    if extra:
        out.update(extra)
    return out


def cmd_validate(args) -> int:
    scn = load_scenario(args.scenario)
    config = scn.solver_config(seed=args.seed, threads=args.threads)
    bundle = validate_full(scn, config, horizon=args.horizon)
    print(_render_report(bundle.report))
    if bundle.window_error:
        print(f"window: infeasible ({bundle.window_error})")
    if args.json:
        payload = bundle.report.to_dict()
        payload["window"] = bundle.window.to_dict() if bundle.window else None
        payload["window_error"] = bundle.window_error
        write_json(payload, Path(args.json))
        print(f"wrote {args.json}")
    return EXIT_OK if bundle.report.passed else EXIT_VALIDATION


def cmd_window(args) -> int:
    scn = load_scenario(args.scenario)
    config = scn.solver_config(seed=args.seed, threads=args.threads)
    bundle = validate_full(scn, config)
    if not bundle.report.passed:
        print(_render_report(bundle.report))
        return EXIT_VALIDATION
    if bundle.window is None:
        print(f"window infeasible: {bundle.window_error}", file=sys.stderr)
        return EXIT_RUNTIME
    print(_render_window(bundle.window))
    if args.json:
        write_json(bundle.window.to_dict(), Path(args.json))
        print(f"wrote {args.json}")
    return EXIT_OK


def cmd_solve(args) -> int:
    scn = load_scenario(args.scenario)
    config = scn.solver_config(seed=args.seed, threads=args.threads)
    t_begin = time.perf_counter()
    bundle = validate_full(scn, config, horizon=args.horizon)
    if not bundle.report.passed:
        print(_render_report(bundle.report))
        if not args.force:
            print("validation failed; rerun with --force to solve anyway", file=sys.stderr)
            return EXIT_VALIDATION
        print("WARNING: validation failed, continuing because of --force", file=sys.stderr)
    traj, extras = solve_scenario(bundle, args.method, horizon=args.horizon)
    out_dir = Path(args.out)
    paths = write_solution_csvs(traj, out_dir, stride=args.stride)
    gronwall = extras.get("gronwall_bound")
    paths.append(write_diagnostics_csv(traj, out_dir, gronwall_bound=gronwall))
    paths.append(plot_solution(traj, out_dir / "solution.png"))
    paths.append(plot_norms(traj, out_dir / "norms.png", gronwall_bound=gronwall))
    if "global_result" in extras:
        paths.append(plot_global_monitors(extras["global_result"], out_dir / "monitors.png"))
    runtime = time.perf_counter() - t_begin
    report_payload = bundle.report.to_dict()
    manifest = _manifest(args, scn, config, {
        "method": args.method,
        "constants": report_payload,
        "window": extras.get("window"),
        "picard": extras.get("picard"),
        "windows": extras.get("windows"),
        "outputs": [p.name for p in paths],
        "runtime_seconds": runtime,
        "stride": args.stride,
    })
    write_json(manifest, out_dir / "manifest.json")
    print(f"method={args.method} times={len(traj.times)} runtime={runtime:.2f}s")
    print(f"wrote {out_dir}/ ({', '.join(sorted(p.name for p in paths))}, manifest.json)")
    return EXIT_OK


def cmd_perturb(args) -> int:
    scn = load_scenario(args.scenario)
    config = scn.solver_config(seed=args.seed, threads=args.threads)
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan_data = yaml.safe_load(fh)
    plan = PerturbationPlan.from_dict(plan_data, origin=str(args.plan))
    t_begin = time.perf_counter()
    if plan.target == "initial_data":
        report = perturb_initial(scn, plan, horizon=args.horizon, config=config)
    else:
        report = perturb_parameters(scn, plan, horizon=args.horizon, config=config)
    out_dir = Path(args.out)
    csv_path = write_dependence_csv(report, out_dir)
    fig_path = plot_dependence(report, out_dir / "dependence.png")
    runtime = time.perf_counter() - t_begin
    manifest = _manifest(args, scn, config, {
        "plan": {
            "target": plan.target, "direction": plan.direction_spec(),
            "epsilons": list(plan.epsilons), "layer": plan.layer, "driver": plan.driver,
            "include_zero_control": plan.include_zero_control,
        },
        "dependence": report.to_dict(),
        "outputs": [csv_path.name, fig_path.name],
        "runtime_seconds": runtime,
    })
    write_json(manifest, out_dir / "manifest.json")
    print(f"target={report.target} fitted kappa~ = {report.fitted_kappa_tilde:.6g} "
          f"spread={report.ratio_spread:.3g} verdict={'pass' if report.verdict else 'fail'}")
    print(f"wrote {out_dir}/ (dependence.csv, dependence.png, manifest.json)")
    return EXIT_OK


def cmd_export(args) -> int:
    if args.schema:
        text = json.dumps(SCENARIO_SCHEMA, indent=2, sort_keys=True)
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
            print(f"wrote {args.out}")
        else:
            print(text)
        return EXIT_OK
    scn = load_scenario(args.scenario)
    text = export_scenario(scn)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="combsim",
        description="Multi-layer combustion front solver and well-posedness harness",
    )
    parser.add_argument("--version", action="version", version=f"combsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("scenario", help="scenario YAML file")
        p.add_argument("--seed", type=int, default=0, help="seed for sampling-based constants")
        p.add_argument("--threads", type=int, default=1, help="worker threads for layer-parallel stages")
        p.add_argument("--horizon", type=float, default=None, help="override the scenario horizon")

    p = sub.add_parser("validate", help="run hypothesis checks and print every constant")
    common(p)
    p.add_argument("--json", default=None, help="also write the machine-readable report here")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("window", help="print the contraction-window constants and T'")
    common(p)
    p.add_argument("--json", default=None, help="also write the window JSON here")
    p.set_defaults(fn=cmd_window)

    p = sub.add_parser("solve", help="solve and write CSVs, figures, and a manifest")
    common(p)
    p.add_argument("--method", choices=("picard", "mol", "global"), default="global")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stride", type=int, default=None, help="time stride for solution CSVs")
    p.add_argument("--force", action="store_true", help="solve even if validation fails")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("perturb", help="continuous-dependence experiment from a plan file")
    common(p)
    p.add_argument("plan", help="perturbation plan YAML file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_perturb)

    p = sub.add_parser("export", help="write the canonical form of a scenario (or the schema)")
    p.add_argument("scenario", nargs="?", default=None, help="scenario YAML file")
    p.add_argument("--out", default=None, help="output path (stdout if omitted)")
    p.add_argument("--schema", action="store_true", help="emit the scenario JSON schema instead")
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "export" and not args.schema and args.scenario is None:
        parser.error("export needs a scenario file or --schema")
    try:
        return args.fn(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except CombsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
