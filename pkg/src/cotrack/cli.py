"""Command-line front end: simulate, sweep, gen, metrics.

Typical pipeline:

    cotrack gen --out work --devices 16 --seed 7
    cotrack simulate --scenario work/scenario.json --out work/run
    cotrack sweep --scenario work/scenario.json --out work/sweep \
        --lowers 0,20,40,80 --uppers 1000000 --jobs 4

All outputs are plot-ready CSV; every file is written atomically.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .collab import CollabConfig
from .errors import CotrackError, ScenarioError
from .fileio import atomic_path
from .metrics import MetricsReport, improvement_summary, write_cdf_csv, write_metrics_csv
from .replay import (
    Scenario,
    SyntheticParams,
    generate_synthetic,
    load_run_record,
    run,
    save_scenario,
    scenario_from_json,
    sweep,
    write_run_csvs,
)

SWEEP_CSV_HEADER = ["lower", "upper", "mean_q3_m", "mean_dfd_m", "collaborations", "location_updates"]


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    simulate_p = sub.add_parser("simulate", help="replay a scenario and export run + metrics CSVs")
    simulate_p.add_argument("--scenario", required=True, type=Path, help="scenario JSON file")
    simulate_p.add_argument("--out", required=True, type=Path, help="output directory")
    simulate_p.add_argument("--lower", type=int, help="override the lower collaboration threshold")
    simulate_p.add_argument("--upper", type=int, help="override the upper collaboration threshold")
    simulate_p.add_argument("--cutoff", type=float, help="override the proximity cutoff (meters)")
    simulate_p.add_argument("--seed", type=int, help="override the scenario seed")
    simulate_p.set_defaults(func=_cmd_simulate)

    sweep_p = sub.add_parser("sweep", help="replay once per threshold pair and export the grid")
    sweep_p.add_argument("--scenario", required=True, type=Path)
    sweep_p.add_argument("--out", required=True, type=Path)
    sweep_p.add_argument("--lowers", required=True, type=_int_list, help="comma-separated lower thresholds")
    sweep_p.add_argument("--uppers", required=True, type=_int_list, help="comma-separated upper thresholds")
    sweep_p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sweep_p.add_argument("--cutoff", type=float)
    sweep_p.add_argument("--seed", type=int)
    sweep_p.set_defaults(func=_cmd_sweep)

    gen_p = sub.add_parser("gen", help="generate a synthetic scenario JSON")
    gen_p.add_argument("--out", required=True, type=Path, help="directory for scenario.json")
    gen_p.add_argument("--devices", type=int, default=16)
    gen_p.add_argument("--noise-gyro", type=float, default=0.0006, help="gyro bias sigma (rad/s)")
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--steps", type=int, default=256, help="steps per device")
    gen_p.add_argument("--stagger", type=float, default=5000.0, help="start offset between devices (ms)")
    gen_p.add_argument("--shape", choices=("grid", "corridor"), default="grid")
    gen_p.set_defaults(func=_cmd_gen)

    metrics_p = sub.add_parser("metrics", help="recompute metrics from an existing run directory")
    metrics_p.add_argument("--out", required=True, type=Path, help="run directory to rescore")
    metrics_p.set_defaults(func=_cmd_metrics)

    return parser


def _load_scenario_diagnostic(path: Path) -> Scenario:
    """Load a scenario file, turning failures into user-facing diagnostics."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return scenario_from_json(doc, base_dir=path.parent)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}", field=exc.field) from exc


def _apply_overrides(scenario: Scenario, args: argparse.Namespace) -> Scenario:
    if getattr(args, "lower", None) is not None or getattr(args, "upper", None) is not None:
        lower = args.lower if args.lower is not None else scenario.collab.lower
        upper = args.upper if args.upper is not None else scenario.collab.upper
        try:
            scenario = replace(scenario, collab=CollabConfig(lower=lower, upper=upper))
        except ValueError as exc:
            raise ScenarioError(str(exc), field="collab") from exc
    if getattr(args, "cutoff", None) is not None:
        scenario = replace(scenario, proximity_cutoff_m=args.cutoff)
    if getattr(args, "seed", None) is not None:
        scenario = replace(scenario, seed=args.seed)
    return scenario


def _improvement_line(report: MetricsReport) -> str:
    n = report.device_count
    return (
        f"collaboration improved q3 for {report.q3_improved_count}/{n} devices, "
        f"DFD for {report.dfd_improved_count}/{n}; "
        f"mean q3 improvement {report.mean_improvement * 100:.1f}% "
        f"(pooled {report.pooled_improvement * 100:.1f}%)"
    )


def _write_report(report: MetricsReport, outdir: Path) -> None:
    write_metrics_csv(report, outdir / "metrics.csv")
    for device in report.devices:
        write_cdf_csv(device.error_samples_m, outdir / f"cdf_{device.device_id}.csv")


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _apply_overrides(_load_scenario_diagnostic(args.scenario), args)
    record = run(scenario)
    args.out.mkdir(parents=True, exist_ok=True)
    write_run_csvs(record, args.out)
    report = improvement_summary(record)
    _write_report(report, args.out)
    print(_improvement_line(report))
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    scenario = _apply_overrides(_load_scenario_diagnostic(args.scenario), args)
    if args.jobs < 1:
        raise ScenarioError("--jobs must be >= 1", field="jobs")
    cells = sweep(scenario, args.lowers, args.uppers, jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    with atomic_path(args.out / "sweep.csv") as tmp, open(tmp, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_CSV_HEADER)
        for cell in sorted(cells, key=lambda c: (c.lower, c.upper)):
            mean_q3 = float(np.mean([d.q3_aoe_m for d in cell.report.devices]))
            mean_dfd = float(np.mean([d.dfd_aoe_m for d in cell.report.devices]))
            writer.writerow(
                [cell.lower, cell.upper, mean_q3, mean_dfd, cell.collaborations, cell.location_updates]
            )
    print(f"swept {len(cells)} threshold pairs -> {args.out / 'sweep.csv'}")
    return 0


def _cmd_gen(args: argparse.Namespace) -> int:
    try:
        params = SyntheticParams(
            device_count=args.devices,
            steps_per_device=args.steps,
            stagger_ms=args.stagger,
            path_shape=args.shape,
            gyro_bias_sigma=args.noise_gyro,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    scenario = generate_synthetic(params)
    args.out.mkdir(parents=True, exist_ok=True)
    target = args.out / "scenario.json"
    save_scenario(scenario, target)
    print(f"wrote {target} ({len(scenario.devices)} devices, seed {scenario.seed})")
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    try:
        record = load_run_record(args.out)
    except (OSError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc
    report = improvement_summary(record)
    _write_report(report, args.out)
    print(_improvement_line(report))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CotrackError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
