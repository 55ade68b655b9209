from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from squeezr.campaign import (
    SUMMARY_FILE,
    merge_seeds,
    run_campaign,
    run_seeds,
    write_campaign,
)
from squeezr.characterize import (
    DEFAULT_SWEEP_RATIOS,
    DEFAULT_SWEEP_SIGMA_DB,
    DEFAULT_THRESHOLDS_DB,
    duty_cycle_report,
    fit_pump_sweep,
    pump_sweep_curve,
    read_sweep_csv,
    summarize_trace,
    synthesize_pump_sweep,
    write_sweep_csv,
)
from squeezr.config import CampaignConfig, load_config
from squeezr.exceptions import ConfigError, SchemaError
from squeezr.model import ModelParams, consistency_report
from squeezr.store import RunStore, get_db_path
from squeezr.trace import Trace

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"{what} must be comma-separated numbers, got '{text}'") from e


def _parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                low, high = (int(v) for v in part.split("-", 1))
                seeds.extend(range(low, high + 1))
            else:
                seeds.append(int(part))
        except ValueError as e:
            raise ConfigError(f"--seeds must look like '1,2,5-8', got '{text}'") from e
    return seeds


def _dump(data: Any) -> str:
    return json.dumps(data, indent=2)


def _write_json(data: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(data) + "\n")
    return path


def _model_from_args(
    args: argparse.Namespace, config: CampaignConfig | None = None
) -> ModelParams:
    config = config or load_config(args.config, args.set)
    model = config.plant.model
    changes = {}
    if getattr(args, "eta", None) is not None:
        changes["total_efficiency"] = args.eta
    if getattr(args, "jitter", None) is not None:
        changes["phase_jitter"] = args.jitter
    try:
        return model.replace(**changes)
    except ValueError as e:
        raise ConfigError(f"model: {e}") from e


# -- simulate -----------------------------------------------------------------


def _simulate_config(args: argparse.Namespace) -> CampaignConfig:
    extra: dict[str, dict[str, Any]] = {}
    if args.mode is not None:
        extra.setdefault("supervisor", {})["mode"] = args.mode
    campaign: dict[str, Any] = {}
    if args.hours is not None:
        campaign["duration_s"] = args.hours * 3600.0
    if args.seed is not None:
        campaign["seed"] = args.seed
    if args.output is not None:
        campaign["output_dir"] = args.output
    if args.name is not None:
        campaign["name"] = args.name
    if campaign:
        extra["campaign"] = campaign
    return load_config(args.config, args.set, extra=extra)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _simulate_config(args)
    output_dir = Path(config.output_dir)
    store = RunStore(
        args.state_db_path if args.state_db_path else get_db_path(output_dir)
    )
    print(
        f"\n  Simulating {config.duration_s / 3600.0:g} h of {config.mode.cli_name} "
        f"({config.name})"
    )

    if args.seeds:
        seeds = _parse_seeds(args.seeds)
        records = run_seeds(config, seeds, output_dir, workers=args.workers)
        for record in records:
            store.record_run(
                record["summary"], record["output_dir"], record["wall_time_s"]
            )
            _print_seed(record["summary"], record["wall_time_s"])
        merged = merge_seeds(records, output_dir)
        print(f"\n  ✓ {len(records)} seeds merged into {merged}")
        return EXIT_OK

    result = run_campaign(config)
    write_campaign(result, output_dir)
    summary = result.summary()
    store.record_run(summary, output_dir, result.wall_time_s)
    _print_seed(summary, result.wall_time_s)
    print(f"  ✓ Wrote {output_dir / SUMMARY_FILE}")
    if args.json:
        print(_dump(summary))
    return EXIT_OK


def _print_seed(summary: dict[str, Any], wall_time_s: float) -> None:
    duty = summary["duty_cycle"]
    stats = summary["summary"]
    duty_10 = next(
        (c["fraction"] for c in duty["cumulative"] if c["threshold_dB"] == 10.0), None
    )
    mean = stats["mean_dB_of_dB"]
    line = (
        f"  ✓ seed {summary['seed']}: locked {duty['lock_fraction']:.2%}, "
        f"relocks {stats['relock_count']}"
    )
    if duty_10 is not None:
        line += f", duty(10 dB) {duty_10:.2%}"
    if mean is not None:
        line += f", mean {mean:.2f} dB"
    print(line + f" [{wall_time_s:.1f} s wall]")


# -- fit ----------------------------------------------------------------------


def cmd_fit(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.set)
    model = _model_from_args(args, config)
    points = read_sweep_csv(args.sweep)
    result = fit_pump_sweep(
        points,
        decay_rate=model.decay_rate,
        p_thr_mW=model.threshold_power * 1e3,
        fit_p_thr=args.fit_p_thr,
    )
    fitted = model.replace(
        total_efficiency=result.eta_total, phase_jitter=result.theta_jitter
    )
    output_dir = Path(args.output) if args.output else Path(args.sweep).parent
    report = {
        "fit": result.to_dict(),
        "sweep": str(args.sweep),
        "n_points": len(points),
        "config": config.to_dict(),
    }
    fit_path = _write_json(report, output_dir / "fit.json")
    curve_path = output_dir / "fit_curve.csv"
    pump_sweep_curve(fitted).to_csv(
        curve_path, index=False, float_format="%.10g", lineterminator="\n"
    )
    if args.json:
        print(_dump(report))
    else:
        lo, hi = result.interval("eta_total")
        print(f"\n  eta_total     = {result.eta_total:.4f} ± {result.eta_total_sigma:.4f}")
        print(
            f"  theta_jitter  = {result.theta_jitter * 1e3:.3f} ± "
            f"{result.theta_jitter_sigma * 1e3:.3f} mrad"
        )
        if not result.p_thr_fixed:
            print(f"  P_thr         = {result.p_thr_mW:.1f} mW")
        print(f"  95% eta range = [{lo:.4f}, {hi:.4f}]")
        print(f"\n  ✓ Wrote {fit_path} and {curve_path}")
    return EXIT_OK


# -- analyze ------------------------------------------------------------------


def cmd_analyze(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.set)
    thresholds = (
        _parse_floats(args.thresholds, "--thresholds")
        if args.thresholds
        else DEFAULT_THRESHOLDS_DB
    )
    trace = Trace.from_csv(args.trace)
    report = duty_cycle_report(trace, thresholds_dB=thresholds, bin_dB=args.bin)
    summary = summarize_trace(trace)
    output_dir = Path(args.output) if args.output else Path(args.trace).parent
    data = {
        "duty_cycle": report.to_dict(),
        "summary": summary.to_dict(),
        "config": config.to_dict(),
    }
    duty_path = _write_json(data, output_dir / "duty.json")
    hist_path = output_dir / "histogram.csv"
    report.histogram_frame().to_csv(
        hist_path, index=False, float_format="%.10g", lineterminator="\n"
    )
    if args.json:
        print(_dump(data))
    else:
        print(f"\n  Locked {report.lock_fraction:.2%} of {report.total_duration:.0f} s")
        for threshold, fraction in report.cumulative:
            print(f"  ≥ {threshold:5.2f} dB: {fraction:7.2%}")
        print(f"  Relocks: {summary.relock_count}")
        print(f"\n  ✓ Wrote {duty_path} and {hist_path}")
    return EXIT_OK


# -- consistency --------------------------------------------------------------


def cmd_consistency(args: argparse.Namespace) -> int:
    report = consistency_report(_model_from_args(args))
    if args.json:
        print(_dump(report.to_dict()))
    else:
        print()
        for check in report.checks:
            mark = "✓" if check.passed else "✗"
            note = "" if check.enforced else " (informational)"
            print(
                f"  {mark} {check.name}: {check.value:.6g} {check.unit} "
                f"(published {check.published_value:.6g}, accepted "
                f"[{check.lower:.6g}, {check.upper:.6g}]){note}"
            )
        print(f"\n  {'All enforced checks pass' if report.passed else 'FAILED'}")
    return EXIT_OK if report.passed else EXIT_FAILURE


# -- sweep --------------------------------------------------------------------


def cmd_sweep(args: argparse.Namespace) -> int:
    model = _model_from_args(args)
    ratios = (
        _parse_floats(args.ratios, "--ratios") if args.ratios else DEFAULT_SWEEP_RATIOS
    )
    try:
        points = synthesize_pump_sweep(
            model, ratios=ratios, sigma_dB=args.sigma, seed=args.seed
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    path = Path(args.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(points, path)
    print(f"  ✓ Wrote {len(points)} sweep points to {path}")
    return EXIT_OK


# -- runs ---------------------------------------------------------------------


def cmd_runs(args: argparse.Namespace) -> int:
    db_path = Path(args.state_db_path) if args.state_db_path else get_db_path(args.output)
    if not db_path.exists():
        print(f"No run ledger at {db_path}")
        return EXIT_OK
    runs = RunStore(db_path).list_runs(args.campaign)
    if args.json:
        print(_dump(runs))
        return EXIT_OK
    if not runs:
        print("No runs recorded")
        return EXIT_OK
    for run in runs:
        fraction = run["lock_fraction"]
        locked = "n/a" if fraction is None else f"{fraction:.2%}"
        print(
            f"  {run['created_at'][:19]}  {run['campaign']:<12} seed {run['seed']:<5} "
            f"{run['mode']:<12} locked {locked:>7}  relocks {run['relock_count']}"
        )
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", "-c", help="Path to an INI config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one config value (can be repeated). Example: --set plant.dt=0.05",
    )


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    _add_config_args(parser)
    parser.add_argument("--eta", type=float, help="Override the total detection efficiency")
    parser.add_argument("--jitter", type=float, help="Override the phase jitter (rad)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="squeezr",
        description="Virtual squeezed-light lab: simulate, fit and analyze campaigns",
    )
    parser.add_argument(
        "--verbose", "-v", action="count", default=0, help="More logging (-vv for debug)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Run a simulated campaign")
    _add_config_args(simulate)
    simulate.add_argument("--mode", help="auto-relock or drift-comp")
    simulate.add_argument("--hours", type=float, help="Simulated duration in hours")
    simulate.add_argument("--seed", type=int, help="Random seed of the plant")
    simulate.add_argument(
        "--seeds", help="Run one campaign per seed in parallel. Example: --seeds 1,2,5-8"
    )
    simulate.add_argument(
        "--workers",
        type=int,
        help="Worker processes for --seeds (default: SQUEEZR_WORKERS or CPU count)",
    )
    simulate.add_argument("--output", "-o", help="Output directory (default: runs)")
    simulate.add_argument("--name", help="Campaign label in the run ledger")
    simulate.add_argument(
        "--state-db-path",
        help="Path to the SQLite run ledger. Overrides SQUEEZR_DB_PATH env var.",
    )
    simulate.add_argument("--json", action="store_true", help="Print the summary as JSON")
    simulate.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="Fit efficiency and phase jitter to a pump sweep")
    fit.add_argument("sweep", help="Sweep CSV with pump_ratio, v_minus_dB, v_plus_dB")
    _add_model_args(fit)
    fit.add_argument("--fit-p-thr", action="store_true", help="Also fit the threshold power")
    fit.add_argument("--output", "-o", help="Output directory (default: next to the CSV)")
    fit.add_argument("--json", action="store_true", help="Print the fit as JSON")
    fit.set_defaults(func=cmd_fit)

    analyze = sub.add_parser("analyze", help="Duty cycle and histogram of a trace")
    analyze.add_argument("trace", help="Trace CSV written by simulate")
    _add_config_args(analyze)
    analyze.add_argument(
        "--thresholds", help="Comma-separated squeezing thresholds in dB"
    )
    analyze.add_argument(
        "--bin", type=float, default=0.1, help="Histogram bin width in dB (default: 0.1)"
    )
    analyze.add_argument("--output", "-o", help="Output directory (default: next to the CSV)")
    analyze.add_argument("--json", action="store_true", help="Print the report as JSON")
    analyze.set_defaults(func=cmd_analyze)

    consistency = sub.add_parser(
        "consistency", help="Check the model against the published numbers"
    )
    _add_model_args(consistency)
    consistency.add_argument("--json", action="store_true", help="Print the report as JSON")
    consistency.set_defaults(func=cmd_consistency)

    sweep = sub.add_parser("sweep", help="Write a synthetic pump sweep CSV")
    _add_model_args(sweep)
    sweep.add_argument("--output", "-o", default="sweep.csv", help="CSV path")
    sweep.add_argument("--ratios", help="Comma-separated pump ratios")
    sweep.add_argument(
        "--sigma",
        type=float,
        default=DEFAULT_SWEEP_SIGMA_DB,
        help=f"Noise per point in dB (default: {DEFAULT_SWEEP_SIGMA_DB})",
    )
    sweep.add_argument("--seed", type=int, default=0, help="Noise seed (default: 0)")
    sweep.set_defaults(func=cmd_sweep)

    runs = sub.add_parser("runs", help="List recorded campaign runs")
    runs.add_argument("--output", "-o", default="runs", help="Output directory of simulate")
    runs.add_argument(
        "--state-db-path",
        help="Path to the SQLite run ledger. Overrides SQUEEZR_DB_PATH env var.",
    )
    runs.add_argument("--campaign", help="Only runs of this campaign")
    runs.add_argument("--json", action="store_true", help="Print runs as JSON")
    runs.set_defaults(func=cmd_runs)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError) as e:
        print(f"Error: {e}")
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("\nInterrupted")
        return EXIT_FAILURE
    except Exception as e:
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        print(f"Error: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
