"""Campaign runner: one plant, one supervisor, one trace per seed.

A campaign cold-starts the squeezer through the full relock sequence, then
lets the supervisor run for ``duration_s`` simulated seconds. Multi-seed
campaigns fan out across worker processes; every worker owns its own plant
and controller and writes into its own directory, and the caller merges the
per-seed summaries.
"""

from __future__ import annotations

import json
import logging
import os
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from squeezr.autolock import RelockOutcome, Supervisor
from squeezr.characterize import (
    DutyCycleReport,
    TraceSummary,
    duty_cycle_report,
    summarize_trace,
)
from squeezr.config import CampaignConfig
from squeezr.exceptions import ConfigError
from squeezr.executor import CycleResult, PlantExecutor
from squeezr.model import OperatingPoint, measured_variances
from squeezr.plant import init_plant
from squeezr.trace import EventLog, Trace, TraceRecord

logger = logging.getLogger(__name__)

TRACE_FILE = "trace.csv"
EVENTS_FILE = "events.jsonl"
SUMMARY_FILE = "summary.json"
CAMPAIGN_FILE = "campaign.json"
COLD_START_EVENT = "cold-start"


@dataclass
class CampaignResult:
    """Everything one seeded campaign produced.

    ``wall_time_s`` is kept out of :meth:`summary` so file outputs stay
    byte-identical between runs.
    """

    config: CampaignConfig
    trace: Trace
    event_log: EventLog
    duty: DutyCycleReport
    summary_stats: TraceSummary
    outcomes: list[RelockOutcome] = field(default_factory=list)
    wall_time_s: float = 0.0
    output_dir: Path | None = None

    @property
    def relock_count(self) -> int:
        return self.summary_stats.relock_count

    def summary(self) -> dict[str, Any]:
        cfg = self.config
        successes = [o for o in self.outcomes if o.success]
        elapsed = [o.elapsed_s for o in successes]
        return {
            "name": cfg.name,
            "seed": cfg.seed,
            "mode": cfg.mode.cli_name,
            "duration_s": cfg.duration_s,
            "time_compression": cfg.time_compression,
            "baseline_squeezing_dB": baseline_squeezing_db(cfg),
            "summary": self.summary_stats.to_dict(),
            "duty_cycle": self.duty.to_dict(),
            "relocks": {
                "triggered": self.summary_stats.relock_count,
                "succeeded": len(successes),
                "failed": len(self.outcomes) - len(successes),
                "mean_elapsed_s": sum(elapsed) / len(elapsed) if elapsed else None,
                "max_elapsed_s": max(elapsed) if elapsed else None,
            },
            "config": cfg.to_dict(),
        }


def baseline_squeezing_db(config: CampaignConfig) -> float:
    """Squeezing magnitude of a perfectly aligned plant at its nominal pump."""
    plant = config.plant
    pair = measured_variances(plant.model, OperatingPoint(plant.nominal_pump_ratio))
    return pair.squeezing_level


def _record(result: CycleResult, pending: list[str]) -> TraceRecord:
    reading = result.reading
    labels = [*pending, *result.events]
    pending.clear()
    return TraceRecord(
        t=reading.t,
        squeezing_dB=reading.squeezing_db,
        antisqueezing_dB=reading.antisqueezing_db,
        locked=reading.valid,
        controller_phase=result.phase,
        applied_offset=result.applied_offset,
        pump_mW=reading.pump_mW,
        event=";".join(labels) or None,
    )


def run_campaign(
    config: CampaignConfig,
    on_cycle: Callable[[CycleResult], None] | None = None,
) -> CampaignResult:
    """Run one seeded campaign in memory.

    The plant starts with every lock disengaged; the supervisor's first
    sequence is labelled ``cold-start`` and does not count as a relock.
    """
    started = time.perf_counter()
    plant = init_plant(config.plant, config.seed)
    event_log = EventLog()
    supervisor = Supervisor(
        config.supervisor,
        n_modes=config.plant.n_modes_per_scan,
        event_log=event_log,
        chain=plant.chain,
    )
    executor = PlantExecutor(plant, record=False)
    trace = Trace()

    failure = executor.execute(supervisor.start_relock(plant.time, reason=COLD_START_EVENT))
    if failure is not None:
        supervisor.on_command_error(failure, plant.time)
    pending = supervisor.pop_events()

    def collect(result: CycleResult) -> None:
        trace.append(_record(result, pending))
        if on_cycle is not None:
            on_cycle(result)

    executor.run(supervisor, until=config.duration_s, on_cycle=collect)
    if len(trace) == 0:
        raise ConfigError(
            f"campaign.duration_s={config.duration_s} is shorter than one controller cycle"
        )

    wall = time.perf_counter() - started
    logger.info(
        "Campaign seed %d: %.1f h simulated in %.1f s (%d relocks)",
        config.seed,
        config.duration_s / 3600.0,
        wall,
        event_log.count("relock-triggered"),
    )
    return CampaignResult(
        config=config,
        trace=trace,
        event_log=event_log,
        duty=duty_cycle_report(trace),
        summary_stats=summarize_trace(trace),
        outcomes=list(supervisor.outcomes),
        wall_time_s=wall,
    )


def write_summary(data: dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path


def write_campaign(result: CampaignResult, output_dir: str | Path) -> Path:
    """Write trace.csv, events.jsonl and summary.json into ``output_dir``."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    result.trace.to_csv(output_dir / TRACE_FILE)
    result.event_log.write_jsonl(output_dir / EVENTS_FILE)
    write_summary(result.summary(), output_dir / SUMMARY_FILE)
    result.output_dir = output_dir
    return output_dir


def seed_dir(output_dir: str | Path, seed: int) -> Path:
    return Path(output_dir) / f"seed-{seed}"


def _run_seed(config: CampaignConfig, output_dir: str) -> dict[str, Any]:
    result = run_campaign(config)
    write_campaign(result, output_dir)
    return {
        "seed": config.seed,
        "output_dir": output_dir,
        "wall_time_s": result.wall_time_s,
        "summary": result.summary(),
    }


def default_workers() -> int:
    value = os.environ.get("SQUEEZR_WORKERS")
    if value:
        try:
            workers = int(value)
        except ValueError as e:
            raise ConfigError(f"SQUEEZR_WORKERS must be an integer, got '{value}'") from e
        if workers < 1:
            raise ConfigError(f"SQUEEZR_WORKERS must be >= 1, got {workers}")
        return workers
    return os.cpu_count() or 1


def run_seeds(
    config: CampaignConfig,
    seeds: Sequence[int],
    output_dir: str | Path,
    workers: int | None = None,
) -> list[dict[str, Any]]:
    """Run one campaign per seed, in parallel, each into ``seed-<n>/``.

    Returns the per-seed records in seed order, independent of completion
    order.
    """
    if not seeds:
        raise ConfigError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seeds must be distinct, got {list(seeds)}")
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    jobs = [(config.replace(seed=seed), str(seed_dir(output_dir, seed))) for seed in seeds]

    if workers == 1 or len(jobs) == 1:
        return [_run_seed(cfg, out) for cfg, out in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        futures = [pool.submit(_run_seed, cfg, out) for cfg, out in jobs]
        return [future.result() for future in futures]


def merge_seeds(records: Sequence[dict[str, Any]], output_dir: str | Path) -> Path:
    """Single-writer merge of per-seed summaries into ``campaign.json``."""
    per_seed = []
    for record in records:
        summary = record["summary"]
        duty = summary["duty_cycle"]
        per_seed.append(
            {
                "seed": record["seed"],
                "output_dir": record["output_dir"],
                "lock_fraction": duty["lock_fraction"],
                "duty_10dB": _duty_at(duty, 10.0),
                "mean_dB_of_dB": summary["summary"]["mean_dB_of_dB"],
                "relock_count": summary["summary"]["relock_count"],
            }
        )
    lock_fractions = [s["lock_fraction"] for s in per_seed]
    merged = {
        "seeds": [s["seed"] for s in per_seed],
        "per_seed": per_seed,
        "mean_lock_fraction": sum(lock_fractions) / len(lock_fractions),
        "total_relocks": sum(s["relock_count"] for s in per_seed),
        "config": records[0]["summary"]["config"],
    }
    return write_summary(merged, Path(output_dir) / CAMPAIGN_FILE)


def _duty_at(duty: dict[str, Any], threshold: float) -> float | None:
    for entry in duty["cumulative"]:
        if entry["threshold_dB"] == threshold:
            return entry["fraction"]
    return None
