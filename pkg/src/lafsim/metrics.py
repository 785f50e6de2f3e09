"""Delay and throughput statistics for simulation runs, plus report files."""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .simulation import SimulationResult


@dataclass
class Metrics:
    n_arrived: int
    n_finished: int
    n_measured: int              # finished and arrived after the warmup
    mean_delay: float
    max_delay: float
    p95_delay: float
    std_delay: float
    throughput: float            # measured departures per hour of demand time
    service_rate: float          # departures per hour of actual service time
    mean_horizon: float
    per_od: dict = field(default_factory=dict)   # "o-d" -> {count, mean_delay}


def _percentile(values: list[float], q: float) -> float:
    if not values:
        return math.nan
    s = sorted(values)
    idx = min(len(s) - 1, max(0, math.ceil(q * len(s)) - 1))
    return s[idx]


def compute_metrics(result: SimulationResult) -> Metrics:
    cfg = result.config
    finished = result.finished_records
    measured = [r for r in finished if r.arrival.time >= cfg.warmup]
    delays = [r.delay for r in measured]
    span = max(cfg.sim_duration - cfg.warmup, 1e-9)
    departs = sorted(r.departed for r in finished)
    if len(departs) >= 2 and departs[-1] > departs[0]:
        service = 3600.0 * (len(departs) - 1) / (departs[-1] - departs[0])
    else:
        service = math.nan
    per_od: dict[str, dict] = {}
    for r in measured:
        key = f"{r.arrival.origin}-{r.arrival.destination}"
        bucket = per_od.setdefault(key, {"count": 0, "mean_delay": 0.0})
        bucket["count"] += 1
        bucket["mean_delay"] += r.delay
    for bucket in per_od.values():
        bucket["mean_delay"] = round(bucket["mean_delay"] / bucket["count"], 4)
    horizons = [T for _, T in result.horizon_history]
    return Metrics(
        n_arrived=len(result.records),
        n_finished=len(finished),
        n_measured=len(measured),
        mean_delay=statistics.fmean(delays) if delays else math.nan,
        max_delay=max(delays) if delays else math.nan,
        p95_delay=_percentile(delays, 0.95),
        std_delay=statistics.stdev(delays) if len(delays) > 1 else 0.0,
        throughput=3600.0 * len(measured) / span,
        service_rate=service,
        mean_horizon=statistics.fmean(horizons) if horizons else math.nan,
        per_od=dict(sorted(per_od.items())),
    )


def write_vehicle_csv(result: SimulationResult, path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["vehicle", "origin", "destination", "arrival",
                    "admitted", "entry_lane", "departed", "delay"])
        for vid in sorted(result.records):
            r = result.records[vid]
            w.writerow([vid, r.arrival.origin, r.arrival.destination,
                        round(r.arrival.time, 3),
                        r.admitted, r.entry_lane,
                        None if r.departed is None else round(r.departed, 3),
                        None if r.delay is None else round(r.delay, 4)])


def write_event_log(result: SimulationResult, path: Path) -> None:
    with open(path, "w") as f:
        for ev in result.events:
            f.write(json.dumps(ev) + "\n")


def _plots(result: SimulationResult, metrics: Metrics, outdir: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    delays = [r.delay for r in result.finished_records
              if r.arrival.time >= result.config.warmup]
    fig, ax = plt.subplots(figsize=(6, 4))
    if delays:
        ax.hist(delays, bins=30, edgecolor="black")
    ax.set_xlabel("delay [s]")
    ax.set_ylabel("vehicles")
    ax.set_title("vehicle delay distribution")
    fig.tight_layout()
    fig.savefig(outdir / "delays.png", dpi=120)
    plt.close(fig)

    if result.horizon_history:
        ts, hs = zip(*result.horizon_history)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.step(ts, hs, where="post")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("horizon [steps]")
        ax.set_title("adaptive planning horizon")
        fig.tight_layout()
        fig.savefig(outdir / "horizon.png", dpi=120)
        plt.close(fig)


def write_report(result: SimulationResult, outdir: str | Path,
                 plots: bool = True) -> Metrics:
    """Summary JSON, per-vehicle CSV, event log and plots for one run."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    metrics = compute_metrics(result)
    summary = asdict(metrics)
    summary["aborted"] = result.aborted
    summary["message"] = result.message
    summary["mode"] = result.config.mode
    summary["demand_factor"] = result.config.demand_factor
    summary["seed"] = result.config.seed
    with open(outdir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, allow_nan=True)
    write_vehicle_csv(result, outdir / "vehicles.csv")
    write_event_log(result, outdir / "events.jsonl")
    if plots:
        _plots(result, metrics, outdir)
    return metrics
