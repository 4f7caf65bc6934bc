"""Per-frame series, run summaries, cross-run aggregation and CSV output.

Column reference
----------------
series.csv
    ``scheduler, threshold, parents, packets_per_burst, frame,
    total_queue_fill, packets_reached_root_cumulative, allocated_rx_cells,
    charge_consumed_cumulative`` -- per-frame means over the runs of a
    scenario.  Charge is in microcoulombs.
aggregate.csv
    ``scheduler, threshold, parents, packets_per_burst, metric, n_runs,
    mean, ci_low, ci_high`` -- one row per scalar metric; the interval is the
    normal approximation (empty when fewer than two runs).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

SERIES_COLUMNS = (
    "total_queue_fill",
    "packets_reached_root_cumulative",
    "allocated_rx_cells",
    "charge_consumed_cumulative",
)
SCENARIO_COLUMNS = ("scheduler", "threshold", "parents", "packets_per_burst")
SCALAR_METRICS = (
    "time_last_packet",
    "max_end_to_end_latency",
    "total_charge",
    "created",
    "delivered",
    "dropped_overflow",
    "dropped_retry",
    "collisions",
    "requests",
)


@dataclass
class MetricsSeries:
    total_queue_fill: list[int] = field(default_factory=list)
    packets_reached_root_cumulative: list[int] = field(default_factory=list)
    allocated_rx_cells: list[int] = field(default_factory=list)
    charge_consumed_cumulative: list[float] = field(default_factory=list)

    def append(self, queue_fill: int, delivered: int, cells: int, charge: float) -> None:
        self.total_queue_fill.append(queue_fill)
        self.packets_reached_root_cumulative.append(delivered)
        self.allocated_rx_cells.append(cells)
        self.charge_consumed_cumulative.append(charge)

    def __len__(self) -> int:
        return len(self.total_queue_fill)


@dataclass
class RunSummary:
    series: MetricsSeries
    time_last_packet: float
    max_end_to_end_latency: float
    total_charge: float
    created: int
    delivered: int
    queued: int
    dropped_overflow: int
    dropped_retry: int
    collisions: int = 0
    requests: int = 0
    relocations: int = 0
    undelivered: int = 0
    trace: list | None = None
    events: list | None = None

    @property
    def dropped(self) -> int:
        return self.dropped_overflow + self.dropped_retry

    def conserved(self) -> bool:
        return self.created == self.delivered + self.queued + self.dropped

    def scalars(self) -> dict[str, float]:
        return {m: float(getattr(self, m)) for m in SCALAR_METRICS}


@dataclass(frozen=True)
class MetricStat:
    mean: float
    ci_low: float
    ci_high: float

    @property
    def ci_defined(self) -> bool:
        return not math.isnan(self.ci_low)


@dataclass
class AggregateReport:
    scenario: dict[str, object]
    n_runs: int
    stats: dict[str, MetricStat]
    series_mean: dict[str, list[float]]

    @property
    def n_frames(self) -> int:
        return len(next(iter(self.series_mean.values()), []))


def mean_ci(values: Sequence[float], confidence: float = 0.95) -> MetricStat:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if len(arr) < 2:
        return MetricStat(mean, math.nan, math.nan)
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    half = float(z * arr.std(ddof=1) / math.sqrt(len(arr)))
    return MetricStat(mean, mean - half, mean + half)


def aggregate(
    summaries: Sequence[RunSummary],
    confidence: float = 0.95,
    scenario: dict[str, object] | None = None,
) -> AggregateReport:
    if not summaries:
        raise ValueError("nothing to aggregate")
    scalars = {m: [s.scalars()[m] for s in summaries] for m in SCALAR_METRICS}
    n_frames = min(len(s.series) for s in summaries)
    series_mean = {
        col: [
            float(np.mean([getattr(s.series, col)[f] for s in summaries]))
            for f in range(n_frames)
        ]
        for col in SERIES_COLUMNS
    }
    return AggregateReport(
        scenario=dict(scenario or {}),
        n_runs=len(summaries),
        stats={m: mean_ci(v, confidence) for m, v in scalars.items()},
        series_mean=series_mean,
    )


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def emit_csv(
    reports: AggregateReport | Sequence[AggregateReport], out_dir: str | Path
) -> tuple[Path, Path]:
    """Write ``series.csv`` and ``aggregate.csv`` under ``out_dir``."""
    if isinstance(reports, AggregateReport):
        reports = [reports]
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        series_path, agg_path = out / "series.csv", out / "aggregate.csv"
        with series_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*SCENARIO_COLUMNS, "frame", *SERIES_COLUMNS])
            for rep in reports:
                key = [_fmt(rep.scenario.get(c, "")) for c in SCENARIO_COLUMNS]
                for f in range(rep.n_frames):
                    w.writerow([*key, f, *(_fmt(rep.series_mean[c][f]) for c in SERIES_COLUMNS)])
        with agg_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*SCENARIO_COLUMNS, "metric", "n_runs", "mean", "ci_low", "ci_high"])
            for rep in reports:
                key = [_fmt(rep.scenario.get(c, "")) for c in SCENARIO_COLUMNS]
                for metric, st in rep.stats.items():
                    w.writerow([*key, metric, rep.n_runs, _fmt(st.mean), _fmt(st.ci_low), _fmt(st.ci_high)])
    except OSError as exc:
        raise OSError(f"cannot write CSV output under {out}: {exc}") from exc
    return series_path, agg_path


def _scenario_key(row: dict[str, str]) -> tuple[str, ...]:
    return tuple(row[c] for c in SCENARIO_COLUMNS)


def _parse_scenario_value(column: str, text: str):
    if text == "":
        return ""
    return text if column == "scheduler" else int(text)


def read_csv(out_dir: str | Path) -> list[AggregateReport]:
    """Parse the two files written by :func:`emit_csv` back into reports."""
    out = Path(out_dir)
    reports: dict[tuple[str, ...], AggregateReport] = {}
    with (out / "aggregate.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            key = _scenario_key(row)
            rep = reports.get(key)
            if rep is None:
                scenario = {c: _parse_scenario_value(c, row[c]) for c in SCENARIO_COLUMNS}
                rep = reports[key] = AggregateReport(scenario, int(row["n_runs"]), {}, {c: [] for c in SERIES_COLUMNS})
            lo = float(row["ci_low"]) if row["ci_low"] else math.nan
            hi = float(row["ci_high"]) if row["ci_high"] else math.nan
            rep.stats[row["metric"]] = MetricStat(float(row["mean"]), lo, hi)
    with (out / "series.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            rep = reports[_scenario_key(row)]
            for c in SERIES_COLUMNS:
                rep.series_mean[c].append(float(row[c]))
    return list(reports.values())
