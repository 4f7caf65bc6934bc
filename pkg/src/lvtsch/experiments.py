"""Seeded batches and scenario sweeps."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Sequence

from .engine import SimConfig, run
from .metrics import AggregateReport, RunSummary, aggregate


@dataclass(frozen=True)
class ScenarioGrid:
    schedulers: tuple[str, ...] = ("lv", "otf")
    thresholds: tuple[int, ...] = (0, 1, 4, 10)
    parents: tuple[int, ...] = (1, 2, 3)
    packets_per_burst: tuple[int, ...] = (5, 25)
    seeds: int = 30
    workers: int = 1

    def __post_init__(self):
        for name in ("schedulers", "thresholds", "parents", "packets_per_burst"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")

    def scenarios(self, base: SimConfig) -> list[SimConfig]:
        """LV once per (parents, burst); OTF once per (threshold, parents, burst)."""
        out = []
        for sched in self.schedulers:
            thresholds = self.thresholds if sched == "otf" else (base.otf_threshold,)
            for thr, par, ppb in itertools.product(thresholds, self.parents, self.packets_per_burst):
                out.append(
                    replace(base, scheduler=sched, otf_threshold=thr, rpl_parents=par, packets_per_burst=ppb)
                )
        return out


def scenario_key(config: SimConfig) -> dict[str, object]:
    return {
        "scheduler": config.scheduler,
        "threshold": config.otf_threshold if config.scheduler == "otf" else "",
        "parents": config.rpl_parents,
        "packets_per_burst": config.packets_per_burst,
    }


def _run_one(config: SimConfig) -> RunSummary:
    return run(config)


def run_seeds(
    config: SimConfig, seeds: Sequence[int], workers: int = 1
) -> list[RunSummary]:
    """One run per seed, returned in seed order whatever the worker count."""
    configs = [replace(config, rng_seed=s) for s in seeds]
    if workers <= 1:
        return [_run_one(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, configs))


def sweep(
    base: SimConfig, grid: ScenarioGrid, first_seed: int = 0
) -> list[tuple[AggregateReport, list[RunSummary]]]:
    seeds = range(first_seed, first_seed + grid.seeds)
    results = []
    for cfg in grid.scenarios(base):
        runs = run_seeds(cfg, seeds, grid.workers)
        results.append((aggregate(runs, scenario=scenario_key(cfg)), runs))
    return results


# -- key = value configuration files -------------------------------------------

def parse_config(text: str, base: SimConfig | None = None) -> SimConfig:
    """Parse ``key = value`` lines; keys are :class:`SimConfig` field names.

    ``burst_times`` takes a comma-separated list.  Propagation parameters are
    addressed as ``propagation.<field>``.
    """
    base = base or SimConfig()
    types = {f.name: type(getattr(base, f.name)) for f in fields(SimConfig)}
    top: dict[str, object] = {}
    nested: dict[str, dict[str, object]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if "." in key:
                group, name = key.split(".", 1)
                obj = getattr(base, group)
                nested.setdefault(group, {})[name] = type(getattr(obj, name))(value)
            elif key == "burst_times":
                top[key] = tuple(float(v) for v in value.split(",") if v.strip())
            elif key in types:
                top[key] = types[key](value)
            else:
                raise AttributeError(key)
        except AttributeError:
            raise ValueError(f"line {lineno}: unknown configuration key {key!r}") from None
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    for group, values in nested.items():
        top[group] = replace(getattr(base, group), **values)
    return replace(base, **top).validate()
