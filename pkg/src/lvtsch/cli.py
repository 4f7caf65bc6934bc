"""Command-line driver: ``lvtsch {run,sweep,replay,verify}``."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .engine import SCHEDULERS, SIM_MODES, SimConfig, run
from .experiments import ScenarioGrid, parse_config, run_seeds, scenario_key, sweep
from .metrics import aggregate, emit_csv
from .replay import diff_table, format_table, load_table, replay_trace
from .schedule import load_schedule, scan_violations
from .topology import interference_sets, load_topology


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _base_config(args) -> SimConfig:
    cfg = SimConfig()
    if args.config:
        cfg = parse_config(Path(args.config).read_text(), cfg)
    overrides = {}
    if args.mode is not None:
        overrides["mode"] = args.mode
    return replace(cfg, **overrides)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; keys are SimConfig field names")
    p.add_argument("--seed", type=int, default=None, help="first seed (default: rng_seed from config)")
    p.add_argument("--seeds", type=int, default=30, help="number of consecutive seeds (default 30)")
    p.add_argument("--out-dir", default="out", help="directory for series.csv and aggregate.csv")
    p.add_argument("--mode", choices=SIM_MODES)
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")


def _cmd_run(args) -> int:
    cfg = _base_config(args)
    overrides = {}
    if args.scheduler is not None:
        overrides["scheduler"] = args.scheduler
    if args.threshold is not None:
        overrides["otf_threshold"] = args.threshold
    if args.parents is not None:
        overrides["rpl_parents"] = args.parents
    if args.packets_per_burst is not None:
        overrides["packets_per_burst"] = args.packets_per_burst
    cfg = replace(cfg, **overrides).validate()
    first = cfg.rng_seed if args.seed is None else args.seed
    if args.seeds < 1:
        raise ValueError("--seeds must be >= 1")

    seeds = range(first, first + args.seeds)
    runs = run_seeds(cfg, seeds, args.workers)
    report = aggregate(runs, scenario=scenario_key(cfg))
    series_path, agg_path = emit_csv(report, args.out_dir)

    if args.event_log:
        # events of the first seed only; a full batch would be enormous
        summary = run(replace(cfg, rng_seed=first), event_log=True)
        with open(args.event_log, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame", "slot", "channel", "src", "dst", "outcome"])
            w.writerows(summary.events)

    bad = [s for s, r in zip(seeds, runs) if not r.conserved()]
    for m in ("delivered", "total_charge", "max_end_to_end_latency"):
        st = report.stats[m]
        print(f"{m:>24}: {st.mean:.4g}  [{st.ci_low:.4g}, {st.ci_high:.4g}]")
    print(f"wrote {series_path} and {agg_path}")
    if bad:
        print(f"error: packet conservation violated for seeds {bad}", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args) -> int:
    base = _base_config(args)
    if args.seed is not None:
        base = replace(base, rng_seed=args.seed)
    grid = ScenarioGrid(
        schedulers=tuple(args.scheduler),
        thresholds=args.threshold,
        parents=args.parents,
        packets_per_burst=args.packets_per_burst,
        seeds=args.seeds,
        workers=args.workers,
    )
    results = sweep(base, grid, first_seed=base.rng_seed)
    series_path, agg_path = emit_csv([rep for rep, _ in results], args.out_dir)
    failed = 0
    for rep, runs in results:
        ok = all(r.conserved() for r in runs)
        failed += not ok
        key = " ".join(f"{k}={v}" for k, v in rep.scenario.items() if v != "")
        st = rep.stats
        print(
            f"{key:<52} charge={st['total_charge'].mean:10.1f}uC "
            f"latency={st['max_end_to_end_latency'].mean:6.2f}s "
            f"delivered={st['delivered'].mean:7.1f}{'' if ok else '  CONSERVATION FAILED'}"
        )
    print(f"{len(results)} scenarios x {grid.seeds} seeds; wrote {series_path} and {agg_path}")
    return 1 if failed else 0


def _cmd_replay(args) -> int:
    _, expected = load_table(args.fixture)
    got = replay_trace()
    print(format_table(got))
    mismatches = diff_table(expected, got)
    if mismatches:
        print(f"\n{len(mismatches)} mismatches against the reference table:", file=sys.stderr)
        for m in mismatches:
            print(
                f"  frame {m.frame} link ({m.link.src},{m.link.dst}) {m.column}: "
                f"expected {m.expected}, got {m.got}",
                file=sys.stderr,
            )
        return 1
    print("\nreplay matches the reference table")
    return 0


def _cmd_verify(args) -> int:
    topo, _ = load_topology(args.topology)
    schedule = load_schedule(args.schedule)
    for cell, link in schedule.assignments():
        for node in link:
            if not 0 <= node < topo.n_nodes:
                print(f"error: link {tuple(link)} at {tuple(cell)} names unknown node {node}", file=sys.stderr)
                return 1
    schedule.check_consistency()
    violations = scan_violations(schedule, interference_sets(topo, schedule.links()))
    for v in violations:
        print(
            f"{v.kind.name.lower()} conflict at slot {v.cell.slot} channel {v.cell.channel}: "
            f"({v.a.src},{v.a.dst}) vs ({v.b.src},{v.b.dst})",
            file=sys.stderr,
        )
    print(f"{schedule.total_cells()} cells, {len(violations)} violations")
    return 1 if violations else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lvtsch", description="Local Voting / OTF TSCH cell scheduling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one scenario over a batch of seeds")
    _add_common(p)
    p.add_argument("--scheduler", choices=SCHEDULERS)
    p.add_argument("--threshold", type=int, help="OTF hysteresis threshold in cells")
    p.add_argument("--parents", type=int, help="RPL parents per node")
    p.add_argument("--packets-per-burst", type=int)
    p.add_argument("--event-log", metavar="PATH", help="write the first seed's per-transmission log as CSV")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="grid over scheduler, threshold, parents and burst size")
    _add_common(p)
    p.add_argument("--scheduler", nargs="+", choices=SCHEDULERS, default=list(SCHEDULERS))
    p.add_argument("--threshold", type=_int_list, default=(0, 1, 4, 10), help="comma-separated")
    p.add_argument("--parents", type=_int_list, default=(1, 2, 3), help="comma-separated")
    p.add_argument("--packets-per-burst", type=_int_list, default=(5, 25), help="comma-separated")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("replay", help="nine-node golden trace against the reference table")
    p.add_argument("--fixture", help="reference table (default: the packaged one)")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("verify", help="conflict-check a schedule dump")
    p.add_argument("schedule", help="file written by lvtsch.schedule.dump_schedule")
    p.add_argument("--topology", required=True, help="topology fixture the links refer to")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
