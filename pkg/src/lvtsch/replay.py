"""Deterministic replay of the nine-node Local Voting example.

The pinned network (``data/nine_node.topo``) has the seven routing links of
the example plus a single extra radio edge 2-5.  That conflict graph is the
only one, among all 2^14 ways of marking the endpoint-disjoint link pairs as
interfering or not, that reproduces every vote of the reference table
(``data/lv_evolution.txt``); see ``tests/test_replay.py`` for the search.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .engine import SimConfig, run
from .topology import Link, RplTree, Topology, build_rpl_tree, load_topology

EXAMPLE_SLOTS = 15
EXAMPLE_CHANNELS = 5
EXAMPLE_FRAMES = 13
EXAMPLE_LINKS = (
    Link(6, 4), Link(3, 1), Link(2, 1), Link(7, 5), Link(4, 2), Link(8, 5), Link(5, 3),
)
EXAMPLE_QUEUES = dict(zip(EXAMPLE_LINKS, (10, 20, 5, 25, 45, 7, 14)))

# (p, q, x, u) with None for an undefined entry
Row = dict[Link, tuple[int | None, int | None, int | None, int | None]]


def data_path(name: str) -> Path:
    return Path(str(resources.files("lvtsch") / "data" / name))


def example_topology() -> tuple[Topology, RplTree]:
    topo, _ = load_topology(data_path("nine_node.topo"))
    return topo, build_rpl_tree(topo, max_parents=1)


def load_table(path: str | Path | None = None) -> tuple[list[Link], list[Row]]:
    """Parse a trace table: a ``links`` header then one row per frame."""
    links: list[Link] = []
    rows: list[Row] = []
    text = Path(path or data_path("lv_evolution.txt")).read_text()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "links":
            links = [Link(*map(int, tok.split("-"))) for tok in rest]
            continue
        vals = [None if v == "NA" else int(v) for v in rest]
        if int(head) != len(rows) or len(vals) != 4 * len(links):
            raise ValueError(f"malformed table row {raw!r}")
        rows.append({l: tuple(vals[4 * i : 4 * i + 4]) for i, l in enumerate(links)})
    return links, rows


def replay_config() -> SimConfig:
    return SimConfig(
        slotframe_length=EXAMPLE_SLOTS,
        n_channels=EXAMPLE_CHANNELS,
        cycles_per_run=EXAMPLE_FRAMES,
        burst_times=(),
        scheduler="lv",
        mode="replay",
        rng_seed=0,
    )


def replay_trace(config: SimConfig | None = None) -> list[Row]:
    """Run the example and return its (p, q, x, u) rows, frames 0..12."""
    topo, tree = example_topology()
    summary = run(
        config or replay_config(),
        topology=topo,
        tree=tree,
        links=EXAMPLE_LINKS,
        initial_queues=EXAMPLE_QUEUES,
        trace=True,
    )
    return summary.trace


@dataclass(frozen=True)
class Mismatch:
    frame: int
    link: Link
    column: str
    expected: int | None
    got: int | None


def diff_table(expected: list[Row], got: list[Row]) -> list[Mismatch]:
    """Compare every defined expected entry; ``NA`` must be matched by None.

    The last row's votes are undefined in the reference (the example stops
    there) and are skipped.
    """
    out = []
    for f, row in enumerate(expected):
        for link, vals in row.items():
            have = got[f][link] if f < len(got) else (None,) * 4
            for col, e, g in zip("pqxu", vals, have):
                if col == "u" and e is None and f == len(expected) - 1:
                    continue
                if e != g:
                    out.append(Mismatch(f, link, col, e, g))
    return out


def format_table(rows: list[Row], links=EXAMPLE_LINKS) -> str:
    def cell(v):
        return "NA" if v is None else str(v)

    head = "  f | " + " | ".join(f"{f'({l.src},{l.dst})':^15}" for l in links)
    sub = "    | " + " | ".join(f"{'p':>3}{'q':>4}{'x':>4}{'u':>4}" for _ in links)
    lines = [head, sub]
    for f, row in enumerate(rows):
        parts = [f"{cell(p):>3}{cell(q):>4}{cell(x):>4}{cell(u):>4}" for p, q, x, u in (row[l] for l in links)]
        lines.append(f"{f:>3} | " + " | ".join(parts))
    return "\n".join(lines)
