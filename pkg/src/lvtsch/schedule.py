"""TSCH slotframe grid and the 6top-style soft-cell operations on it.

Two knowledge modes decide what a node pair sees when it picks cells:

``strict``
    global knowledge of every allocation; primary and secondary conflicts
    are both avoided, so the schedule stays collision-free.
``local``
    a pair only knows the cells its own two nodes take part in.  Primary
    conflicts are still avoided, secondary ones are not and show up as
    collisions that :func:`housekeeping` later relocates.

Cells are picked at random by default.  The ``first_fit`` policy takes the
lowest free slot (then channel) and releases lowest slots first, which makes
allocation a pure function of the request sequence.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, TextIO

import numpy as np

from .topology import ConflictKind, ConflictSets, Link

MODES = ("strict", "local")
POLICIES = ("random", "first_fit")


class Cell(NamedTuple):
    slot: int
    channel: int


class Action(enum.Enum):
    ADD = "add"
    DELETE = "delete"


@dataclass(frozen=True)
class SixtopRequest:
    link: Link
    action: Action
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"request count must be >= 1, got {self.count}")


class Schedule:
    """S x M grid of cells.

    A cell may carry several links as long as they do not interfere
    (spatial reuse); a link holds at most one cell per slot.
    """

    def __init__(
        self, n_slots: int, n_channels: int, mode: str = "strict", policy: str = "random"
    ):
        if n_slots < 1 or n_channels < 1:
            raise ValueError("schedule needs at least one slot and one channel")
        if mode not in MODES:
            raise ValueError(f"unknown knowledge mode {mode!r}")
        if policy not in POLICIES:
            raise ValueError(f"unknown cell-picking policy {policy!r}")
        self.n_slots = n_slots
        self.n_channels = n_channels
        self.mode = mode
        self.policy = policy
        self._grid: dict[Cell, set[Link]] = {}
        self._per_link: dict[Link, set[Cell]] = defaultdict(set)
        self._slots: list[dict[Link, int]] = [{} for _ in range(n_slots)]
        # node -> slot -> number of links of that node active in the slot
        self._node_slots: dict[int, dict[int, int]] = defaultdict(dict)

    # -- queries -------------------------------------------------------------

    def cells_of(self, link: Link) -> set[Cell]:
        return set(self._per_link.get(link, ()))

    def allocated(self, link: Link) -> int:
        cells = self._per_link.get(link)
        return len(cells) if cells else 0

    def links_at(self, cell: Cell) -> set[Link]:
        return set(self._grid.get(cell, ()))

    def slot(self, t: int) -> dict[Link, int]:
        """Links active in slot ``t`` mapped to their channel offset."""
        return self._slots[t]

    def busy_slots(self, node: int) -> set[int]:
        return set(self._node_slots.get(node, ()))

    def links(self) -> list[Link]:
        return sorted(l for l, cells in self._per_link.items() if cells)

    def total_cells(self) -> int:
        return sum(len(c) for c in self._per_link.values())

    def assignments(self) -> Iterator[tuple[Cell, Link]]:
        for cell in sorted(self._grid):
            for link in sorted(self._grid[cell]):
                yield cell, link

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell.slot < self.n_slots and 0 <= cell.channel < self.n_channels

    # -- mutation ------------------------------------------------------------

    def assign(self, cell: Cell, link: Link) -> None:
        cell, link = Cell(*cell), Link(*link)
        if not self.in_bounds(cell):
            raise ValueError(f"cell {cell} outside {self.n_slots}x{self.n_channels}")
        if link in self._slots[cell.slot]:
            raise ValueError(f"link {link} already holds a cell in slot {cell.slot}")
        self._grid.setdefault(cell, set()).add(link)
        self._per_link[link].add(cell)
        self._slots[cell.slot][link] = cell.channel
        for node in link:
            slots = self._node_slots[node]
            slots[cell.slot] = slots.get(cell.slot, 0) + 1

    def release(self, cell: Cell, link: Link) -> None:
        cell, link = Cell(*cell), Link(*link)
        holders = self._grid.get(cell)
        if not holders or link not in holders:
            raise KeyError(f"{link} does not hold {cell}")
        holders.discard(link)
        if not holders:
            del self._grid[cell]
        self._per_link[link].discard(cell)
        del self._slots[cell.slot][link]
        for node in link:
            slots = self._node_slots[node]
            slots[cell.slot] -= 1
            if not slots[cell.slot]:
                del slots[cell.slot]

    def clear(self) -> None:
        for cell, link in list(self.assignments()):
            self.release(cell, link)

    def check_consistency(self) -> None:
        """Raise AssertionError if the grid and per-link views disagree."""
        from_grid = {(c, l) for c, ls in self._grid.items() for l in ls}
        from_links = {(c, l) for l, cs in self._per_link.items() for c in cs}
        if from_grid != from_links:
            raise AssertionError("grid and per-link views disagree")
        from_slots = {(Cell(t, ch), l) for t, d in enumerate(self._slots) for l, ch in d.items()}
        if from_slots != from_grid:
            raise AssertionError("slot index out of sync")


# -- conflict checks ------------------------------------------------------------


def check_primary_conflict(schedule: Schedule, cell: Cell, link: Link) -> bool:
    """True if a link sharing a node with ``link`` already uses slot ``cell.slot``
    on any channel."""
    link = Link(*link)
    for other in schedule.slot(cell.slot):
        if other.shares_endpoint(link):
            return True
    return False


def check_secondary_conflict(
    schedule: Schedule, cell: Cell, link: Link, conflict_sets: ConflictSets
) -> bool:
    """True if an interfering, endpoint-disjoint link already holds the exact cell."""
    link = Link(*link)
    for other in schedule.links_at(Cell(*cell)):
        if conflict_sets.kind(link, other) is ConflictKind.SECONDARY:
            return True
    return False


class Violation(NamedTuple):
    kind: ConflictKind
    cell: Cell
    a: Link
    b: Link


def scan_violations(schedule: Schedule, conflict_sets: ConflictSets) -> list[Violation]:
    """Full grid scan for pairs breaking the half-duplex or interference rules."""
    found = []
    for t in range(schedule.n_slots):
        active = sorted(schedule.slot(t).items())
        for i, (a, ch_a) in enumerate(active):
            for b, ch_b in active[i + 1 :]:
                if a.shares_endpoint(b):
                    found.append(Violation(ConflictKind.PRIMARY, Cell(t, ch_a), a, b))
                elif ch_a == ch_b and conflict_sets.kind(a, b) is ConflictKind.SECONDARY:
                    found.append(Violation(ConflictKind.SECONDARY, Cell(t, ch_a), a, b))
    return found


# -- 6top operations ------------------------------------------------------------


def _blocked_channels(
    schedule: Schedule, link: Link, conflict_sets: ConflictSets
) -> dict[int, set[int]]:
    blocked: dict[int, set[int]] = defaultdict(set)
    if schedule.mode == "strict":
        for other, kind in conflict_sets[link].items():
            if kind is ConflictKind.SECONDARY:
                for cell in schedule._per_link.get(other, ()):
                    blocked[cell.slot].add(cell.channel)
    return blocked


def add_cells(
    schedule: Schedule,
    link: Link,
    count: int,
    conflict_sets: ConflictSets,
    rng: np.random.Generator,
) -> list[Cell]:
    """Allocate up to ``count`` cells for ``link`` at random among those the
    pair considers conflict-free.  Returns the cells actually taken."""
    if count < 1:
        raise ValueError("count must be >= 1")
    link = Link(*link)
    busy = schedule.busy_slots(link.src) | schedule.busy_slots(link.dst)
    blocked = _blocked_channels(schedule, link, conflict_sets)
    M = schedule.n_channels
    slots = [t for t in range(schedule.n_slots) if t not in busy and len(blocked.get(t, ())) < M]
    if not slots:
        return []
    k = min(count, len(slots))
    if schedule.policy == "first_fit":
        picked = range(k)
    else:
        weights = np.array([M - len(blocked.get(t, ())) for t in slots], dtype=float)
        picked = rng.choice(len(slots), size=k, replace=False, p=weights / weights.sum())
    taken = []
    for idx in picked:
        t = slots[idx]
        free = [ch for ch in range(M) if ch not in blocked.get(t, ())]
        ch = free[0] if schedule.policy == "first_fit" else free[int(rng.integers(len(free)))]
        cell = Cell(t, ch)
        schedule.assign(cell, link)
        taken.append(cell)
    return taken


def delete_cells(
    schedule: Schedule, link: Link, count: int, rng: np.random.Generator
) -> list[Cell]:
    """Release ``min(count, allocated)`` cells of ``link``, chosen at random
    (or lowest slots first under ``first_fit``)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    link = Link(*link)
    cells = sorted(schedule.cells_of(link))
    if not cells:
        return []
    k = min(count, len(cells))
    if schedule.policy == "first_fit":
        picked = range(k)
    else:
        picked = sorted(rng.choice(len(cells), size=k, replace=False))
    removed = [cells[i] for i in picked]
    for cell in removed:
        schedule.release(cell, link)
    return removed


class CellStats:
    """Transmission attempts and acknowledgements per (link, cell)."""

    def __init__(self):
        self._data: dict[tuple[Link, Cell], list[int]] = {}

    def record(self, link: Link, cell: Cell, acked: bool) -> None:
        entry = self._data.setdefault((link, cell), [0, 0])
        entry[0] += 1
        entry[1] += int(acked)

    def get(self, link: Link, cell: Cell) -> tuple[int, int]:
        attempts, acks = self._data.get((link, cell), (0, 0))
        return attempts, acks

    def reset(self, link: Link, cell: Cell) -> None:
        self._data.pop((link, cell), None)

    def by_link(self) -> dict[Link, dict[Cell, tuple[int, int]]]:
        out: dict[Link, dict[Cell, tuple[int, int]]] = defaultdict(dict)
        for (link, cell), (a, k) in self._data.items():
            out[link][cell] = (a, k)
        return out


def housekeeping(
    schedule: Schedule,
    per_cell_stats: CellStats,
    conflict_sets: ConflictSets,
    rng: np.random.Generator,
    threshold: float = 0.5,
    min_attempts: int = 10,
) -> int:
    """Relocate cells whose delivery ratio trails the pooled ratio of the
    link's other cells by more than ``threshold``.  Counters accumulate until
    a cell is relocated.

    The cell under test is left out of its own reference so that one dead cell
    among two is still caught.  A link with a single observed cell has no
    reference and is left alone.  Strict schedules cannot collide, so there is
    nothing to relocate there.
    """
    if schedule.mode == "strict":
        return 0
    relocations = 0
    for link, cells in sorted(per_cell_stats.by_link().items()):
        total_attempts = sum(a for a, _ in cells.values())
        total_acks = sum(k for _, k in cells.values())
        for cell, (attempts, acks) in sorted(cells.items()):
            if attempts < min_attempts or attempts == total_attempts:
                continue
            mean = (total_acks - acks) / (total_attempts - attempts)
            if acks / attempts >= mean - threshold:
                continue
            if cell not in schedule.cells_of(link):
                per_cell_stats.reset(link, cell)
                continue
            fresh = add_cells(schedule, link, 1, conflict_sets, rng)
            if not fresh:
                continue
            schedule.release(cell, link)
            per_cell_stats.reset(link, cell)
            relocations += 1
    return relocations


# -- dump format: one allocated cell per line "t chOf src dst" ------------------


def dump_schedule(schedule: Schedule, out: TextIO | str | Path) -> None:
    lines = [f"# slots {schedule.n_slots} channels {schedule.n_channels} mode {schedule.mode}"]
    lines += [f"{c.slot} {c.channel} {l.src} {l.dst}" for c, l in schedule.assignments()]
    text = "\n".join(lines) + "\n"
    if isinstance(out, (str, Path)):
        Path(out).write_text(text)
    else:
        out.write(text)


def load_schedule(source: str | Path | Iterable[str]) -> Schedule:
    """Parse a dump.  Assignments are loaded without any conflict checking."""
    lines = Path(source).read_text().splitlines() if isinstance(source, (str, Path)) else list(source)
    header = lines[0].split() if lines else []
    if len(header) < 5 or header[:2] != ["#", "slots"]:
        raise ValueError("schedule dump must start with '# slots S channels M'")
    S, M = int(header[2]), int(header[4])
    mode = header[6] if len(header) >= 7 else "strict"
    schedule = Schedule(S, M, mode)
    for lineno, raw in enumerate(lines[1:], 2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            t, ch, src, dst = (int(v) for v in line.split())
        except ValueError as exc:
            raise ValueError(f"line {lineno}: expected 't chOf src dst', got {raw!r}") from exc
        schedule.assign(Cell(t, ch), Link(src, dst))
    return schedule


__all__ = [
    "Action", "Cell", "CellStats", "Schedule", "SixtopRequest", "Violation",
    "add_cells", "check_primary_conflict", "check_secondary_conflict",
    "delete_cells", "dump_schedule", "housekeeping", "load_schedule",
    "scan_violations",
]

