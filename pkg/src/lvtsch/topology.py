"""Deployments, link quality, the RPL-style routing tree and interference sets."""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

SINK = 0


class TopologyError(ValueError):
    """Raised when a deployment cannot be generated or routed."""


class UnreachableNodeError(TopologyError):
    def __init__(self, node: int):
        super().__init__(f"node {node} has no route to the sink over good links")
        self.node = node


class Link(NamedTuple):
    """Directed link: ``src`` transmits, ``dst`` receives."""

    src: int
    dst: int

    def shares_endpoint(self, other: "Link") -> bool:
        return (
            self.src == other.src
            or self.src == other.dst
            or self.dst == other.src
            or self.dst == other.dst
        )


@dataclass(frozen=True)
class PropagationModel:
    """Log-distance path loss with bounded per-edge shadowing.

    Received power maps to a PDR through a linear waterfall between
    ``sensitivity_dbm`` (PDR 0) and ``full_rx_dbm`` (PDR 1).
    """

    tx_power_dbm: float = 0.0
    ref_loss_db: float = 40.0  # at 1 m, 2.4 GHz
    exponent: float = 2.0
    shadowing_sigma_db: float = 2.0
    shadowing_clip: float = 2.0  # in sigmas
    sensitivity_dbm: float = -97.0
    full_rx_dbm: float = -87.0

    def mean_rssi(self, distance: float) -> float:
        d = max(distance, 1.0)
        return self.tx_power_dbm - self.ref_loss_db - 10.0 * self.exponent * math.log10(d)

    def pdr_from_rssi(self, rssi: float) -> float:
        span = self.full_rx_dbm - self.sensitivity_dbm
        return min(1.0, max(0.0, (rssi - self.sensitivity_dbm) / span))

    @property
    def cutoff_distance(self) -> float:
        """Distance beyond which even the best-case shadowing misses sensitivity."""
        margin = (
            self.tx_power_dbm
            - self.ref_loss_db
            + self.shadowing_clip * self.shadowing_sigma_db
            - self.sensitivity_dbm
        )
        return 10.0 ** (margin / (10.0 * self.exponent))

    def expected_pdr(self, distance: float) -> float:
        """PDR with zero shadowing; monotone non-increasing in distance."""
        if distance > self.cutoff_distance:
            return 0.0
        return self.pdr_from_rssi(self.mean_rssi(distance))


def link_pdr(distance: float, model: PropagationModel, rng: np.random.Generator) -> float:
    """Draw the (run-constant) PDR of one edge at ``distance`` meters.

    One normal variate is consumed per call regardless of the outcome so the
    random stream does not depend on geometry.
    """
    if distance < 0:
        raise ValueError(f"negative distance {distance}")
    shadow = float(rng.standard_normal()) * model.shadowing_sigma_db
    bound = model.shadowing_clip * model.shadowing_sigma_db
    shadow = min(bound, max(-bound, shadow))
    if distance > model.cutoff_distance:
        return 0.0
    return model.pdr_from_rssi(model.mean_rssi(distance) + shadow)


def _key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Topology:
    """Node positions and symmetric PDR-weighted edges.

    ``edges`` is keyed by ``(a, b)`` with ``a < b``; only edges with pdr > 0
    are stored.
    """

    positions: np.ndarray
    edges: dict[tuple[int, int], float]
    area_side: float
    sink: int = SINK

    def __post_init__(self):
        for (a, b), pdr in self.edges.items():
            if not a < b:
                raise TopologyError(f"edge key ({a}, {b}) must be ordered")
            if not 0.0 < pdr <= 1.0:
                raise TopologyError(f"edge ({a}, {b}) has pdr {pdr} outside (0, 1]")

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    def pdr(self, a: int, b: int) -> float:
        return self.edges.get(_key(a, b), 0.0)

    @cached_property
    def _adjacency(self) -> list[frozenset[int]]:
        adj: list[set[int]] = [set() for _ in range(self.n_nodes)]
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return [frozenset(s) for s in adj]

    def neighbors(self, node: int) -> frozenset[int]:
        """One-hop neighborhood: every node reachable with pdr > 0."""
        return self._adjacency[node]

    def good_neighbors(self, node: int, min_pdr: float = 0.5) -> list[int]:
        return sorted(n for n in self._adjacency[node] if self.pdr(node, n) > min_pdr)


def generate_topology(
    n_nodes: int,
    area_side: float,
    min_good_neighbors: int,
    rng_seed: int,
    model: PropagationModel | None = None,
    max_attempts: int = 1000,
) -> Topology:
    """Place nodes one at a time uniformly in the square.

    A node is re-drawn until it has ``min_good_neighbors`` links with PDR above
    0.5 towards nodes already placed (fewer while fewer nodes exist).  The
    sink is node 0 and is placed first.
    """
    if n_nodes < 2:
        raise TopologyError("need at least two nodes")
    if area_side <= 0:
        raise TopologyError("area side must be positive")
    model = model or PropagationModel()
    rng = np.random.default_rng(rng_seed)
    positions = np.zeros((n_nodes, 2))
    edges: dict[tuple[int, int], float] = {}

    positions[0] = rng.uniform(0.0, area_side, size=2)
    for node in range(1, n_nodes):
        needed = min(min_good_neighbors, node)
        for _ in range(max_attempts):
            pos = rng.uniform(0.0, area_side, size=2)
            dists = np.hypot(*(positions[:node] - pos).T)
            pdrs = [link_pdr(float(d), model, rng) for d in dists]
            if sum(p > 0.5 for p in pdrs) >= needed:
                break
        else:
            raise TopologyError(
                f"could not place node {node} after {max_attempts} attempts; "
                "deployment too sparse"
            )
        positions[node] = pos
        for other, pdr in enumerate(pdrs):
            if pdr > 0.0:
                edges[(other, node)] = pdr
    return Topology(positions=positions, edges=edges, area_side=float(area_side))


@dataclass(frozen=True)
class RplTree:
    parents: dict[int, tuple[int, ...]]
    rank: dict[int, float]
    sink: int = SINK

    def preferred_parent(self, node: int) -> int | None:
        ps = self.parents.get(node, ())
        return ps[0] if ps else None

    @cached_property
    def links(self) -> list[Link]:
        """Every child→parent link, sorted by (src, dst)."""
        return sorted(Link(c, p) for c, ps in self.parents.items() for p in ps)

    @cached_property
    def preferred_links(self) -> list[Link]:
        return sorted(Link(c, ps[0]) for c, ps in self.parents.items() if ps)

    def path_to_sink(self, node: int) -> list[int]:
        path = [node]
        while path[-1] != self.sink:
            nxt = self.preferred_parent(path[-1])
            if nxt is None or len(path) > len(self.rank):
                raise TopologyError(f"preferred-parent walk from {node} does not reach the sink")
            path.append(nxt)
        return path


def build_rpl_tree(
    topology: Topology, max_parents: int, min_pdr: float = 0.5
) -> RplTree:
    """Rank by cumulative ETX over good links; keep up to ``max_parents``
    strictly lower-ranked neighbors per node, best first."""
    if max_parents < 1:
        raise TopologyError("max_parents must be >= 1")
    sink = topology.sink
    rank = {sink: 0.0}
    heap = [(0.0, sink)]
    done: set[int] = set()
    while heap:
        r, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        for nb in topology.good_neighbors(node, min_pdr):
            cand = r + 1.0 / topology.pdr(node, nb)
            if cand < rank.get(nb, math.inf):
                rank[nb] = cand
                heapq.heappush(heap, (cand, nb))

    parents: dict[int, tuple[int, ...]] = {}
    for node in range(topology.n_nodes):
        if node == sink:
            continue
        if node not in rank:
            raise UnreachableNodeError(node)
        cands = [
            (rank[nb] + 1.0 / topology.pdr(node, nb), nb)
            for nb in topology.good_neighbors(node, min_pdr)
            if rank.get(nb, math.inf) < rank[node]
        ]
        cands.sort()
        parents[node] = tuple(nb for _, nb in cands[:max_parents])
    return RplTree(parents=parents, rank=rank, sink=sink)


class ConflictKind(enum.Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


@dataclass
class ConflictSets:
    """Per link, the links that may interfere with it and how."""

    table: dict[Link, dict[Link, ConflictKind]] = field(default_factory=dict)

    def __getitem__(self, link: Link) -> dict[Link, ConflictKind]:
        return self.table.get(link, {})

    def __iter__(self) -> Iterator[Link]:
        return iter(self.table)

    def __len__(self) -> int:
        return len(self.table)

    def kind(self, a: Link, b: Link) -> ConflictKind | None:
        return self.table.get(a, {}).get(b)

    def primary(self, link: Link) -> list[Link]:
        return sorted(b for b, k in self[link].items() if k is ConflictKind.PRIMARY)

    def secondary(self, link: Link) -> list[Link]:
        return sorted(b for b, k in self[link].items() if k is ConflictKind.SECONDARY)


def interferes(topology: Topology, a: Link, b: Link) -> bool:
    """Membership rule for endpoint-disjoint links, checked both ways."""
    return (
        b.dst in topology.neighbors(a.src)
        or b.src in topology.neighbors(a.dst)
        or a.dst in topology.neighbors(b.src)
        or a.src in topology.neighbors(b.dst)
    )


def interference_sets(topology: Topology, links: Iterable[Link]) -> ConflictSets:
    links = sorted({Link(*l) for l in links})
    table: dict[Link, dict[Link, ConflictKind]] = {l: {} for l in links}
    for i, a in enumerate(links):
        for b in links[i + 1 :]:
            if a.shares_endpoint(b):
                kind = ConflictKind.PRIMARY
            elif interferes(topology, a, b):
                kind = ConflictKind.SECONDARY
            else:
                continue
            table[a][b] = kind
            table[b][a] = kind
    return ConflictSets(table)


# -- plain-text fixture format ------------------------------------------------
#
#   area <side>
#   node <id> <x> <y>
#   edge <a> <b> <pdr>
#   parent <child> <p1> [<p2> ...]      (optional, preferred first)


def dump_topology(topology: Topology, path: str | Path, tree: RplTree | None = None) -> None:
    lines = [f"area {topology.area_side!r}"]
    for i, (x, y) in enumerate(topology.positions):
        lines.append(f"node {i} {float(x)!r} {float(y)!r}")
    for (a, b), pdr in sorted(topology.edges.items()):
        lines.append(f"edge {a} {b} {pdr!r}")
    if tree is not None:
        for child, ps in sorted(tree.parents.items()):
            lines.append("parent " + " ".join(str(n) for n in (child, *ps)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_topology(path: str | Path) -> tuple[Topology, RplTree | None]:
    """Read a fixture; the tree is returned only if ``parent`` lines exist."""
    nodes: dict[int, tuple[float, float]] = {}
    edges: dict[tuple[int, int], float] = {}
    parents: dict[int, tuple[int, ...]] = {}
    area = 0.0
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *rest = line.split()
        try:
            if kind == "area":
                area = float(rest[0])
            elif kind == "node":
                nodes[int(rest[0])] = (float(rest[1]), float(rest[2]))
            elif kind == "edge":
                a, b = int(rest[0]), int(rest[1])
                edges[_key(a, b)] = float(rest[2])
            elif kind == "parent":
                parents[int(rest[0])] = tuple(int(r) for r in rest[1:])
            else:
                raise ValueError(f"unknown record {kind!r}")
        except (IndexError, ValueError) as exc:
            raise TopologyError(f"{path}:{lineno}: {exc}") from exc
    if sorted(nodes) != list(range(len(nodes))):
        raise TopologyError(f"{path}: node ids must be 0..N-1")
    positions = np.array([nodes[i] for i in range(len(nodes))], dtype=float)
    topo = Topology(positions=positions, edges=edges, area_side=area)
    tree = None
    if parents:
        tree = RplTree(parents=parents, rank=_hop_rank(parents), sink=SINK)
    return topo, tree


def _hop_rank(parents: dict[int, tuple[int, ...]]) -> dict[int, float]:
    rank: dict[int, float] = {SINK: 0.0}

    def walk(node: int, depth: int = 0) -> float:
        if node in rank:
            return rank[node]
        if depth > len(parents) or not parents.get(node):
            raise TopologyError(f"node {node} does not reach the sink")
        rank[node] = walk(parents[node][0], depth + 1) + 1.0
        return rank[node]

    for node in parents:
        walk(node)
    return rank
