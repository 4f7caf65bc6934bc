"""Frame-by-frame TSCH simulation.

At every frame boundary the scheduling function sees a frozen snapshot of the
link queues and its add/delete requests go through the 6top operations in
:mod:`lvtsch.schedule`.  The slots of the frame are then executed in order.

Only packets already queued when the frame starts may be sent during it, so
the queue of every link follows

    q_next = q - sent - dropped_after_retries + arrivals

which, with lossless delivery and every request granted, is exactly
``max(0, q - p) + z``.

Modes: ``strict`` and ``local`` select the schedule's knowledge mode and use
Bernoulli delivery with the link PDR; ``replay`` is strict, lossless, and
places cells first-fit so a run is a pure function of its inputs.
"""

from __future__ import annotations

import enum
import math
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import numpy as np

from .local_voting import LinkState, VotingMatrix, round_half_up
from .metrics import MetricsSeries, RunSummary
from .otf import OtfState, otf_schedule_frame, update_demand
from .schedule import (
    Action,
    Cell,
    CellStats,
    Schedule,
    SixtopRequest,
    add_cells,
    delete_cells,
    housekeeping,
)
from .topology import (
    ConflictKind,
    ConflictSets,
    Link,
    PropagationModel,
    RplTree,
    Topology,
    build_rpl_tree,
    generate_topology,
    interference_sets,
)

SCHEDULERS = ("lv", "otf")
SIM_MODES = ("strict", "local", "replay")


class ConfigError(ValueError):
    pass


class SlotState(enum.Enum):
    TX = "tx_data_rx_ack"
    RX = "rx_data_tx_ack"
    IDLE = "idle_listen"
    SLEEP = "sleep"


@dataclass(frozen=True)
class EnergyModel:
    """Charge per slot in microcoulombs for each radio state.

    Defaults are typical 802.15.4 mote figures; only their ordering matters to
    the comparisons this package makes.
    """

    tx_data_rx_ack: float = 54.5
    rx_data_tx_ack: float = 32.6
    idle_listen: float = 6.4
    sleep: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.sleep <= self.idle_listen <= min(self.tx_data_rx_ack, self.rx_data_tx_ack):
            raise ConfigError("energy model needs sleep <= idle_listen <= min(tx, rx)")

    def charge(self, state: SlotState) -> float:
        return getattr(self, state.value)


def accrue_energy(
    node_slot_state: Mapping[SlotState, int] | Iterable[SlotState], energy_model: EnergyModel
) -> float:
    """Total charge of a collection of node-slots, given as states or as counts."""
    counts = node_slot_state if isinstance(node_slot_state, Mapping) else Counter(node_slot_state)
    return sum(energy_model.charge(s) * n for s, n in counts.items())


@dataclass(frozen=True)
class SimConfig:
    n_nodes: int = 50
    area_side: float = 2000.0
    min_good_neighbors: int = 3
    slotframe_length: int = 101
    slot_duration: float = 0.01
    n_channels: int = 16
    burst_times: tuple[float, ...] = (20.0, 60.0)
    packets_per_burst: int = 5
    queue_capacity: int = 100
    max_mac_retries: int = 5
    housekeeping_period: float = 1.0
    otf_threshold: int = 4
    otf_alpha: float = 0.5
    rpl_parents: int = 1
    cycles_per_run: int = 100
    scheduler: str = "lv"
    mode: str = "local"
    rng_seed: int = 0
    propagation: PropagationModel = field(default_factory=PropagationModel)
    energy: EnergyModel = field(default_factory=EnergyModel)

    def validate(self) -> "SimConfig":
        positive = (
            "n_nodes", "area_side", "slotframe_length", "slot_duration", "n_channels",
            "queue_capacity", "housekeeping_period", "rpl_parents", "cycles_per_run",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("packets_per_burst", "max_mac_retries", "otf_threshold", "min_good_neighbors"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.n_nodes < 2:
            raise ConfigError("n_nodes must be >= 2")
        if not 0.0 < self.otf_alpha <= 1.0:
            raise ConfigError("otf_alpha must be in (0, 1]")
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"scheduler must be one of {SCHEDULERS}, got {self.scheduler!r}")
        if self.mode not in SIM_MODES:
            raise ConfigError(f"mode must be one of {SIM_MODES}, got {self.mode!r}")
        horizon = self.cycles_per_run * self.slotframe_length * self.slot_duration
        for t in self.burst_times:
            if not 0.0 <= t < horizon:
                raise ConfigError(f"burst at {t}s lies outside the {horizon:g}s run")
        return self

    @property
    def frame_duration(self) -> float:
        return self.slotframe_length * self.slot_duration

    @property
    def housekeeping_frames(self) -> int:
        return max(1, math.ceil(self.housekeeping_period / self.frame_duration - 1e-9))

    @property
    def burst_slots(self) -> frozenset[int]:
        return frozenset(round(t / self.slot_duration) for t in self.burst_times)


@dataclass(slots=True)
class Packet:
    id: int
    source: int
    created_at: int
    delivered_at: int | None = None
    failures: int = 0


def generate_bursts(config: SimConfig, now: int, sink: int = 0) -> dict[int, int]:
    """Packets each node creates at absolute slot ``now`` (empty off-burst)."""
    if now not in config.burst_slots or not config.packets_per_burst:
        return {}
    return {n: config.packets_per_burst for n in range(config.n_nodes) if n != sink}


@dataclass
class FrameReport:
    frame: int
    sent: Counter = field(default_factory=Counter)
    retry_drops: Counter = field(default_factory=Counter)
    arrivals: Counter = field(default_factory=Counter)
    collisions: int = 0
    slot_states: Counter = field(default_factory=Counter)
    charge: float = 0.0


@dataclass
class SimState:
    """Mutable state of one run."""

    config: SimConfig
    topology: Topology
    links: list[Link]
    conflict_sets: ConflictSets
    uplinks: dict[int, list[Link]]
    queues: dict[Link, deque]
    pdr: dict[Link, float]
    frame: int = 0
    eligible: dict[Link, int] = field(default_factory=dict)
    next_packet_id: int = 0
    created: int = 0
    delivered: list[Packet] = field(default_factory=list)
    dropped_overflow: int = 0
    dropped_retry: int = 0
    collisions: int = 0
    cell_stats: CellStats = field(default_factory=CellStats)
    events: list | None = None
    _arrivals: Counter = field(default_factory=Counter)

    @property
    def lossless(self) -> bool:
        return self.config.mode == "replay"

    def new_packet(self, source: int, now: int) -> Packet:
        pkt = Packet(self.next_packet_id, source, now)
        self.next_packet_id += 1
        self.created += 1
        return pkt

    def enqueue(self, node: int, pkt: Packet, now: int) -> None:
        """Queue toward the preferred parent, spilling to alternates when full."""
        ups = self.uplinks.get(node)
        if not ups:
            pkt.delivered_at = now
            self.delivered.append(pkt)
            return
        cap = self.config.queue_capacity
        for link in ups:
            q = self.queues[link]
            if len(q) < cap:
                q.append(pkt)
                self._arrivals[link] += 1
                return
        self.dropped_overflow += 1

    def queued(self) -> int:
        return sum(len(q) for q in self.queues.values())


def execute_frame(state: SimState, schedule: Schedule, rng: np.random.Generator) -> FrameReport:
    cfg = state.config
    S = schedule.n_slots
    report = FrameReport(frame=state.frame)
    state._arrivals = report.arrivals
    for link in state.links:
        state.eligible[link] = len(state.queues[link])
    eligible, queues = state.eligible, state.queues
    bursts = cfg.burst_slots
    base = state.frame * S
    record_cells = schedule.mode == "local"
    n_tx = n_rx = n_idle = 0
    events = state.events

    for t in range(S):
        now = base + t
        if now in bursts:
            for node, n in generate_bursts(cfg, now, state.topology.sink).items():
                for _ in range(n):
                    state.enqueue(node, state.new_packet(node, now), now)
        active = schedule.slot(t)
        if not active:
            continue
        txs = []
        for link, ch in active.items():
            if eligible.get(link, 0) > 0:
                txs.append((link, ch))
            else:
                n_idle += 1
        if not txs:
            continue
        collided = set()
        if len(txs) > 1:
            for i, (a, ch_a) in enumerate(txs):
                for b, ch_b in txs[i + 1 :]:
                    if a.shares_endpoint(b) or (
                        ch_a == ch_b
                        and state.conflict_sets.kind(a, b) is ConflictKind.SECONDARY
                    ):
                        collided.add(a)
                        collided.add(b)
        for link, ch in txs:
            n_tx += 1
            queue = queues[link]
            pkt = queue[0]
            if link in collided:
                ok = False
                report.collisions += 1
                outcome = "collision"
            elif state.lossless:
                ok = True
            else:
                ok = rng.random() < state.pdr[link]
            if record_cells:
                state.cell_stats.record(link, Cell(t, ch), ok)
            if ok:
                outcome = "ok"
                n_rx += 1
                queue.popleft()
                eligible[link] -= 1
                report.sent[link] += 1
                pkt.failures = 0
                state.enqueue(link.dst, pkt, now)
            else:
                if link not in collided:
                    outcome = "lost"
                n_idle += 1
                pkt.failures += 1
                if pkt.failures >= cfg.max_mac_retries:
                    queue.popleft()
                    eligible[link] -= 1
                    report.retry_drops[link] += 1
                    state.dropped_retry += 1
                    outcome += "+drop"
            if events is not None:
                events.append((state.frame, t, ch, link.src, link.dst, outcome))

    state.collisions += report.collisions
    active_states = n_tx + n_rx + n_idle
    report.slot_states = Counter(
        {
            SlotState.TX: n_tx,
            SlotState.RX: n_rx,
            SlotState.IDLE: n_idle,
            SlotState.SLEEP: state.topology.n_nodes * S - active_states,
        }
    )
    report.charge = accrue_energy(report.slot_states, cfg.energy)
    return report


def apply_requests(
    schedule: Schedule,
    requests: Iterable[SixtopRequest],
    conflict_sets: ConflictSets,
    rng: np.random.Generator,
) -> Counter:
    """Deletes first, then adds, each in request order.

    Returns the signed number of cells actually gained or lost per link.
    """
    requests = list(requests)
    applied: Counter = Counter()
    for req in requests:
        if req.action is Action.DELETE:
            applied[req.link] -= len(delete_cells(schedule, req.link, req.count, rng))
    for req in requests:
        if req.action is Action.ADD:
            applied[req.link] += len(add_cells(schedule, req.link, req.count, conflict_sets, rng))
    return applied


def displayed_load(q: int, p: int) -> int | None:
    """Load as tabulated in traces: undefined without cells, and the
    ``q/p + 1/2`` rounding applied even to an empty queue (giving 1)."""
    if p == 0:
        return None
    return round_half_up(Fraction(q, p) + Fraction(1, 2))


def run(
    config: SimConfig,
    *,
    topology: Topology | None = None,
    tree: RplTree | None = None,
    links: Iterable[Link] | None = None,
    initial_queues: Mapping[Link, int] | None = None,
    event_log: bool = False,
    trace: bool = False,
    frame_hook: Callable[[SimState, Schedule], None] | None = None,
) -> RunSummary:
    """Execute ``config.cycles_per_run`` slotframes and summarise them.

    ``topology``/``tree``/``links`` override the generated deployment; a node
    with no outgoing link in the simulated set absorbs what it receives.
    """
    cfg = config.validate()
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(2)
    sched_rng = np.random.default_rng(seeds[0])
    chan_rng = np.random.default_rng(seeds[1])

    if topology is None:
        topology = generate_topology(
            cfg.n_nodes, cfg.area_side, cfg.min_good_neighbors, cfg.rng_seed, cfg.propagation
        )
    if cfg.n_nodes != topology.n_nodes:
        cfg = replace(cfg, n_nodes=topology.n_nodes)
    if links is None:
        if tree is None:
            tree = build_rpl_tree(topology, cfg.rpl_parents)
        links = tree.links
    links = sorted(Link(*l) for l in links)
    uplinks: dict[int, list[Link]] = {}
    for link in links:
        uplinks.setdefault(link.src, []).append(link)
    if tree is not None:
        for node, ups in uplinks.items():
            order = {p: i for i, p in enumerate(tree.parents.get(node, ()))}
            ups.sort(key=lambda l: order.get(l.dst, len(order)))

    conflict_sets = interference_sets(topology, links)
    state = SimState(
        config=cfg,
        topology=topology,
        links=links,
        conflict_sets=conflict_sets,
        uplinks=uplinks,
        queues={l: deque() for l in links},
        pdr={l: topology.pdr(*l) for l in links},
        events=[] if event_log else None,
    )
    for link, n in sorted((initial_queues or {}).items()):
        link = Link(*link)
        for _ in range(n):
            state.queues[link].append(state.new_packet(link.src, 0))

    S, M = cfg.slotframe_length, cfg.n_channels
    schedule = Schedule(
        S,
        M,
        mode="local" if cfg.mode == "local" else "strict",
        policy="first_fit" if cfg.mode == "replay" else "random",
    )
    voting = VotingMatrix(links, conflict_sets, M) if cfg.scheduler == "lv" else None
    otf = OtfState(cfg.otf_threshold, cfg.otf_alpha) if cfg.scheduler == "otf" else None

    series = MetricsSeries()
    trace_rows: list[dict[Link, tuple]] | None = [] if trace else None
    last_arrivals: Counter = Counter()
    charge = 0.0
    n_requests = relocations = 0

    for f in range(cfg.cycles_per_run):
        state.frame = f
        if cfg.mode == "local" and f and f % cfg.housekeeping_frames == 0:
            relocations += housekeeping(schedule, state.cell_stats, conflict_sets, sched_rng)

        q = [len(state.queues[l]) for l in links]
        p = [schedule.allocated(l) for l in links]
        if voting is not None:
            requests = voting.schedule_frame(q, p, S)
            votes = dict(zip(links, voting.votes(q, p, S)[0].tolist()))
        else:
            states = {
                l: LinkState(q=q[i], p=p[i], z=last_arrivals[l]) for i, l in enumerate(links)
            }
            for l in links:
                update_demand(otf, l, last_arrivals[l])
            requests = otf_schedule_frame(states, otf, S)
            votes = {}
            for r in requests:
                votes[r.link] = r.count if r.action is Action.ADD else -r.count
        n_requests += len(requests)

        apply_requests(schedule, requests, conflict_sets, sched_rng)

        if trace_rows is not None:
            trace_rows.append(
                {
                    l: (p[i], q[i], displayed_load(q[i], p[i]), votes.get(l, 0))
                    for i, l in enumerate(links)
                }
            )

        report = execute_frame(state, schedule, chan_rng)
        last_arrivals = report.arrivals
        charge += report.charge
        series.append(state.queued(), len(state.delivered), schedule.total_cells(), charge)
        if frame_hook is not None:
            frame_hook(state, schedule)

    dur = cfg.slot_duration
    latencies = [pk.delivered_at - pk.created_at for pk in state.delivered]
    queued = state.queued()
    return RunSummary(
        series=series,
        time_last_packet=max((pk.delivered_at for pk in state.delivered), default=0) * dur,
        max_end_to_end_latency=max(latencies, default=0) * dur,
        total_charge=charge,
        created=state.created,
        delivered=len(state.delivered),
        queued=queued,
        dropped_overflow=state.dropped_overflow,
        dropped_retry=state.dropped_retry,
        collisions=state.collisions,
        requests=n_requests,
        relocations=relocations,
        undelivered=queued,
        trace=trace_rows,
        events=state.events,
    )
