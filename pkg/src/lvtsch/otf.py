"""Threshold-hysteresis baseline in the style of On-the-fly bandwidth reservation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .local_voting import LinkState
from .schedule import Action, SixtopRequest
from .topology import Link


@dataclass
class OtfState:
    threshold: int = 4
    alpha: float = 0.5
    demand: dict[Link, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")


def update_demand(
    otf_state: OtfState, link: Link, arrivals: int, alpha: float | None = None
) -> float:
    """Exponential moving average of per-frame arrivals; returns the new value."""
    if arrivals < 0:
        raise ValueError("arrivals must be >= 0")
    a = otf_state.alpha if alpha is None else alpha
    prev = otf_state.demand.get(link, 0.0)
    otf_state.demand[link] = a * arrivals + (1.0 - a) * prev
    return otf_state.demand[link]


def required_cells(demand: float, q: int, n_slots: int) -> int:
    """Cells per frame to carry the smoothed demand plus amortise the backlog
    over one frame's worth of slots."""
    backlog = max(0.0, q - demand)
    return math.ceil(demand + backlog / n_slots)


def otf_schedule_frame(
    states: Mapping[Link, LinkState], otf_state: OtfState, n_slots: int
) -> list[SixtopRequest]:
    requests = []
    for link in sorted(states):
        st = states[link]
        required = required_cells(otf_state.demand.get(link, 0.0), st.q, n_slots)
        if st.p < required:
            requests.append(SixtopRequest(link, Action.ADD, required - st.p))
        elif st.p > required + otf_state.threshold:
            requests.append(
                SixtopRequest(link, Action.DELETE, st.p - required - otf_state.threshold)
            )
    return requests
