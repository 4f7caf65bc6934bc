"""Local Voting: equalise link load by trading cells between neighbouring links.

All arithmetic is exact.  With ``w = 1/M`` for secondary conflicts the queue
sum is scaled by ``M`` so votes come out of integer division.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from .schedule import Action, SixtopRequest
from .topology import ConflictKind, ConflictSets, Link


@dataclass
class LinkState:
    """Frame-boundary view of one link.

    ``q`` queued packets, ``p`` cells held during the previous frame, ``z``
    packets that arrived during it, ``u`` the last vote, ``x`` the load.
    """

    q: int = 0
    p: int = 0
    z: int = 0
    u: int = 0
    x: int | None = 0

    def __post_init__(self):
        if self.q < 0 or self.p < 0:
            raise ValueError(f"negative queue or allocation: q={self.q} p={self.p}")


def round_half_up(value: Fraction | int) -> int:
    return math.floor(Fraction(value) + Fraction(1, 2))


def compute_load(q: int, p: int) -> int | None:
    """Load of a link; ``None`` when packets wait but no cell is allocated."""
    if q == 0:
        return 0
    if p == 0:
        return None
    return round_half_up(Fraction(q, p) + Fraction(1, 2))


def conflict_weight(link_a: Link, link_b: Link, n_channels: int) -> Fraction:
    if Link(*link_a).shares_endpoint(Link(*link_b)):
        return Fraction(1)
    return Fraction(1, n_channels)


def _scaled_qsum(
    link: Link, states: Mapping[Link, LinkState], conflict_sets: ConflictSets, M: int
) -> int:
    # M * (q + sum w*q_nb), an integer
    total = M * states[link].q
    for other, kind in conflict_sets[link].items():
        st = states.get(other)
        if st is None or not st.q:
            continue
        total += st.q * (M if kind is ConflictKind.PRIMARY else 1)
    return total


def compute_u(
    link: Link,
    states: Mapping[Link, LinkState],
    conflict_sets: ConflictSets,
    n_slots: int,
    n_channels: int,
) -> int:
    """Signed number of cells ``link`` should gain (+) or give back (-)."""
    link = Link(*link)
    scaled = _scaled_qsum(link, states, conflict_sets, n_channels)
    if scaled == 0:
        raise ValueError(f"empty neighbourhood queue sum for {link}; release path applies")
    st = states[link]
    share = Fraction(st.q * n_slots * n_channels, scaled)
    return round_half_up(share) - st.p


def _requests_from_votes(links, q, p, votes, qsum_zero):
    requests = []
    for i, link in enumerate(links):
        if qsum_zero[i]:
            if p[i]:
                requests.append(SixtopRequest(link, Action.DELETE, int(p[i])))
            continue
        u = int(votes[i])
        if u > 0:
            requests.append(SixtopRequest(link, Action.ADD, u))
        elif u < 0:
            requests.append(SixtopRequest(link, Action.DELETE, -u))
    return requests


def lv_schedule_frame(
    states: Mapping[Link, LinkState],
    conflict_sets: ConflictSets,
    n_slots: int,
    n_channels: int,
) -> list[SixtopRequest]:
    """One frame of the voting loop over a frozen snapshot of ``states``.

    Each state's ``u`` and ``x`` are updated in place; requests come back in
    (src, dst) order.
    """
    links = sorted(states)
    votes = []
    zero = []
    for link in links:
        st = states[link]
        st.x = compute_load(st.q, st.p)
        if _scaled_qsum(link, states, conflict_sets, n_channels) == 0:
            zero.append(True)
            votes.append(-st.p)
        else:
            zero.append(False)
            votes.append(compute_u(link, states, conflict_sets, n_slots, n_channels))
    for link, u in zip(links, votes):
        states[link].u = u
    return _requests_from_votes(
        links, [states[l].q for l in links], [states[l].p for l in links], votes, zero
    )


class VotingMatrix:
    """Vectorised voting for a fixed link set, used by the simulator's inner loop.

    Produces the same votes as :func:`compute_u` (integer arithmetic on the
    ``M``-scaled queue sum).
    """

    def __init__(self, links: list[Link], conflict_sets: ConflictSets, n_channels: int):
        self.links = sorted(Link(*l) for l in links)
        self.n_channels = n_channels
        index = {l: i for i, l in enumerate(self.links)}
        n = len(self.links)
        weights = np.zeros((n, n), dtype=np.int64)
        for i, link in enumerate(self.links):
            weights[i, i] = n_channels
            for other, kind in conflict_sets[link].items():
                j = index.get(other)
                if j is not None:
                    weights[i, j] = n_channels if kind is ConflictKind.PRIMARY else 1
        self.weights = weights

    def votes(self, q: np.ndarray, p: np.ndarray, n_slots: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(u, qsum_is_zero)``; ``u = -p`` where the sum is zero."""
        q = np.asarray(q, dtype=np.int64)
        p = np.asarray(p, dtype=np.int64)
        scaled = self.weights @ q
        zero = scaled == 0
        safe = np.where(zero, 1, scaled)
        share = (2 * q * n_slots * self.n_channels + safe) // (2 * safe)
        return np.where(zero, -p, share - p), zero

    def schedule_frame(self, q, p, n_slots: int) -> list[SixtopRequest]:
        u, zero = self.votes(q, p, n_slots)
        return _requests_from_votes(self.links, q, p, u, zero)
