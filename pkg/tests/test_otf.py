from dataclasses import replace

import pytest

from lvtsch.engine import SimConfig, run
from lvtsch.local_voting import LinkState
from lvtsch.otf import OtfState, otf_schedule_frame, required_cells, update_demand
from lvtsch.schedule import Action, SixtopRequest
from lvtsch.topology import Link

L = Link(1, 0)


def _frame(p, demand, threshold=4):
    otf = OtfState(threshold=threshold, demand={L: demand})
    # queue equal to demand: no backlog, required = ceil(demand)
    return otf_schedule_frame({L: LinkState(q=int(demand), p=p)}, otf, 101)


def test_add_below_required():
    assert _frame(2, 5.0) == [SixtopRequest(L, Action.ADD, 3)]


def test_inside_band_is_quiet():
    assert _frame(5, 5.0) == []
    assert _frame(9, 5.0) == []


def test_delete_above_band():
    assert _frame(12, 5.0) == [SixtopRequest(L, Action.DELETE, 3)]


def test_backlog_raises_requirement():
    assert required_cells(2.0, 2, 101) == 2
    assert required_cells(2.0, 2 + 101, 101) == 3
    assert required_cells(0.0, 0, 101) == 0
    assert required_cells(0.0, 1, 101) == 1


def test_demand_smoothing():
    otf = OtfState(alpha=0.5)
    update_demand(otf, L, 0)
    assert update_demand(otf, L, 10) == 5.0
    assert update_demand(otf, L, 7, alpha=1.0) == 7.0
    otf = OtfState(alpha=0.3)
    for _ in range(200):
        d = update_demand(otf, L, 4)
    assert d == pytest.approx(4.0)


def test_state_validation():
    with pytest.raises(ValueError):
        OtfState(threshold=-1)
    with pytest.raises(ValueError):
        OtfState(alpha=0.0)
    with pytest.raises(ValueError):
        update_demand(OtfState(), L, -1)


def test_low_threshold_is_chattier():
    base = SimConfig(n_nodes=30, scheduler="otf", cycles_per_run=60, burst_times=(5.0, 30.0))
    for seed in range(3):
        eager = run(replace(base, otf_threshold=0, rng_seed=seed))
        lazy = run(replace(base, otf_threshold=10, rng_seed=seed))
        assert eager.requests >= lazy.requests
