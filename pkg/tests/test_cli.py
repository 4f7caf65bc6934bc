from dataclasses import replace

import numpy as np
import pytest

from lvtsch.cli import main
from lvtsch.engine import SimConfig
from lvtsch.experiments import ScenarioGrid, parse_config, run_seeds
from lvtsch.replay import EXAMPLE_LINKS, data_path, example_topology
from lvtsch.schedule import Cell, Schedule, add_cells, dump_schedule
from lvtsch.topology import Link, dump_topology, interference_sets

SMALL = "n_nodes = 15\ncycles_per_run = 30\nburst_times = 1.0, 10.0\n"


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return str(path)


def test_parse_config():
    cfg = parse_config(SMALL + "# comment\nscheduler = otf\npropagation.exponent = 2.5\n")
    assert (cfg.n_nodes, cfg.cycles_per_run, cfg.burst_times) == (15, 30, (1.0, 10.0))
    assert cfg.scheduler == "otf" and cfg.propagation.exponent == 2.5


@pytest.mark.parametrize("text", ["bogus = 1", "n_nodes = many", "n_nodes 4", "scheduler = sf0"])
def test_parse_config_rejects(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_every_setup_row_is_a_key():
    cfg = parse_config(
        "slotframe_length = 101\nn_channels = 16\nqueue_capacity = 100\nmax_mac_retries = 5\n"
        "housekeeping_period = 1.0\notf_threshold = 4\nrpl_parents = 3\npackets_per_burst = 25\n"
        "n_nodes = 50\narea_side = 2000\nslot_duration = 0.01\nburst_times = 20, 60\n"
    )
    assert cfg == replace(SimConfig(), rpl_parents=3, packets_per_burst=25)


def test_grid_validation_and_size():
    with pytest.raises(ValueError):
        ScenarioGrid(parents=())
    with pytest.raises(ValueError):
        ScenarioGrid(seeds=0)
    scenarios = ScenarioGrid().scenarios(SimConfig())
    otf = [s for s in scenarios if s.scheduler == "otf"]
    assert len(otf) == 24 and len(scenarios) == 30


def test_worker_count_does_not_change_results():
    cfg = SimConfig(n_nodes=12, cycles_per_run=20, burst_times=(1.0,))
    assert run_seeds(cfg, range(4), workers=1) == run_seeds(cfg, range(4), workers=2)


def test_replay_command(capsys):
    assert main(["replay"]) == 0
    out = capsys.readouterr().out
    assert "matches" in out and len(out.splitlines()) >= 15


def test_replay_command_detects_mismatch(tmp_path, capsys):
    text = data_path("lv_evolution.txt").read_text().replace("\n3 2 3 2 -1", "\n3 2 4 2 -1")
    fixture = tmp_path / "bad.txt"
    fixture.write_text(text)
    assert main(["replay", "--fixture", str(fixture)]) == 1
    assert "frame 3" in capsys.readouterr().err


def test_run_is_byte_identical(tmp_path, small_config):
    for d in ("a", "b"):
        assert main(["run", "--config", small_config, "--seed", "4", "--seeds", "3", "--out-dir", str(tmp_path / d)]) == 0
    for name in ("series.csv", "aggregate.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_event_log(tmp_path, small_config):
    log = tmp_path / "events.csv"
    rc = main(["run", "--config", small_config, "--seeds", "1", "--out-dir", str(tmp_path), "--event-log", str(log)])
    assert rc == 0
    lines = log.read_text().splitlines()
    assert lines[0] == "frame,slot,channel,src,dst,outcome" and len(lines) > 1


def test_sweep_rows(tmp_path, small_config):
    rc = main([
        "sweep", "--config", small_config, "--seeds", "2", "--threshold", "0,4",
        "--parents", "1", "--packets-per-burst", "5", "--out-dir", str(tmp_path),
    ])
    assert rc == 0
    rows = (tmp_path / "aggregate.csv").read_text().splitlines()[1:]
    keys = {tuple(r.split(",")[:4]) for r in rows}
    assert keys == {("lv", "", "1", "5"), ("otf", "0", "1", "5"), ("otf", "4", "1", "5")}


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n_nodes = -3\n")
    assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert "n_nodes" in capsys.readouterr().err


def test_unknown_flag():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--warp-speed"])
    assert exc.value.code != 0


@pytest.fixture
def nine_files(tmp_path):
    topo, tree = example_topology()
    topo_path = tmp_path / "nine.topo"
    dump_topology(topo, topo_path)
    return topo, topo_path


def test_verify_clean_schedule(tmp_path, nine_files):
    topo, topo_path = nine_files
    s = Schedule(15, 5)
    rng = np.random.default_rng(0)
    for link in EXAMPLE_LINKS:
        add_cells(s, link, 3, interference_sets(topo, EXAMPLE_LINKS), rng)
    dump = tmp_path / "s.txt"
    dump_schedule(s, dump)
    assert main(["verify", str(dump), "--topology", str(topo_path)]) == 0


def test_verify_flags_conflict(tmp_path, nine_files, capsys):
    _, topo_path = nine_files
    s = Schedule(15, 5, mode="local")
    s.assign(Cell(2, 1), Link(5, 3))
    s.assign(Cell(2, 1), Link(4, 2))
    dump = tmp_path / "s.txt"
    dump_schedule(s, dump)
    assert main(["verify", str(dump), "--topology", str(topo_path)]) == 1
    assert "secondary conflict at slot 2 channel 1" in capsys.readouterr().err
