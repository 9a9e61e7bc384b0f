from __future__ import annotations

import json
import time

import pytest

from ridepool.cli import main, solution_from_json
from ridepool.data import TinyParams, generate_tiny
from ridepool.model import Instance, validate_instance


@pytest.fixture
def synthetic(tmp_path):
    path = tmp_path / "inst.json"
    rc = main(["generate", "--synthetic", "--resources", "3", "--types", "3", "--rounds", "8",
               "--kappa", "2", "--batch-size", "3", "--max-occupancy", "4", "-o", str(path)])
    assert rc == 0
    return path


def test_generate_writes_valid_instance(synthetic):
    inst = Instance.load(synthetic)
    assert validate_instance(inst).ok
    assert (inst.num_resources, inst.num_types, inst.T, inst.kappa) == (3, 3, 8, 2)


def test_generate_needs_exactly_one_source(tmp_path, capsys):
    assert main(["generate", "-o", str(tmp_path / "x.json")]) == 2
    assert "exactly one" in capsys.readouterr().err


def test_missing_and_corrupt_instances_exit_2(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "not found" in err and "cannot read" in err


def test_unknown_flag_exits_2():
    assert main(["simulate", "--no-such-flag"]) == 2


def test_solve_writes_solution(synthetic, capsys):
    out = synthetic.with_suffix(".sol.json")
    assert main(["solve", str(synthetic), "-o", str(out)]) == 0
    assert "LPShare optimum" in capsys.readouterr().out
    sol = solution_from_json(out.read_text())
    assert sol.objective > 0 and sol.values.shape[0] == 3


def test_unit_capacity_routes_to_batch_lp(tmp_path, capsys):
    inst = generate_tiny(TinyParams(max_kappa=1), 0)
    path = tmp_path / "k1.json"
    inst.save(path)
    assert main(["solve", str(path)]) == 0
    assert "LPBatch optimum" in capsys.readouterr().out


def test_simulate_reports_gamma_and_writes_reports(synthetic, tmp_path, capsys):
    out = tmp_path / "res"
    rc = main(["simulate", str(synthetic), "--policy", "adapshare", "--policy", "opera2",
               "--runs", "5", "--beta-samples", "200", "--out", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "adapshare: kappa=2 gamma=0.31767" in text
    rows = (out / "report.csv").read_text().splitlines()
    assert len(rows) == 3
    meta = json.loads((out / "report.json").read_text())
    assert meta["instances"][0]["lp_bound"] > 0
    assert set(meta["summary"]) == {"adapshare", "opera2"}


def test_heuristics_skip_the_lp(synthetic, tmp_path, monkeypatch):
    import ridepool.simulator as sim

    def boom(*a, **k):
        raise AssertionError("LP should not be solved")

    monkeypatch.setattr(sim, "solve_instance", boom)
    rc = main(["simulate", str(synthetic), "--policy", "greedy", "--policy", "random", "--runs", "3",
               "--out", str(tmp_path / "r")])
    assert rc == 0


@pytest.mark.filterwarnings("ignore::ridepool.policies.ClampActivated")
def test_repeated_simulation_is_byte_identical(synthetic, tmp_path):
    args = ["simulate", str(synthetic), "--policy", "opera1", "--policy", "random", "--runs", "4", "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_config_file_with_flags_winning(synthetic, tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text('policy = ["random"]\nruns = 2\nseed = 5\nstem = "fromcfg"\n')
    out = tmp_path / "r"
    assert main(["simulate", str(synthetic), "--config", str(cfg), "--runs", "3", "--out", str(out)]) == 0
    lines = (out / "fromcfg.csv").read_text().splitlines()
    header = lines[0].split(",")
    row = dict(zip(header, lines[1].split(",")))
    assert row["policy"] == "random" and row["runs"] == "3"


def test_bad_config_key_exits_2(synthetic, tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text('{"bogus": 1}')
    assert main(["simulate", str(synthetic), "--config", str(cfg)]) == 2


def test_verify_gamma_is_fast(capsys):
    t0 = time.perf_counter()
    assert main(["verify", "--suite", "gamma"]) == 0
    assert time.perf_counter() - t0 < 1.0
    assert "[PASS] gamma" in capsys.readouterr().out


def test_verify_reports_failure_with_exit_1():
    # an over-aggressive gamma breaks the match-rate target
    assert main(["verify", "--suite", "match-rate", "--episodes", "2000", "--beta-samples", "500", "--gamma", "0.9"]) == 1
