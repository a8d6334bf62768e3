import copy
import json
import os

import pytest

from cmop_lab.harness import ConfigError, parse_config
from cmop_lab.harness.cli import _threads, main
from cmop_lab.harness.config import grid
from cmop_lab.harness.emit import fmt, write_csv

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
EXAMPLES = os.path.join(ROOT, "configs", "examples")

STEADY = {
    "schema_version": 1,
    "experiment": "steady",
    "model": {"delta": 0.6, "omega": 1.5, "gamma": 1.0, "j": 0.5},
}


def write_cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def read_outputs(out):
    return {n: open(os.path.join(out, n), "rb").read() for n in ("curves.csv", "meta.json", "census.json")}


def test_unknown_key_exit_code_names_key(tmp_path, capsys):
    bad = copy.deepcopy(STEADY)
    bad["solver"] = {"foo": 1}
    assert main(["steady", "--config", write_cfg(tmp_path, bad), "--out", str(tmp_path / "o")]) == 1
    assert "solver.foo" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="'bogus'"):
        parse_config({**STEADY, "bogus": 1})


def test_config_round_trip():
    cfg = parse_config(STEADY)
    again = parse_config(cfg.to_json())
    assert again.data == cfg.data
    assert again.hash() == cfg.hash()
    assert cfg.with_overrides(out="elsewhere").hash() == cfg.hash()
    assert cfg.with_overrides(seed=5).hash() != cfg.hash()


def test_config_validation():
    with pytest.raises(ConfigError):
        parse_config({**STEADY, "schema_version": 2})
    with pytest.raises(ConfigError):
        parse_config({**STEADY, "model": {"gamma": -1.0}})
    with pytest.raises(ConfigError):
        parse_config("{not json")
    assert grid([0.1, 0.4, 0.1]) == [0.1, 0.2, 0.3, 0.4]


def test_number_format():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "1" and fmt(None) == "" and fmt(3) == "3"
    assert float(fmt(1 / 3)) == 1 / 3


def test_header_only_csv(tmp_path):
    path = str(tmp_path / "c.csv")
    write_csv(path, ["a", "b"], [])
    assert open(path).read() == "a,b\n"


def test_bad_command_is_config_error(tmp_path):
    assert main(["nope", "--config", write_cfg(tmp_path, STEADY)]) == 1
    assert main(["steady", "--config", str(tmp_path / "missing.json")]) == 1


def test_solver_failure_exit_code(tmp_path):
    cfg = copy.deepcopy(STEADY)
    cfg["solver"] = {"method": "fixed-point", "max_iter": 1}
    assert main(["steady", "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_closed_steady_is_config_error(tmp_path):
    cfg = copy.deepcopy(STEADY)
    cfg["model"]["gamma"] = 0.0
    assert main(["steady", "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1


def test_threads_precedence(monkeypatch):
    monkeypatch.delenv("CMOP_LAB_THREADS", raising=False)
    assert _threads(None) == 1
    monkeypatch.setenv("CMOP_LAB_THREADS", "3")
    assert _threads(None) == 3
    assert _threads(2) == 2
    monkeypatch.setenv("CMOP_LAB_THREADS", "x")
    with pytest.raises(ConfigError):
        _threads(None)


def test_seed_recorded(tmp_path):
    cfg = os.path.join(EXAMPLES, "census.json")
    out = str(tmp_path / "o")
    assert main(["census", "--config", cfg, "--out", out, "--seed", "42"]) == 0
    meta = json.load(open(os.path.join(out, "meta.json")))
    assert meta["rng_seed"] == 42
    assert meta["config"]["solver"]["seed"] == 42


def test_threads_do_not_change_output(tmp_path, monkeypatch):
    cfg = os.path.join(EXAMPLES, "steady_sweep.json")
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["steady", "--config", cfg, "--out", a, "--threads", "1"]) == 0
    monkeypatch.setenv("CMOP_LAB_THREADS", "3")
    assert main(["steady", "--config", cfg, "--out", b]) == 0
    assert read_outputs(a) == read_outputs(b)


def test_rows_carry_hash_and_version(tmp_path):
    out = str(tmp_path / "o")
    assert main(["steady", "--config", os.path.join(EXAMPLES, "steady_point.json"), "--out", out]) == 0
    lines = open(os.path.join(out, "curves.csv")).read().splitlines()
    assert lines[0].startswith("config_hash,version")
    meta = json.load(open(os.path.join(out, "meta.json")))
    assert lines[1].split(",")[0] == meta["config_hash"]
    assert os.path.exists(os.path.join(out, "timings.json"))
