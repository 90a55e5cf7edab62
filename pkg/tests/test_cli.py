import csv
import glob
import json
import os

import pytest
from hypothesis import given, settings, strategies as st

from rwce.cli import main, run_pipeline
from rwce.config import ConfigError, ExperimentConfig, load_config
from rwce.report import CheckRow, emit, to_json

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


def write_cfg(tmp_path, **kw):
    d = ExperimentConfig(**kw).to_dict()
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return str(p)


def test_shipped_configs_load_and_round_trip():
    paths = sorted(glob.glob(os.path.join(CONFIGS, "*.json")))
    assert len(paths) >= 12
    for p in paths:
        cfg = load_config(p)
        again = ExperimentConfig.from_dict(json.loads(to_json(cfg.to_dict())))
        assert again == cfg


@settings(max_examples=30, deadline=None)
@given(radii=st.lists(st.integers(1, 30), min_size=1, max_size=6, unique=True).map(sorted),
       horizon=st.integers(1, 10 ** 6), trials=st.integers(1, 10 ** 5), seed=st.integers(0, 2 ** 64 - 1),
       amp=st.floats(0, 10), rate=st.floats(0, 0.99), solver=st.floats(1e-14, 1e-3))
def test_config_round_trip(radii, horizon, trials, seed, amp, rate, solver):
    cfg = ExperimentConfig(radii=radii, horizon=horizon, trials=trials, seed=seed,
                           environment={"kind": "scheduled", "amplitude": amp, "rate": rate, "p": 2.0},
                           tolerances={"solver": solver, "mc_sigma": 4.0})
    cfg.validate()
    assert ExperimentConfig.from_dict(json.loads(to_json(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("bad", [
    {"weights": {"kind": "constant", "value": -1.0}},
    {"weights": {"kind": "edges", "values": [[0, 1, -2.0]]}},
    {"radii": [3, 2]},
    {"horizon": 0},
    {"trials": -5},
    {"seed": -1},
    {"tolerances": {"solver": 0.0}},
    {"graph": {"family": "hypercube", "params": {}}},
    {"environment": {"kind": "once_reinforced", "delta": -1.0}},
    {"environment": {"kind": "teleport"}},
    {"unknown_field": 1},
])
def test_invalid_config_exit_2(tmp_path, bad, capsys):
    d = ExperimentConfig().to_dict()
    d.update(bad)
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    with pytest.raises(ConfigError):
        load_config(p)
    assert main(["analyze", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "rwce:" in capsys.readouterr().err


def test_missing_and_malformed_config(tmp_path):
    assert main(["analyze", "--config", str(tmp_path / "nope.json")]) == 2
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert main(["analyze", "--config", str(p)]) == 2


def test_analyze_line_profile_csv(tmp_path):
    cfg = write_cfg(tmp_path, radii=list(range(2, 11)))
    out = tmp_path / "o"
    assert main(["analyze", "--config", cfg, "--out", str(out), "--format", "csv"]) == 0
    text = (out / "profile.csv").read_text()
    assert text.splitlines()[0] == "radius,effective_resistance"
    rows = list(csv.DictReader(text.splitlines()))
    assert [int(r["radius"]) for r in rows] == list(range(2, 11))
    for r in rows:
        assert float(r["effective_resistance"]) == pytest.approx(int(r["radius"]) / 2, abs=1e-12)
    ledger = list(csv.DictReader((out / "ledger.csv").read_text().splitlines()))
    assert ledger and all(r["paper_anchor"] for r in ledger)


def test_report_json_schema(tmp_path):
    cfg = write_cfg(tmp_path, radii=[2, 4, 6], horizon=300, trials=50,
                    environment={"kind": "once_reinforced", "delta": 2.0})
    out = tmp_path / "o"
    assert main(["report", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == "1" and rep["subcommand"] == "report"
    assert set(rep["provenance"]) == {"config_hash", "seed", "artifact_version"}
    for key in ("profile", "slowness", "ratio_certificates", "simulation", "classification"):
        assert rep[key] is not None
    for row in rep["ledger"]:
        assert row["paper_anchor"]
        assert row["passed"] == CheckRow(None, "", "", row["measured"], row["threshold"], row["relation"]).passed
    assert rep["all_passed"] == all(r["passed"] for r in rep["ledger"])
    # snake_case keys throughout
    def keys(o):
        if isinstance(o, dict):
            for k, v in o.items():
                yield k
                yield from keys(v)
        elif isinstance(o, list):
            for v in o:
                yield from keys(v)
    assert all(k == k.lower() and " " not in k for k in keys({k: v for k, v in rep.items() if k != "config"}))


def test_seed_override(tmp_path):
    cfg = write_cfg(tmp_path, radii=[2, 3], horizon=50, trials=5)
    out = tmp_path / "o"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--seed", "77"]) == 0
    assert json.loads((out / "report.json").read_text())["provenance"]["seed"] == 77


def test_unwritable_output(tmp_path):
    cfg = write_cfg(tmp_path, radii=[2, 3])
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["analyze", "--config", cfg, "--out", str(blocker / "sub")]) == 2


def test_truncation_exit_3(tmp_path):
    cfg = write_cfg(tmp_path, graph={"family": "tree", "params": {"b": 3}}, radii=[1, 2], horizon=500,
                    trials=10, max_radius=3, on_truncation="raise")
    out = tmp_path / "o"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 3
    rep = json.loads((out / "report.json").read_text())
    assert rep["truncation"] is not None and not rep["all_passed"]


def test_reemit_byte_identical(tmp_path):
    cfg = ExperimentConfig(radii=[2, 3, 4], horizon=100, trials=20)
    rep, code = run_pipeline(cfg, "simulate")
    assert code == 0
    for fmt in ("json", "csv"):
        a = emit(rep, tmp_path / f"a_{fmt}", fmt)
        b = emit(rep, tmp_path / f"b_{fmt}", fmt)
        for x, y in zip(a, b):
            assert open(x, "rb").read() == open(y, "rb").read()


def test_json_number_format():
    assert to_json(0.1).strip() == "0.10000000000000001"
    assert to_json(2.0).strip() == "2.0"
    assert to_json(1 / 3).strip() == "0.33333333333333331"
    assert to_json(1e-300).strip() == "1e-300"
    assert to_json([float("inf"), float("nan")]).strip() == '["inf", "nan"]'
    assert json.loads(to_json({"a": [1, 2.5, None, True]})) == {"a": [1, 2.5, None, True]}


def test_check_row_relations():
    assert CheckRow(1, "x", "a", 1.0, 1.0, "<=").passed
    assert not CheckRow(1, "x", "a", 1.0, 1.0, ">").passed
    assert not CheckRow(1, "x", "a", float("nan"), 1.0, "<=").passed


def test_verify_shipped_line_fixture(tmp_path):
    out = tmp_path / "o"
    code = main(["verify", "--config", os.path.join(CONFIGS, "line_static.json"), "--out", str(out)])
    rep = json.loads((out / "report.json").read_text())
    assert code == 0 and rep["all_passed"]
    assert {r["criterion"] for r in rep["ledger"]} >= set(range(1, 12))
