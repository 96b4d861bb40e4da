import json

import numpy as np
import pytest

from chxray import cli
from chxray.artifacts import atomic_write_text, dump_json, thresholds, to_jsonable, write_csv, write_report
from chxray.config import ConfigError, RunConfig
from chxray.experiments import ACCEPTANCE, CheckResult, run_all


def test_defaults_filled():
    cfg = RunConfig("harmonics")
    assert cfg.params["kmax"] == 6 and cfg.model == "hyperbolic:1"


@pytest.mark.parametrize("kwargs", [dict(command="draw"), dict(command="geodesic", seed=-1),
                                    dict(command="geodesic", seed=True),
                                    dict(command="geodesic", params={"bogus": 1})])
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)


def test_load_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.load(p)
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(p)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": "euclidean"})


def test_roundtrip(tmp_path):
    cfg = RunConfig("transform", model="euclidean", params={"tol": 1e-6}, seed=9)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(p) == cfg


def test_rng_is_pcg64_and_reproducible():
    a, b = RunConfig("geodesic", seed=11).rng(), RunConfig("geodesic", seed=11).rng()
    assert isinstance(a.bit_generator, np.random.PCG64)
    assert np.array_equal(a.random(5), b.random(5))


def test_csv_format(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["a", "b"], [[0.1, np.int64(3)], [1 / 3, "x,y"]])
    raw = p.read_bytes()
    assert raw == b'a,b\r\n0.1,3\r\n0.3333333333333333,"x,y"\r\n'


def test_atomic_write_leaves_no_temp(tmp_path):
    atomic_write_text(tmp_path / "a.txt", "hello")
    atomic_write_text(tmp_path / "a.txt", "bye")
    assert [q.name for q in tmp_path.iterdir()] == ["a.txt"]
    assert (tmp_path / "a.txt").read_text() == "bye"


def test_jsonable():
    d = to_jsonable({"a": np.arange(3), "b": np.float32(0.5), "c": np.nan, "d": np.bool_(True), 1: (1, 2)})
    assert d == {"a": [0, 1, 2], "b": 0.5, "c": None, "d": True, "1": [1, 2]}
    assert json.loads(dump_json(d)) == d


def test_report_schema_rejects_garbage(tmp_path):
    import jsonschema

    with pytest.raises(jsonschema.ValidationError):
        write_report(tmp_path / "r.json", {"command": "geodesic"})
    assert not (tmp_path / "r.json").exists()


def test_thresholds_file():
    t = thresholds()
    assert 0 < t["m0_sigma_ratio_min"] <= t["observed"]["m0_sigma_ratio"]
    assert t["observed"]["m1_max_angle_deg"] <= t["m1_max_angle_deg"]
    assert t["observed"]["counter_probe_defect"] >= t["counter_probe_defect_min"]


def test_acceptance_registry():
    assert len(ACCEPTANCE) == 11


def test_check_result_serialisation():
    r = CheckResult("x", 1.0, 2.0, True, {"k": 1}, seconds=3.0, timings={"a": 1.0})
    assert "seconds" not in r.to_dict() and "timings" not in r.to_dict()
    assert r.line().startswith("[PASS] x")


def test_run_all_subset():
    res = run_all(0, True, names=["escaping_distance_bound"])
    assert [r.name for r in res] == ["escaping_distance_bound"] and res[0].passed


def test_verify_all_failure_exits_2(tmp_path, monkeypatch):
    import chxray.experiments as ex

    monkeypatch.setattr(ex, "run_all", lambda seed, quick: [CheckResult("fake", 1.0, 0.0, False)])
    code = cli.main(["verify-all", "--out-dir", str(tmp_path)])
    assert code == 2
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["status"] == "failed" and rep["results"]["failed"] == ["fake"]
    assert (tmp_path / "diagnostics.json").exists()
