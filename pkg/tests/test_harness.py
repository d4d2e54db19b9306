import csv
import json

import numpy as np
import pytest

from gammacal import harness
from gammacal.harness import SCALES, Scale, median, run_experiment, run_replicate
from gammacal.models import FOREST_GRID_DESK


@pytest.fixture
def tiny(monkeypatch):
    sc = Scale("tiny", 250, 50, FOREST_GRID_DESK[:1])
    monkeypatch.setitem(SCALES, "tiny", sc)
    return sc


def test_median_convention():
    assert median([3, 1, 2]) == 2
    assert median([4, 1, 3, 2]) == 2.5
    assert np.isnan(median([]))


def test_scales():
    assert SCALES["desk"].n_cap == 500 and SCALES["desk"].B == 200
    assert SCALES["paper"].n_cap is None and SCALES["paper"].B == 500
    with pytest.raises(ValueError):
        run_replicate(1, 0, scale="huge")


def test_replicate_record(tiny):
    rec = run_replicate(1, 0, scale="tiny")
    assert rec["status"] == "ok", rec.get("traceback")
    for m in harness.METHODS:
        assert rec[m] >= 1.0
    assert len(rec["curve"]) == 20
    assert rec["lb_rct"] <= 13 and rec["lb_nco"] <= 13


def test_failure_is_isolated(tiny, monkeypatch):
    calls = {"n": 0}
    real = harness.nco_lower_bound

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 2:
            raise FloatingPointError("boom")
        return real(*args, **kwargs)

    monkeypatch.setattr(harness, "nco_lower_bound", flaky)
    res = run_experiment(1, replicates=3, scale="tiny", robustness=False)
    status = [r["status"] for r in res.records]
    assert status == ["ok", "failed", "ok"]
    assert "FloatingPointError" in res.records[1]["error"]
    assert res.summary["n_ok"] == 2


def test_outputs_written_and_tagged(tiny, tmp_path):
    res = run_experiment(2, replicates=2, scale="tiny", out_dir=tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"summary.csv", "records.json", "robustness.csv", "plotdata.csv",
            "boxplot.csv", "manifest.json"} <= names
    for name in ("summary.csv", "robustness.csv", "plotdata.csv", "boxplot.csv"):
        with open(tmp_path / name, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows and all(r["scale"] == "tiny" for r in rows), name
    summary = next(csv.DictReader(open(tmp_path / "summary.csv")))
    assert float(summary["lb_rct_median"]) == pytest.approx(res.summary["lb_rct"]["median"])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["scale"]["name"] == "tiny" and len(manifest["replicate_seeds"]) == 2
    records = harness.load_records(tmp_path / "records.json")
    assert records["records"][0]["seed"] == res.records[0]["seed"]
    rob = {r["choice"]: r for r in res.robustness}
    assert set(rob) == {"gamma_1", *harness.METHODS, "gamma_star"}
    assert 0 <= rob["gamma_1"]["pct_null"] <= 100


def test_replicate_seeds_shared_across_experiments(tiny):
    a = run_experiment(1, replicates=2, scale="tiny", robustness=False)
    b = run_experiment(7, replicates=2, scale="tiny", robustness=False)
    assert [r["seed"] for r in a.records] == [r["seed"] for r in b.records]


def test_workers_do_not_change_results(tiny):
    one = run_experiment(9, replicates=2, scale="tiny", robustness=False)
    two = run_experiment(9, replicates=2, scale="tiny", robustness=False, workers=2)
    keys = ("ib_logistic", "ib_forest", "lb_rct", "lb_nco", "curve")
    for r1, r2 in zip(one.records, two.records):
        assert {k: r1[k] for k in keys} == {k: r2[k] for k in keys}
