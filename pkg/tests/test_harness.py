import csv
import json
import re

import numpy as np
import pytest

from almgp.active_learning import RunRecord
from almgp.harness import (ExperimentConfig, aggregate, aggregate_dir, plot_dir, read_aggregate,
                           read_records, resolve_output_dir, run_experiment)
from almgp.mgp_model import load_checkpoint, predict_mgp

FAST = {"optim": {"max_iters_per_step": 5, "max_total_iters": 2},
        "refit_optim": {"max_total_iters": 1}, "n_restarts": 0}


def config(tmp_path, name="out", **kw):
    doc = dict(problem="trig1d", repetitions=2, output_dir=str(tmp_path / name),
               al={"N_max": 3}, record_wall_time=False, **FAST)
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def rec(run_id, strategy, it, value):
    return RunRecord(run_id, strategy, it, 10 + it, value, 0.0, np.empty(0))


def rows_of(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_single_round_bundle(tmp_path):
    cfg = config(tmp_path, repetitions=1, strategies=["random"], al={"N_max": 1})
    out = run_experiment(cfg)
    rows = rows_of(out / "records.csv")
    assert len(rows) == 1
    assert rows[0]["strategy"] == "random" and rows[0]["iteration"] == "1"
    assert rows[0]["n_train"] == "11"
    for name in ("selected_points.csv", "aggregate.csv", "rmse_curve.svg", "config.json",
                 "summary.json", "checkpoints/run_0.json"):
        assert (out / name).exists()


def test_bundle_layout(tmp_path):
    out = run_experiment(config(tmp_path))
    header = (out / "records.csv").read_text().splitlines()[0]
    assert header == "run_id,strategy,iteration,n_train,test_rmse,wall_ms"
    rows = rows_of(out / "records.csv")
    keys = [(int(r["run_id"]), int(r["iteration"])) for r in rows]
    assert keys == sorted(keys)
    assert {r["run_id"] for r in rows} == {"0", "1", "2", "3"}
    assert all(int(r["n_train"]) == 10 + int(r["iteration"]) for r in rows)
    pts = rows_of(out / "selected_points.csv")
    assert len(pts) == len(rows) and "x0" in pts[0]
    agg = rows_of(out / "aggregate.csv")
    assert [a["strategy"] for a in agg] == ["alc"] * 3 + ["random"] * 3


def test_determinism(tmp_path):
    a = run_experiment(config(tmp_path, "a"))
    b = run_experiment(config(tmp_path, "b"))
    for name in ("records.csv", "selected_points.csv", "aggregate.csv", "rmse_curve.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seeds_follow_base_seed(tmp_path):
    a = run_experiment(config(tmp_path, "a", repetitions=1, base_seed=1))
    b = run_experiment(config(tmp_path, "b", repetitions=2, base_seed=0))
    first = [r for r in rows_of(a / "records.csv")]
    second = [r for r in rows_of(b / "records.csv") if r["run_id"] in ("2", "3")]
    assert [r["test_rmse"] for r in first] == [r["test_rmse"] for r in second]


def test_checkpoints_reload(tmp_path):
    out = run_experiment(config(tmp_path, repetitions=1))
    model = load_checkpoint(out / "checkpoints" / "run_0.json")
    assert model.n == 13
    mean, var = predict_mgp(model, np.linspace(0, 1, 5)[:, None])
    assert np.all(np.isfinite(mean)) and np.all(var >= 0)


def test_aggregate_arithmetic():
    rows = aggregate([rec(0, "alc", 1, 1.0), rec(1, "alc", 1, 3.0)])
    assert rows == [{"strategy": "alc", "iteration": 1, "mean_rmse": 2.0, "min_rmse": 1.0,
                     "max_rmse": 3.0, "n_runs": 2}]
    single = aggregate([rec(0, "random", 1, 0.5), rec(0, "random", 2, 0.25)])
    assert all(r["mean_rmse"] == r["min_rmse"] == r["max_rmse"] for r in single)


def test_aggregate_carries_early_stopped_runs_forward():
    records = [rec(0, "alc", 1, 0.9), rec(0, "alc", 2, 0.4),
               rec(1, "alc", 1, 0.7), rec(1, "alc", 2, 0.5), rec(1, "alc", 3, 0.3),
               rec(1, "alc", 4, 0.1)]
    # hand-built: run 0 stopped after iteration 2 and holds 0.4 afterwards
    want = [(1, 0.8, 0.7, 0.9), (2, 0.45, 0.4, 0.5), (3, 0.35, 0.3, 0.4), (4, 0.25, 0.1, 0.4)]
    got = [(r["iteration"], r["mean_rmse"], r["min_rmse"], r["max_rmse"])
           for r in aggregate(records)]
    np.testing.assert_allclose(got, want)
    assert all(r["n_runs"] == 2 for r in aggregate(records))


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_reaggregation_is_idempotent(tmp_path):
    out = run_experiment(config(tmp_path))
    before = (out / "aggregate.csv").read_bytes()
    aggregate_dir(out)
    assert (out / "aggregate.csv").read_bytes() == before
    aggregate_dir(out)
    assert (out / "aggregate.csv").read_bytes() == before
    svg = (out / "rmse_curve.svg").read_bytes()
    plot_dir(out)
    assert (out / "rmse_curve.svg").read_bytes() == svg
    assert len(read_records(out / "records.csv")) == 12


def test_svg_is_a_view_of_the_aggregate(tmp_path):
    out = run_experiment(config(tmp_path))
    svg = (out / "rmse_curve.svg").read_text()
    csv_text = (out / "aggregate.csv").read_text()
    series = re.findall(r'data-strategy="(\w+)" data-values="([^"]+)"', svg)
    assert [s for s, _ in series] == ["alc", "random"]
    for _, values in series:
        for entry in values.split(";"):
            for number in entry.split(":")[1:]:
                assert number in csv_text
    assert 'stroke="#2ca02c"' in svg and 'stroke-dasharray' in svg
    assert "<polygon" in svg and "<polyline" in svg
    assert read_aggregate(out / "aggregate.csv")[0]["n_runs"] == 2


def test_unwritable_output_fails_before_compute(tmp_path, monkeypatch):
    blocker = tmp_path / "file"
    blocker.write_text("")
    called = []
    monkeypatch.setattr("almgp.harness._run_repetition", lambda *a: called.append(a))
    with pytest.raises(OSError):
        run_experiment(config(tmp_path, output_dir=str(blocker / "sub")))
    assert not called


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("ALMGP_OUTPUT_ROOT", str(tmp_path / "root"))
    cfg = ExperimentConfig.from_dict({"problem": "trig1d", "output_dir": "exp1"})
    assert resolve_output_dir(cfg) == tmp_path / "root" / "exp1"
    absolute = ExperimentConfig.from_dict({"problem": "trig1d", "output_dir": str(tmp_path)})
    assert resolve_output_dir(absolute) == tmp_path


def test_config_roundtrip_and_overrides(tmp_path):
    cfg = config(tmp_path, arch="1-4-2", data={"n0": 6})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = ExperimentConfig.load(path)
    assert back == cfg
    pb = back.resolved_problem()
    assert pb.arch.layer_sizes == (1, 4, 2)
    assert pb.n0 == 6 and pb.al.N_max == 3
    assert pb.optim.max_total_iters == 2 and pb.refit_optim.max_total_iters == 1
    assert pb.optim.learning_rate == 0.001


@pytest.mark.parametrize("doc", [
    {"problem": "trig1d", "colour": "blue"},
    {"problem": "nope"},
    {"problem": "trig1d", "repetitions": 0},
    {"problem": "trig1d", "version": 99},
])
def test_bad_configs(doc):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(doc).resolved_problem()
