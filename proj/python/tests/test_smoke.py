import json
import math

import pytest

import tsearch


def test_confidence_is_geometric_mean():
    lps = [math.log(0.9), math.log(0.8), math.log(0.7)]
    assert tsearch.compute_confidence(lps) == pytest.approx((0.9 * 0.8 * 0.7) ** (1 / 3), abs=1e-12)


def test_value_counts_missing_self_eval_as_zero():
    assert tsearch.node_value(0.8, None) == pytest.approx(0.8)
    assert tsearch.node_value(0.8, 0.5, 1.0, 2.0) == pytest.approx(1.8)


def test_sampling_and_split():
    assert tsearch.uniform_sample((0, 100), 4) == [12, 37, 62, 87]
    pieces = tsearch.uniform_split((10, 110), 3)
    assert pieces[0][0] == 10 and pieces[-1][1] == 110
    assert all(a[1] == b[0] for a, b in zip(pieces, pieces[1:]))
    assert tsearch.interval_iou((0, 10), (5, 15)) == pytest.approx(5 / 15)


def test_config_defaults_and_validation():
    config = tsearch.search_config()
    assert (config["k"], config["n"], config["n_f"]) == (5, 6, 8)
    assert tsearch.search_config({"k": 3})["k"] == 3
    with pytest.raises(ValueError):
        tsearch.search_config({"c1": 0.5, "c2": 0.7})
    with pytest.raises(ValueError):
        tsearch.search_config({"no_such_key": 1})


def test_search_on_a_synthetic_world():
    records = tsearch.generate_corpus()
    assert len(records) == 200
    world = records[0]["world"]
    us = tsearch.search(world, "us")
    assert us["calls_used"] == 1
    bfs = tsearch.search(world, "ts-bfs")
    assert bfs["trace_text"].splitlines()[-1].startswith("calls ")
    assert bfs == tsearch.search(world, "ts-bfs")
    with pytest.raises(ValueError):
        tsearch.search(world, "dfs")


def test_run_manifest_round_trips_through_traces(tmp_path):
    records = tsearch.generate_corpus()[:20]
    report = tsearch.run_manifest(records, "ts", workers=2, out_dir=tmp_path)
    assert report["records"] == 20 and not report["incomplete"]
    assert (tmp_path / "report.json").exists()
    rebuilt = tsearch.report_from_traces(tmp_path / "traces.jsonl")
    assert rebuilt["accuracy"] == report["accuracy"]
    assert json.loads((tmp_path / "report.json").read_text())["correct"] == report["correct"]
