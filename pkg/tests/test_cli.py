import csv
import math
import subprocess
import sys

import numpy as np
import pytest

from gravclust import cli, harness


def run(*args):
    return cli.main([str(a) for a in args])


def read(path):
    return list(csv.DictReader(open(path, encoding="utf-8")))


def test_single_run_writes_outputs(tmp_path):
    assert run("run", "--experiment", "single", "--dataset", "data1", "--runs", 2, "--out", tmp_path) == 0
    series = read(tmp_path / "series.csv")
    assert len(series) == 25
    assert set(series[0]) >= {"t", "mean_k_hat", "std_k_hat", "k_true", "p_correct", "centroid_rmse"}
    summary = read(tmp_path / "summary.csv")
    assert len(summary) == 1 and float(summary[0]["p_corr"]) > 0.8
    assert len(read(tmp_path / "timings.csv")) == 2
    assert "experiment = single" in (tmp_path / "manifest.txt").read_text()


def test_same_seed_gives_identical_files(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("run", "--dataset", "data1", "--runs", 1, "--seed", 7, "--out", out) == 0
    for name in ("series.csv", "summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_manifest_reproduces_run(tmp_path):
    a = tmp_path / "a"
    assert run("run", "--runs", 1, "--seed", 3, "--rx", 0.8, "--contamination", "chi2:0.05", "--out", a) == 0
    b = tmp_path / "b"
    assert run("run", "--config", a / "manifest.txt", "--out", b) == 0
    assert (a / "series.csv").read_bytes() == (b / "series.csv").read_bytes()


def test_flags_override_config_file(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("# sweep\nruns = 5\nseed = 2\nvectors-per-phase = 20\n")
    args = cli.build_parser().parse_args(["run", "--config", str(conf), "--runs", "1"])
    cfg = cli.resolve_config(args)
    assert (cfg.runs, cfg.seed, cfg.vectors_per_phase) == (1, 2, 20)


def test_worker_count_does_not_change_results(tmp_path):
    outs = []
    for w in (1, 2):
        out = tmp_path / f"w{w}"
        assert run("run", "--runs", 3, "--vectors-per-phase", 20, "--workers", w, "--out", out) == 0
        outs.append(out)
    for name in ("series.csv", "summary.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_distributed_non_coop(tmp_path):
    rc = run("run", "--experiment", "distributed", "--mode", "non-coop", "--nodes", 4, "--neighbors", 2,
             "--node-pe", "0,0,0.1,0.1", "--vectors-per-phase", 10, "--runs", 1, "--out", tmp_path)
    assert rc == 0
    nodes = read(tmp_path / "nodes.csv")
    assert {r["node"] for r in nodes} == {"0", "1", "2", "3"}
    assert read(tmp_path / "summary.csv")[0]["mode"] == "non-coop"


def test_distributed_mode_semantics():
    cfg = harness.config_from(dict(experiment="distributed", dataset="data2", nodes=4, neighbors=2,
                                   node_pe="0", vectors_per_phase=10, runs=1))
    a = harness.distributed_run(cfg, 0)
    cfg2 = harness.config_from({**cfg.__dict__, "mode": "non-coop"})
    b = harness.distributed_run(cfg2, 0)
    assert a["k_hat"].shape == b["k_hat"].shape == (len(a["t"]), 4)


def test_convergence_outputs(tmp_path):
    rc = run("run", "--experiment", "convergence", "--runs", 2, "--conv-steps", 80, "--out", tmp_path)
    assert rc == 0
    rows = read(tmp_path / "summary.csv")
    assert [float(r["sigma"]) for r in rows] == [0.5, 3.0, 7.0]
    assert all(float(r["converged_fraction"]) == 1.0 for r in rows)
    assert len(read(tmp_path / "series.csv")) == 3 * 80


def test_demo_fig1_dumps_units(tmp_path):
    assert run("run", "--experiment", "demo-fig1", "--runs", 1, "--out", tmp_path) == 0
    units = read(tmp_path / "units.csv")
    assert {"t", "unit", "x1", "x2", "mass", "is_cluster"} <= set(units[0])
    assert int(units[-1]["t"]) == 50 * 11
    manifest = (tmp_path / "manifest.txt").read_text()
    assert "dataset = fig1" in manifest and "exponent = 2.0" in manifest


def test_timing_records_durations(tmp_path):
    cfg = harness.config_from(dict(experiment="timing", runs=1, vectors_per_phase=10, clusters=1))
    table = harness.run_timing(cfg)
    assert len(table) == 1 and table[0, 1] == 10 and table[0, 2] > 0


def test_timing_grows_with_input():
    cfg = harness.config_from(dict(experiment="timing", runs=5, dmax=math.inf))
    table = harness.run_timing(cfg)
    evals, secs = table[:, 3], table[:, 2]
    # cost per batch follows the number of stored features
    assert np.corrcoef(table[:, 1], evals)[0, 1] > 0.9
    half = len(table) // 2
    assert secs[half:].mean() > secs[:half].mean()


def test_d_max_prunes_force_terms():
    base = dict(experiment="timing", runs=1, dataset="data1")
    full = harness.run_timing(harness.config_from({**base, "dmax": math.inf}))
    cut = harness.run_timing(harness.config_from({**base, "dmax": 5.0}))
    late = slice(-5, None)
    assert cut[late, 3].sum() < full[late, 3].sum()


def test_export_stream(tmp_path):
    out = tmp_path / "s.csv"
    assert run("export-stream", "--dataset", "data2", "--contamination", "gauss:0.1", "--out", out) == 0
    rows = read(out)
    assert len(rows) == 50 * 21 and set(rows[0]) == {"t", "node", "x1", "x2", "x3", "true_cluster", "is_outlier"}


@pytest.mark.parametrize("args", [
    ["run", "--dataset", "nope"],
    ["run", "--bogus"],
    ["run", "--runs", "0"],
    ["run", "--kdamp", "1.5"],
    ["run", "--contamination", "chi2:0.05", "--dataset", "data2"],
    ["run", "--contamination", "weird"],
    [],
])
def test_usage_errors(args, tmp_path):
    assert run(*args, *(["--out", tmp_path] if args else [])) == cli.EXIT_USAGE


def test_bad_config_key(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("colour = blue\n")
    assert run("run", "--config", conf, "--out", tmp_path) == cli.EXIT_USAGE


def test_unwritable_output_is_runtime_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("run", "--runs", 1, "--out", blocker / "sub") == cli.EXIT_RUNTIME


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gravclust", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gravclust" in proc.stdout
