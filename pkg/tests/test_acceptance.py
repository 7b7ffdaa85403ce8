"""End-to-end acceptance runs. Each test prints one PASS/FAIL line with the tolerance it checks.

Criteria 3 and 4 share one pipeline: train on the five non-holdout bundled designs,
then explore the held-out design. Criterion 6 repeats the whole pipeline in a
fresh directory and compares every metric file byte for byte.
"""

import csv
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from hlsgraph.cli import main
from hlsgraph.data import corpus_entries, holdout_design

pytestmark = pytest.mark.slow

TESTS = Path(__file__).parent
TARGETS = ("LAT", "FF", "LUT", "DSP")
HOLDOUT = holdout_design()
TRAIN_DESIGNS = [e["design_id"] for e in corpus_entries() if e["design_id"] != HOLDOUT]
EPOCHS = 100
SEEDS = range(10)
FRONTS = 5
ESTIMATION_BUDGET_S = 15 * 60
CORRECTNESS_BUDGET_S = 5 * 60
ABLATION_EPOCHS = 60
ABLATION_BATCH = 32

CORRECTNESS_SUITE = [
    "test_dse.py::test_pareto_matches_exhaustive_oracle_on_200_instances",
    "test_dse.py::test_pareto_matches_exhaustive_oracle",
    "test_dse.py::test_adrs_hand_cases",
    "test_dse.py::test_adrs_self_distance_zero_on_100_random_fronts",
    "test_model.py::test_permutation_invariance_default_model",
    "test_model.py::test_gradients_match_central_differences",
    "test_directives.py::test_worked_example_space_vector",
    "test_frontend.py::test_fixture_matches_hand_reference",
]


def verdict(capsys, criterion, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'} {detail}")


def cli(*argv):
    status = main([str(a) for a in argv])
    assert status == 0, f"hlsgraph {' '.join(map(str, argv))} exited with {status}"


def read_rows(path, key):
    with open(path) as fh:
        return {r[key]: r for r in csv.DictReader(fh)}


def run_pipeline(root: Path) -> dict:
    """Generate, train both models, explore the holdout over all seeds. Returns timings."""
    timings = {}
    start = time.perf_counter()
    cli("gen-synthetic", "--designs", ",".join(TRAIN_DESIGNS), "--seed", 0, "--out", root / "data")
    cli("train", "--data", root / "data", "--arch", "gnn", "--epochs", EPOCHS, "--seed", 0, "--out", root / "gnn")
    timings["gnn"] = time.perf_counter() - start
    start = time.perf_counter()
    cli("train", "--data", root / "data", "--arch", "deepsets", "--epochs", EPOCHS, "--seed", 0, "--out", root / "deepsets")
    timings["deepsets"] = time.perf_counter() - start
    start = time.perf_counter()
    for seed in SEEDS:
        cli("dse", "--checkpoint", root / "gnn" / "checkpoint.json", "--design", HOLDOUT, "--fronts", FRONTS,
            "--seed", seed, "--out", root / "dse" / f"seed{seed}")
    timings["dse"] = time.perf_counter() - start
    return timings


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("run1")
    return root, run_pipeline(root)


def test_correctness_suites(capsys):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(TESTS / t) for t in CORRECTNESS_SUITE]], capture_output=True, text=True)
    elapsed = time.perf_counter() - start
    ok = proc.returncode == 0 and elapsed < CORRECTNESS_BUDGET_S
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    verdict(capsys, 2, ok, f"{summary}; {elapsed:.0f}s (limit {CORRECTNESS_BUDGET_S}s)")
    assert proc.returncode == 0, proc.stdout[-3000:]
    assert elapsed < CORRECTNESS_BUDGET_S


def test_synthetic_estimation(pipeline, capsys):
    root, timings = pipeline
    gnn = read_rows(root / "gnn" / "test_metrics.csv", "design")
    deep = read_rows(root / "deepsets" / "test_metrics.csv", "design")
    mape = {t: float(gnn["all"][f"MAPE_{t}"]) for t in TARGETS}
    gnn_mean, deep_mean = float(gnn["all"]["MAPE_mean"]), float(deep["all"]["MAPE_mean"])
    within = all(v <= 10.0 for v in mape.values())
    fast = timings["gnn"] <= ESTIMATION_BUDGET_S
    better = gnn_mean < deep_mean
    ok = within and fast and better and len(TRAIN_DESIGNS) >= 5
    verdict(capsys, 3, ok,
            f"{len(TRAIN_DESIGNS)} designs, {EPOCHS} epochs; GNN test MAPE "
            + " ".join(f"{t}={v:.2f}%" for t, v in mape.items())
            + f" (limit 10%); GNN mean {gnn_mean:.2f}% < DeepSets mean {deep_mean:.2f}%: {better}; "
            f"GNN generate+train+eval {timings['gnn']:.0f}s (limit {ESTIMATION_BUDGET_S}s), "
            f"DeepSets train {timings['deepsets']:.0f}s")
    with capsys.disabled():
        for d in TRAIN_DESIGNS:
            print(f"    {d}: GNN " + " ".join(f"{t}={float(gnn[d][f'MAPE_{t}']):.2f}%" for t in TARGETS)
                  + " | DeepSets " + " ".join(f"{t}={float(deep[d][f'MAPE_{t}']):.2f}%" for t in TARGETS))
    assert len(TRAIN_DESIGNS) >= 5
    assert within, mape
    assert fast, timings
    assert better, (gnn_mean, deep_mean)


def test_synthetic_dse(pipeline, capsys):
    root, timings = pipeline
    adrs = np.zeros((len(SEEDS), FRONTS))
    count = np.zeros((len(SEEDS), FRONTS))
    for s in SEEDS:
        report = json.loads((root / "dse" / f"seed{s}" / "dse_report.json").read_text())
        steps = report["steps"]
        assert len(steps) == FRONTS
        adrs[s] = [st["adrs"] for st in steps]
        count[s] = [st["synthesis_count"] for st in steps]
        assert all(a <= b for a, b in zip(count[s], count[s][1:]))
    mean_adrs, mean_count = adrs.mean(axis=0), count.mean(axis=0)
    final_ok = mean_adrs[-1] <= 0.25
    monotone = all(a >= b for a, b in zip(mean_adrs, mean_adrs[1:]))
    grows = all(a < b for a, b in zip(mean_count, mean_count[1:]))
    verdict(capsys, 4, final_ok and monotone and grows,
            f"holdout {HOLDOUT}, {len(SEEDS)} seeds; mean ADRS by K " + " ".join(f"{a:.4f}" for a in mean_adrs)
            + f" (final limit 0.25, non-increasing: {monotone}); mean synthesis_count "
            + " ".join(f"{c:.1f}" for c in mean_count) + f" (growing: {grows}); {timings['dse']:.0f}s")
    assert final_ok and monotone and grows


def test_ablation_harness(tmp_path, capsys):
    cli("gen-synthetic", "--set", "fixture", "--out", tmp_path / "fixture")
    start = time.perf_counter()
    cli("ablate", "--data", tmp_path / "fixture", "--epochs", ABLATION_EPOCHS, "--batch-size", ABLATION_BATCH,
        "--seed", 0, "--out", tmp_path / "ablate")
    elapsed = time.perf_counter() - start
    rows = read_rows(tmp_path / "ablate" / "ablation.csv", "setting")
    means = {k: float(v["MAPE_mean"]) for k, v in rows.items()}
    complete = list(rows) == ["full", "no-data", "no-param", "neither"]
    directional = means["full"] <= means["neither"]
    verdict(capsys, 5, complete and directional,
            f"fixture, {ABLATION_EPOCHS} epochs, batch {ABLATION_BATCH}; mean MAPE " + " ".join(f"{k}={v:.2f}%" for k, v in means.items())
            + f"; full <= neither: {directional}; {elapsed:.0f}s")
    assert complete and directional


METRIC_FILES = ["gnn/metrics.csv", "gnn/test_metrics.csv", "gnn/checkpoint.json",
                "deepsets/metrics.csv", "deepsets/test_metrics.csv", "deepsets/checkpoint.json"] + [
    f"dse/seed{s}/{name}" for s in SEEDS for name in ("dse_report.json", "adrs.csv", "candidates.csv")]


def test_determinism(pipeline, tmp_path_factory, capsys):
    first, _ = pipeline
    second = tmp_path_factory.mktemp("run2")
    run_pipeline(second)
    differing = [f for f in METRIC_FILES if (first / f).read_bytes() != (second / f).read_bytes()]
    verdict(capsys, 6, not differing,
            f"repeated estimation and exploration runs; {len(METRIC_FILES) - len(differing)}/{len(METRIC_FILES)} "
            f"metric files byte-identical" + (f"; differing: {differing}" if differing else ""))
    assert not differing
