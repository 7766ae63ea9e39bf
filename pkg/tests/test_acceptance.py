"""End-to-end acceptance gate: one recorded verdict per criterion."""

import time

import numpy as np
import pytest

from oracles import best_two_partition_objective, brute_cosine, pair_count_auc, sort_kmax_loss
from test_clustering import check_lloyd_invariants
from wsvad.cli import main
from wsvad.clustering import ClusterResult, kmeans2_best_of
from wsvad.data import SynthConfig, generate_synthetic
from wsvad.evaluation import roc_auc
from wsvad.experiments import COMPONENT_CONFIGS, STRATEGY_CONFIGS, ablate, format_summary
from wsvad.gradcheck import run_gradcheck
from wsvad.guidance import guide_scores, orient_pseudo_labels, rectify_scores
from wsvad.losses import HyperParams, batch_cluster_loss, kmax_loss, num_selected
from wsvad.numcore import make_rng
from wsvad.training import TrainConfig

SEEDS = [0, 1, 2, 3, 4]


def test_gradients(verdict, capsys):
    start = time.perf_counter()
    report = run_gradcheck(segments=4, feature_dim=5, widths=(8, 6, 4, 1))
    assert main(["gradcheck"]) == 0
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    blocks = {(path, name) for path, errs in report.errors.items() for name in errs}
    ok = report.worst < 1e-6 and elapsed < 60 and len(blocks) == 5 * 8
    assert {"tap:fc", "tap:gcn1", "tap:gcn2", "total_loss"} <= set(report.errors)
    assert verdict(1, ok, f"max rel err {report.worst:.2e} over {len(blocks)} blocks in {elapsed:.1f}s")


def test_clustering_oracle(verdict):
    matches = 0
    for seed in range(100):
        rng = make_rng(seed)
        pts = rng.normal(size=(8, 3))
        res = kmeans2_best_of(pts, 20, rng)
        check_lloyd_invariants(pts, res)
        matches += res.objective <= best_two_partition_objective(pts) + 1e-9
    assert verdict(2, matches >= 90, f"{matches}/100 reach the exhaustive optimum; invariants hold in all")


def _result(d: float) -> ClusterResult:
    centers = np.array([[0.0, 0.0], [d, 0.0]])
    return ClusterResult(np.array([0, 1]), centers, d, 0.0, 1, np.array([1, 1]), [0.0])


def test_loss_values(verdict):
    hp = HyperParams(mu=1.0, epsilon_d=1e-6)
    ks = (num_selected(150), num_selected(100))
    rng = make_rng(7)
    exact = 0
    for i in range(1000):
        s = rng.random(int(rng.integers(1, 200)))
        if i % 4 == 0:
            s = np.round(s * 4) / 4  # ties and exact 0/1 scores
        y = int(rng.integers(0, 2))
        exact += kmax_loss(s, y)[0] == sort_kmax_loss(s.tolist(), y)
    branch_err = max(
        abs(batch_cluster_loss(_result(0.4), "normal", hp)[0] - 0.4),
        abs(batch_cluster_loss(_result(2.5), "normal", hp)[0] - 1.0),
        abs(batch_cluster_loss(_result(0.4), "abnormal", hp)[0] - 1 / (0.4 + 1e-6)),
        abs(batch_cluster_loss(_result(3.0), "abnormal", hp)[0] - 1 / (3.0 + 1e-6)),
    )
    rect = rectify_scores(np.array([0.9]), 1, np.array([1]), 1.3)[0]
    ok = ks == (19, 13) and exact == 1000 and branch_err <= 1e-12 and rect == 1.0
    assert verdict(3, ok, f"k={ks}, {exact}/1000 exact k-max, branch err {branch_err:.1e}, rectified {rect}")


def test_guidance(verdict):
    rng = make_rng(21)
    agree = 0
    in_range = True
    for _ in range(1000):
        t = int(rng.integers(2, 65))
        s = rng.random(t)
        yc = rng.integers(0, 2, t)
        pl = orient_pseudo_labels(s, yc)
        s1, s2 = brute_cosine(s.tolist(), yc.tolist()), brute_cosine(s.tolist(), (1 - yc).tolist())
        agree += pl.flipped == (s2 > s1)
        for alpha in (1.0, 1.3, 3.0):
            out = guide_scores(s, 1, yc, alpha, 1.0)
            in_range &= bool(np.all((out >= 0) & (out <= 1)))
    assert verdict(4, agree == 1000 and in_range, f"{agree}/1000 orientations agree; rectified scores in [0,1]: {in_range}")


@pytest.fixture(scope="module")
def default_data():
    return generate_synthetic(SynthConfig())


@pytest.mark.slow
def test_end_to_end(verdict, default_data):
    start = time.perf_counter()
    rows = ablate(*default_data, TrainConfig(), ["+bcg"], SEEDS)
    elapsed = time.perf_counter() - start
    mean = rows[0].mean
    per = " ".join(f"{a:.4f}" for a in rows[0].aucs)
    assert verdict(5, mean >= 0.95 and elapsed <= 600, f"mean AUC {mean:.4f} ({per}) in {elapsed:.0f}s")


@pytest.mark.slow
def test_ablation_direction(verdict):
    data = generate_synthetic(SynthConfig(separation=1.0))
    rows = ablate(*data, TrainConfig(), list(COMPONENT_CONFIGS), SEEDS)
    print(format_summary(rows))
    means = {r.name: r.mean for r in rows}
    gap = means["+bcg"] - means["backbone"]
    shown = ", ".join(f"{k} {v:.4f}" for k, v in means.items())
    assert verdict(6, gap >= -0.02, f"full minus backbone {gap:+.4f}; {shown}")


@pytest.mark.slow
def test_strategy_parity(verdict, default_data):
    names = list(STRATEGY_CONFIGS)
    first = ablate(*default_data, TrainConfig(), names, [0])
    second = ablate(*default_data, TrainConfig(), names, [0])
    deterministic = [a.aucs for a in first] == [b.aucs for b in second]
    aucs = [r.aucs[0] for r in first]
    spread = max(aucs) - min(aucs)
    shown = ", ".join(f"{r.name.split(':')[1]} {r.aucs[0]:.6f}" for r in first)
    assert verdict(7, deterministic and spread <= 0.10, f"deterministic {deterministic}, spread {spread:.4f}; {shown}")


def test_determinism_and_resume(verdict, tmp_path, capsys):
    data = tmp_path / "data"
    synth = ["--dim", "8", "--train-per-class", "6", "--test-per-class", "3", "--synth-seed", "5"]
    assert main(["synth", "--out", str(data), *synth]) == 0
    common = ["--data", str(data), "--batch-size", "4", "--segments", "16", "--widths", "32,16,8,1", "--seed", "3"]

    def metrics(name):
        return (tmp_path / name / "metrics.csv").read_bytes()

    for name in ("a", "b", "full"):
        assert main(["train", "--out", str(tmp_path / name), *common, "--epochs", "3" if name != "full" else "6"]) == 0
    assert main(["train", "--out", str(tmp_path / "a"), *common, "--epochs", "6",
                 "--resume", str(tmp_path / "a" / "checkpoint.wsvm")]) == 0
    capsys.readouterr()
    same_seed = metrics("a").startswith(metrics("b"))
    resumed = metrics("a") == metrics("full")
    weights = (tmp_path / "a" / "checkpoint.wsvm").read_bytes() == (tmp_path / "full" / "checkpoint.wsvm").read_bytes()
    assert verdict(8, same_seed and resumed and weights,
                   f"repeat run identical {same_seed}, resumed metrics identical {resumed}, checkpoints identical {weights}")


def test_auc_oracle(verdict):
    rng = make_rng(99)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(2, 201))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = rng.random(n)
        if i % 2:
            s = rng.integers(0, 1 + i % 5, n).astype(float)  # heavy ties, down to all-equal
        worst = max(worst, abs(roc_auc(s, y) - pair_count_auc(s, y)))
    assert verdict(9, worst <= 1e-12, f"max |auc - pair count| {worst:.1e} on 100 instances")

