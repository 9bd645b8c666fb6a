"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed even when output capture is on.
"""

import csv
import math
import time
import warnings

import numpy as np
import pytest

from oracles import central_difference_grad, qp_dual_oracle
from vibrofdd import bundle, pca
from vibrofdd.bench import BEARING_ORDER, DEFAULT_SHAFT_HZ
from vibrofdd.cli import main
from vibrofdd.dsp import WaveletConfig, WaveletFamily, dwt, idwt
from vibrofdd.evaluation import REPORT_COLUMNS, ConfusionMatrix, accuracy, class_rates, confusion
from vibrofdd.hpo import Real, SearchSpace, bayes_opt, random_search
from vibrofdd.mlp import MlpModel, loss_and_grad
from vibrofdd.svm import KernelSpec, dual_objective, gram, smo_solve, smo_train

TIMED_COLUMNS = ("training_seconds", "prediction_obs_per_s")


@pytest.fixture
def verdict(capsys):
    def record(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return record


def run(*argv):
    return main([str(a) for a in argv])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- solver and numerics criteria --------------------------------------------


def test_smo_matches_qp_oracle(verdict):
    rng = np.random.default_rng(20240607)
    kernels, labels, cs, results = [], [], [], []
    elapsed = 0.0
    kkt_ok = True
    for _ in range(50):
        n = int(rng.integers(2, 13))
        d = int(rng.integers(1, 4))
        x = rng.standard_normal((n, d))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        y[rng.permutation(n)[:2]] = [1.0, -1.0]
        c = float(rng.uniform(0.1, 100))
        s = float(rng.uniform(0.5, 5))
        k = gram(x, x, s)
        t0 = time.perf_counter()
        res = smo_solve(k, y, c, tol=1e-3)
        elapsed += time.perf_counter() - t0
        a = res.alpha
        margin = y * (k @ (a * y) + res.bias)
        zero, at_c = a <= 1e-8, a >= c - 1e-8
        free = ~zero & ~at_c
        kkt_ok &= bool(res.converged and np.all(margin[zero] >= 1 - 1e-3)
                       and np.all(np.abs(margin[free] - 1) <= 1e-3) and np.all(margin[at_c] <= 1 + 1e-3))
        kernels.append(k)
        labels.append(y)
        cs.append(c)
        results.append(dual_objective(a, y, k))
    ref, _ = qp_dual_oracle(kernels, labels, cs, iterations=100_000)
    rel = np.abs(np.array(results) - ref) / np.maximum(np.abs(ref), 1e-12)
    ok = rel.max() <= 1e-3 and kkt_ok and elapsed < 10.0
    verdict("SMO vs QP oracle", ok,
            f"max rel gap {rel.max():.2e}, KKT {'ok' if kkt_ok else 'violated'}, SMO time {elapsed:.2f}s")


def test_closed_form_two_point_svm(verdict):
    m = smo_train(np.array([[0.0], [2.0]]), np.array([1.0, -1.0]), 10.0, KernelSpec(2.0))
    alpha = np.abs(m.dual_coefs)
    target = 1 / (1 - math.exp(-1))
    ok = np.all(np.abs(alpha - target) <= 1e-6) and abs(m.bias) <= 1e-9
    verdict("closed-form two-point SVM", ok, f"alpha {alpha.tolist()} vs {target:.7f}, b {m.bias:.1e}")


def test_wavelet_perfect_reconstruction(verdict):
    rng = np.random.default_rng(1)
    signals = [rng.standard_normal(1 << int(rng.integers(3, 11))) * 10.0 ** rng.uniform(-3, 3)
               for _ in range(100)]
    worst = 0.0
    t0 = time.perf_counter()
    for family in WaveletFamily:
        for levels in (1, 2, 3):
            cfg = WaveletConfig(family, levels)
            for x in signals:
                err = np.max(np.abs(idwt(dwt(x, cfg), cfg) - x)) / max(1.0, np.max(np.abs(x)))
                worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    verdict("wavelet perfect reconstruction", worst <= 1e-9 and elapsed < 1.0,
            f"worst scaled error {worst:.1e}, {elapsed:.2f}s")


def test_pca_identities(verdict):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((50, 10)) @ rng.standard_normal((10, 10))
    full = pca.fit(x, 10)
    ortho = np.max(np.abs(full.components @ full.components.T - np.eye(10)))
    round_trip = np.max(np.abs(full.inverse_transform(full.transform(x)) - x))
    ey = 0.0
    for k in range(1, 10):
        m = pca.fit(x, k)
        resid = np.sum((x - m.inverse_transform(m.transform(x))) ** 2)
        expect = np.sum(full.explained_variance[k:]) * (len(x) - 1)
        ey = max(ey, abs(resid - expect) / expect)
    ok = ortho <= 1e-9 and round_trip <= 1e-8 and ey <= 1e-6
    verdict("PCA identities", ok, f"orthonormality {ortho:.1e}, round trip {round_trip:.1e}, Eckart-Young {ey:.1e}")


def test_mlp_gradient_check(verdict):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 8))
        model = MlpModel.glorot(d, rng)
        x = rng.standard_normal((10, d))
        y = rng.integers(0, 3, 10)
        _, g = loss_and_grad(model, x, y)
        fd = central_difference_grad(lambda t: loss_and_grad(model.with_params(t), x, y)[0],
                                     model.get_params(), 1e-5)
        rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-5)
        worst = max(worst, float(rel.max()))
    verdict("MLP gradient check", worst < 1e-5, f"max relative error {worst:.2e} over 20 configurations")


def test_bayesian_optimization(verdict):
    space = SearchSpace([Real("u", 0.0, 1.0)])
    f = lambda p: (p["u"] - 0.3) ** 2  # noqa: E731
    dist, bo_best, rs_best = [], [], []
    for seed in range(20):
        best, trace = bayes_opt(f, space, 30, seed)
        dist.append(abs(best["u"] - 0.3))
        bo_best.append(trace.running_best[-1])
        rs_best.append(random_search(f, space, 30, seed)[1].running_best[-1])
    ok = max(dist) < 0.05 and np.median(bo_best) <= np.median(rs_best)
    verdict("Bayesian optimization", ok,
            f"max |best-0.3| {max(dist):.4f}; median best BO {np.median(bo_best):.2e} vs random {np.median(rs_best):.2e}")


# -- end to end through the command line ---------------------------------------


def _pipeline(root, seed=11):
    """synth -> tuned SVM + NN -> fresh random test set -> predictions and report."""
    t0 = time.perf_counter()
    assert run("synth", "--out", root / "train", "--noise", 0.2, "--seed", seed) == 0
    assert run("train", root / "train", "--out", root / "svm.json", "--tune", 30, "--seed", seed) == 0
    assert run("synth", "--out", root / "random", "--counts", "10,10,10", "--noise", 0.2,
               "--seed", seed + 1000) == 0
    assert run("evaluate", root / "svm.json", "--data", root / "random", "--out", root / "svm_eval") == 0
    svm_seconds = time.perf_counter() - t0
    assert run("train", root / "train", "--out", root / "nn.json", "--model", "nn", "--seed", seed) == 0
    assert run("predict", root / "svm.json", root / "random", "--out", root / "pred.csv") == 0
    assert run("evaluate", "--compare", root / "svm.json", root / "nn.json", "--data", root / "random",
               "--train-data", root / "train", "--out", root / "report", "--repeats", 3) == 0
    return svm_seconds


@pytest.fixture(scope="module")
def runs(tmp_path_factory, monkeypatch_module):
    monkeypatch_module.setenv("VIBRO_FDD_THREADS", "1")
    monkeypatch_module.delenv("SOURCE_DATE_EPOCH", raising=False)
    a = tmp_path_factory.mktemp("run_a")
    b = tmp_path_factory.mktemp("run_b")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        seconds = _pipeline(a)
        _pipeline(b)
    return a, b, seconds


@pytest.fixture(scope="module")
def monkeypatch_module():
    mp = pytest.MonkeyPatch()
    yield mp
    mp.undo()


def test_end_to_end_synthetic(verdict, runs):
    root, _, seconds = runs
    pipe = bundle.load(root / "svm.json")
    cv_acc = 1 - pipe.metadata["cv_error"]
    rows = list(csv.reader(open(root / "svm_eval" / "confusion.csv")))
    counts = np.array([[int(v) for v in r[1:]] for r in rows[1:]])
    test_acc = accuracy(ConfusionMatrix(counts))
    ok = pipe.pca.n_components == 18 and cv_acc >= 0.95 and test_acc == 1.0 and counts.sum() == 30
    ok = ok and seconds < 120
    verdict("end-to-end synthetic", ok,
            f"PCA {pipe.pca.n_components}, 5-fold CV accuracy {cv_acc:.3f}, random-set accuracy "
            f"{test_acc:.3f} on {counts.sum()} windows, {seconds:.1f}s")


def test_comparison_report(verdict, runs):
    root = runs[0]
    rows = _rows(root / "report" / "comparison.csv")
    table = (root / "report" / "comparison.txt").read_text()
    want = [k for k, _ in REPORT_COLUMNS]
    ok = (len(rows) == 2 and list(rows[0]) == want and {r["model"] for r in rows} == {"svm", "nn"}
          and all(r[c] != "" for r in rows for c in want) and all(t in table for _, t in REPORT_COLUMNS))
    verdict("SVM vs NN comparison report", ok, f"{len(rows)} rows, columns {list(rows[0])}")


def test_determinism(verdict, runs):
    a, b, _ = runs
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    differing = []
    for rel in files:
        pa, pb = a / rel, b / rel
        if rel.name == "comparison.csv":
            strip = lambda rows: [{k: v for k, v in r.items() if k not in TIMED_COLUMNS} for r in rows]  # noqa: E731
            same = strip(_rows(pa)) == strip(_rows(pb))
        elif rel.name == "comparison.txt":
            continue  # the text rendering of the same timed columns
        else:
            same = pa.read_bytes() == pb.read_bytes()
        if not same:
            differing.append(str(rel))
    verdict("determinism", not differing and len(files) >= 280,
            f"{len(files)} files compared, differing: {differing or 'none'}")


def test_psd_class_peaks(verdict, tmp_path):
    assert run("synth", "--out", tmp_path / "d", "--counts", "1,1,1", "--noise", 0, "--jitter", 0) == 0
    assert run("psd", "--data", tmp_path / "d", "--out", tmp_path / "psd.csv") == 0
    assert run("psd", "--data", tmp_path / "d", "--out", tmp_path / "env.csv", "--envelope",
               "--segment-len", 1024) == 0
    found = {}
    for name, target, path in (
        ("misalignment", 2 * DEFAULT_SHAFT_HZ / 1600, "psd.csv"),
        ("structural_looseness", DEFAULT_SHAFT_HZ / 1600, "psd.csv"),
        ("bearing_problem", BEARING_ORDER * DEFAULT_SHAFT_HZ / 1600, "env.csv"),
    ):
        rows = _rows(tmp_path / path)
        f = np.array([float(r["normalized_frequency"]) for r in rows])
        db = np.array([float(r[f"db_{name}"]) for r in rows])
        peak = f[np.argmax(db)]
        found[name] = (peak / target, abs(peak - target) <= f[1] - f[0])
    ok = all(v[1] for v in found.values())
    verdict("PSD class peaks", ok,
            ", ".join(f"{k} peak at {v[0]:.3f}x target" for k, v in found.items()))


def test_reported_confusion_arithmetic(verdict):
    true = [0] * 9 + [1] * 12 + [2] * 9
    pred = [0] * 8 + [2] + [1] * 12 + [2] * 9
    cm = confusion(true, pred)
    fig22 = (cm.counts[1, 1] == 12 and cm.counts[0, 2] == 1
             and cm.counts.sum() - np.trace(cm.counts) == 1 and abs(accuracy(cm) - 29 / 30) < 1e-12)
    rates = class_rates(ConfusionMatrix(np.array([[36, 0, 1], [1, 35, 0], [0, 0, 36]])))
    # reported order: bearing, misalignment, looseness
    triple = tuple(round(rates[i].tpr, 3) for i in (2, 1, 0))
    ok = fig22 and triple == (1.000, 0.972, 0.973)
    verdict("confusion-matrix arithmetic", ok,
            f"misalignment {cm.counts[1, 1]}/12, looseness->bearing {cm.counts[0, 2]}, "
            f"accuracy {accuracy(cm):.3f}, TPR triple {triple}")
