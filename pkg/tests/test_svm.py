import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import blobs
from oracles import qp_dual_oracle
from vibrofdd.errors import SingleClass
from vibrofdd.svm import (
    OVA, BinarySvm, KernelSpec, coding_matrix, decision, dual_objective, gaussian_kernel, gram,
    hinge_losses, ova_predict, ova_train, smo_solve, smo_train,
)


def _two_points(c):
    return smo_train(np.array([[0.0], [2.0]]), np.array([1.0, -1.0]), c, KernelSpec(2.0))


def test_kernel_values():
    assert gaussian_kernel([1.5, -2.0], [1.5, -2.0], 3.0) == 1.0
    assert gaussian_kernel([0.0], [2.0], 2.0) == pytest.approx(math.exp(-1), abs=1e-12)


def test_gram_psd():
    x = np.random.default_rng(0).standard_normal((10, 3))
    k = gram(x, x, 1.3)
    assert np.allclose(k, k.T)
    assert np.linalg.eigvalsh(k).min() >= -1e-9


def test_closed_form_two_points():
    m = _two_points(10.0)
    alpha = np.abs(m.dual_coefs)
    assert np.allclose(alpha, 1 / (1 - math.exp(-1)), atol=1e-6)
    assert abs(m.bias) <= 1e-9
    assert decision(m, np.array([0.0])) > 0
    assert abs(decision(m, np.array([1.0]))) <= 1e-12


def test_box_clipped_two_points():
    m = _two_points(0.5)
    assert np.allclose(np.abs(m.dual_coefs), 0.5)


def test_separable_six_points_vs_oracle():
    x = np.array([[0.0, 0], [0.5, 0.3], [0.2, 0.9], [3, 3], [3.4, 2.5], [2.7, 3.6]])
    y = np.array([1.0, 1, 1, -1, -1, -1])
    k = gram(x, x, 1.5)
    res = smo_solve(k, y, 10.0)
    ref, _ = qp_dual_oracle([k], [y], [10.0], iterations=20_000)
    ours = dual_objective(res.alpha, y, k)
    assert ours >= ref[0] - 1e-3 * abs(ref[0])
    assert abs(ours - ref[0]) <= 1e-3 * abs(ref[0])


def _kkt_ok(alpha, y, f, c, tol):
    m = y * f
    zero = alpha <= 1e-8
    at_c = alpha >= c - 1e-8
    free = ~zero & ~at_c
    return (np.all(m[zero] >= 1 - tol) and np.all(np.abs(m[free] - 1) <= tol)
            and np.all(m[at_c] <= 1 + tol))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kkt_and_feasibility(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 13))
    x = rng.standard_normal((n, 2))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    c = float(rng.uniform(0.1, 100))
    k = gram(x, x, float(rng.uniform(0.5, 5)))
    res = smo_solve(k, y, c)
    assert res.converged
    a = res.alpha
    assert np.all(a >= 0) and np.all(a <= c + 1e-9)
    assert abs(a @ y) <= 1e-6 * c * n
    f = k @ (a * y) + res.bias
    assert _kkt_ok(a, y, f, c, 1e-3)


def test_model_invariants_and_margins(three_blobs):
    x, labels, _ = three_blobs
    y = np.where(labels == 0, 1.0, -1.0)
    m = smo_train(x, y, 10.0, KernelSpec(1.0))
    assert abs(np.sum(m.dual_coefs)) <= 1e-6 * 10.0 * len(m.dual_coefs)
    assert np.all(np.abs(m.dual_coefs) > 0) and np.all(np.abs(m.dual_coefs) <= 10.0)
    free = np.abs(m.dual_coefs) < 10.0 - 1e-8
    sv_labels = np.sign(m.dual_coefs)
    f = m.decision_function(m.support_vectors)
    assert np.all(sv_labels[free] * f[free] >= 1 - 1e-3)


def test_support_vector_order_invariance(three_blobs):
    x, labels, _ = three_blobs
    m = smo_train(x, np.where(labels == 1, 1.0, -1.0), 10.0, KernelSpec(1.0))
    perm = np.random.default_rng(0).permutation(len(m.dual_coefs))
    shuffled = BinarySvm(m.support_vectors[perm], m.dual_coefs[perm], m.bias, m.kernel, m.box_constraint)
    probe = np.random.default_rng(1).standard_normal((30, 2)) * 2 + 2
    assert np.allclose(m.decision_function(probe), shuffled.decision_function(probe), atol=1e-12)


def test_single_class_rejected():
    with pytest.raises(SingleClass):
        smo_train(np.zeros((3, 1)), np.ones(3))
    with pytest.raises(SingleClass):
        ova_train(np.zeros((3, 1)), np.zeros(3, dtype=int))


def test_imbalanced_class_sizes_use_all_rows():
    rng = np.random.default_rng(0)
    sizes = (42, 118, 80)
    labels = np.repeat([0, 1, 2], sizes)
    x = rng.standard_normal((240, 2)) + np.array([[0, 0], [5, 0], [0, 5]])[labels]
    m = ova_train(x, labels, 10.0, KernelSpec(2.0))
    assert len(m.learners) == 3
    for learner in m.learners:
        # every row took part: the decision values reproduce on all 240 rows
        assert learner.decision_function(x).shape == (240,)
    assert m.coding.shape == (3, 3)


def test_blobs_perfect_and_deep_point(three_blobs):
    x, labels, centers = three_blobs
    m = ova_train(x, labels, 10.0, KernelSpec(1.0))
    assert np.all(m.predict(x) == labels)
    cls, losses = ova_predict(m, centers[2])
    assert cls == 2
    assert losses[2] < np.delete(losses, 2).min()


def test_saturated_and_tied_decoding():
    coding = coding_matrix(3, OVA)
    losses = hinge_losses(coding, np.array([5.0, -5.0, -5.0]))[0]
    assert losses[0] == 0.0
    tie = hinge_losses(coding, np.zeros(3))[0]
    assert np.allclose(tie, 1.0)
    assert int(np.argmin(tie)) == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_decoding_agrees_with_argmax(f):
    f = np.array(f)
    # a positive score below ~1e-12 changes the losses by less than one ulp
    if np.sum(f > 0) != 1 or np.max(f) < 1e-12:
        return
    losses = hinge_losses(coding_matrix(3, OVA), f)[0]
    assert int(np.argmin(losses)) == int(np.argmax(f))


def test_one_vs_one_trains(three_blobs):
    x, labels, _ = three_blobs
    m = ova_train(x, labels, 10.0, KernelSpec(1.0), scheme="one-vs-one")
    assert np.all(m.predict(x) == labels)


def test_nonconvergence_warns():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 2))
    y = np.where(rng.random(40) < 0.5, 1.0, -1.0)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        m = smo_train(x, y, 100.0, KernelSpec(0.3), max_passes=1)
    assert not m.converged
    assert any(r.category.__name__ == "NoConvergence" for r in rec)
