import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from cogol.data import SyntheticKind, SyntheticSpec, make_synthetic, standardize, train_test_split
from cogol.evaluation import evaluate
from cogol.kernel import (
    JITTER,
    DegenerateGeometryError,
    DualModel,
    KernelKind,
    KernelSpec,
    dual_gradient,
    dual_model_from_primal,
    dual_objective,
    dual_penalty,
    fit_kernel,
    gamma_range,
    linear_gram,
    rbf_gram,
)
from cogol.model import DimensionError, Mode, PenaltySpec
from cogol.optimizer import FitSpec, fit

from oracles import EXP_MINUS_1, nearest_rank_quantile


def test_rbf_examples():
    assert rbf_gram(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), 1.0)[0, 0] == pytest.approx(
        EXP_MINUS_1, rel=1e-15)


@given(x=hnp.arrays(np.float64, (1, 3), elements=st.floats(-1e3, 1e3)), gamma=st.floats(1e-6, 1e3))
def test_rbf_self_similarity_is_one(x, gamma):
    assert rbf_gram(x, x, gamma)[0, 0] == 1.0


def test_gram_symmetric_psd():
    X = np.random.default_rng(0).normal(size=(20, 3))
    K = rbf_gram(X, X, 0.8)
    np.testing.assert_array_equal(K, K.T)
    np.testing.assert_array_equal(np.diag(K), 1.0)
    assert np.linalg.eigvalsh(K).min() >= -1e-10


def test_gram_matches_direct_formula():
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    ref = np.array([[math.exp(-0.3 * sum((a - b) ** 2 for a, b in zip(x, y))) for y in Y] for x in X])
    np.testing.assert_allclose(rbf_gram(X, Y, 0.3), ref, rtol=1e-13)


def test_gram_errors():
    with pytest.raises(DimensionError):
        rbf_gram(np.zeros((2, 2)), np.zeros((2, 3)), 1.0)
    with pytest.raises(ValueError):
        rbf_gram(np.zeros((2, 2)), np.zeros((2, 2)), 0.0)
    with pytest.raises(ValueError):
        KernelSpec(KernelKind.RBF, None)


# bandwidth range

def test_gamma_range_two_points():
    lo, hi = gamma_range(np.array([[0.0, 0.0], [3.0, 4.0]]), 2)
    assert (lo, hi) == pytest.approx((2e-4, 2.0), rel=1e-14)


def test_gamma_range_three_collinear_points():
    lo, hi = gamma_range(np.array([[0.0], [3.0], [4.0]]), 3)
    assert (lo, hi) == pytest.approx((0.005, 50.0), rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(2, 9), c=st.floats(0.1, 10))
def test_gamma_range_quantile_and_scaling(seed, k, c):
    X = np.random.default_rng(seed).normal(size=(12, 3))
    lo, hi = gamma_range(X, k)
    d = [math.dist(X[i], X[j]) for i in range(12) for j in range(i + 1, 12)]
    tau = nearest_rank_quantile(d, 1 / k)
    assert lo == pytest.approx(0.01 / (2 * tau * tau), rel=1e-12)
    assert hi == pytest.approx(100 / (2 * tau * tau), rel=1e-12)
    lo2, hi2 = gamma_range(X * c, k)
    assert lo2 == pytest.approx(lo / c**2, rel=1e-10) and hi2 == pytest.approx(hi / c**2, rel=1e-10)


def test_gamma_range_degenerate():
    with pytest.raises(DegenerateGeometryError):
        gamma_range(np.ones((4, 2)), 2)


# dual objective

def problem(seed, n=12, p=3, m=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    K = rbf_gram(X, X, 0.5)
    A = rng.normal(size=(m, n))
    theta = rng.normal(size=m)
    y = rng.integers(1, m + 2, size=n)
    return X, K, A, theta, y


def test_rkhs_norms_nonnegative():
    for s in range(10):
        _, K, A, _, _ = problem(s)
        assert np.einsum("jn,nm,jm->j", A, K, A).min() >= -1e-10


def test_linear_dual_norm_identity():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(10, 4))
    a = rng.normal(size=10)
    assert a @ linear_gram(X, X) @ a == pytest.approx(np.sum((X.T @ a) ** 2), rel=1e-8)


def test_dual_gradient_finite_differences():
    _, K, A, theta, y = problem(4)
    pen = PenaltySpec(0.3, 0.7)
    gA, gt = dual_gradient(A, theta, K, y, pen)
    h = 1e-5
    for idx in [(0, 0), (1, 5), (2, 11)]:
        E = np.zeros_like(A)
        E[idx] = h
        fd = (dual_objective(A + E, theta, K, y, pen) - dual_objective(A - E, theta, K, y, pen)) / (2 * h)
        assert gA[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (dual_objective(A, theta + e, K, y, pen) - dual_objective(A, theta - e, K, y, pen)) / (2 * h)
        assert gt[j] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_dual_objective_midpoint_convex():
    _, K, A, theta, y = problem(5)
    rng = np.random.default_rng(6)
    pen = PenaltySpec(0.1, 0.5)
    for _ in range(50):
        A2, t2 = rng.normal(size=A.shape) * 2, rng.normal(size=3) * 2
        mid = dual_objective((A + A2) / 2, (theta + t2) / 2, K, y, pen)
        avg = (dual_objective(A, theta, K, y, pen) + dual_objective(A2, t2, K, y, pen)) / 2
        assert mid <= avg + 1e-8


def test_dual_penalty_matches_feature_space():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(8, 3))
    A = rng.normal(size=(3, 8))
    W = A @ X
    D = np.diff(W, axis=0)
    assert dual_penalty(A, linear_gram(X, X), 0.2, 0.9) == pytest.approx(
        0.2 * (W * W).sum() + 0.9 * (D * D).sum(), rel=1e-10)


# fitting

def test_zero_coefficients_predict_from_thresholds():
    X = np.random.default_rng(0).normal(size=(5, 2))
    m = DualModel(np.zeros((2, 5)), np.array([-1.0, 1.0]), KernelSpec(KernelKind.RBF, 1.0, X))
    np.testing.assert_array_equal(m.decision_values(X), np.tile([-1.0, 1.0], (5, 1)))
    np.testing.assert_array_equal(m.predict(X), 2)


def test_dual_lift_reproduces_primal():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(15, 3))
    W = rng.normal(size=(2, 3))
    theta = np.array([-0.5, 0.5])
    dm = dual_model_from_primal(W, theta, X, Mode.GOL)
    Xt = rng.normal(size=(7, 3))
    np.testing.assert_allclose(dm.decision_values(Xt), theta - Xt @ W.T, atol=1e-10)


def split_scaled(syn, seed=0):
    tr, te = train_test_split(syn.data, 0.25, seed)
    s = standardize(syn.data.subset(tr), [syn.data.subset(te)])
    return s.train, s.others[0]


def test_linear_kernel_agrees_with_primal():
    syn = make_synthetic(SyntheticSpec(SyntheticKind.ROTATING_BOUNDARIES, 300, 5, 0.1, 2))
    train, test = split_scaled(syn)
    spec = FitSpec(Mode.COGOL, PenaltySpec(1e-2, 0.1))
    primal, _ = fit(train, spec)
    dual, rep = fit_kernel(train, spec, KernelSpec(KernelKind.LINEAR))
    agree = np.mean(primal.predict(test.features) == dual.predict(test.features))
    assert agree >= 0.95
    assert rep.jitter == JITTER


def test_linear_kernel_ol_agrees_with_primal():
    syn = make_synthetic(SyntheticSpec(SyntheticKind.PARALLEL_BANDS, 200, 4, 0.3, 3))
    train, test = split_scaled(syn)
    spec = FitSpec(Mode.OL, PenaltySpec(1e-2, math.inf))
    primal, _ = fit(train, spec)
    dual, _ = fit_kernel(train, spec, KernelSpec(KernelKind.LINEAR))
    assert np.mean(primal.predict(test.features) == dual.predict(test.features)) >= 0.95


def test_rbf_cogol_solves_rings():
    syn = make_synthetic(SyntheticSpec(SyntheticKind.CONCENTRIC_RINGS, 600, 3, 0.0, 0))
    train, test = split_scaled(syn)
    lo, hi = gamma_range(train.features, train.k)
    spec = FitSpec(Mode.COGOL, PenaltySpec(1e-4, 1e-2))
    model, rep = fit_kernel(train, spec, KernelSpec(KernelKind.RBF, math.sqrt(lo * hi)))
    assert evaluate(model.predict(test.features), test.labels).accuracy > 0.9
    assert model.dual_coeffs.shape == (2, train.n)


def test_huge_beta_ties_dual_rows():
    syn = make_synthetic(SyntheticSpec(SyntheticKind.CONCENTRIC_RINGS, 150, 3, 0.0, 1))
    d = syn.data
    kspec = KernelSpec(KernelKind.RBF, 2.0)
    model, rep = fit_kernel(d, FitSpec(Mode.COGOL, PenaltySpec(1e-3, 1e9)), kspec)
    K = rbf_gram(d.features, d.features, 2.0)
    D = np.diff(model.dual_coeffs, axis=0)
    assert np.einsum("jn,nm,jm->j", D, K, D).max() <= 1e-6


def test_kernel_fit_rejects_nonfinite_gram(monkeypatch):
    from cogol import kernel
    from cogol.model import NonFiniteError

    syn = make_synthetic(SyntheticSpec(SyntheticKind.CONCENTRIC_RINGS, 30, 3, 0.0, 1))
    monkeypatch.setattr(kernel.KernelSpec, "gram", lambda self, X, Y: np.full((X.shape[0], Y.shape[0]), np.nan))
    with pytest.raises(NonFiniteError, match="Gram"):
        fit_kernel(syn.data, FitSpec(Mode.GOL, PenaltySpec(1e-2)), KernelSpec(KernelKind.RBF, 1.0))
