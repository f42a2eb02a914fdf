import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from cogol.data import SyntheticKind, SyntheticSpec, make_synthetic, train_test_split
from cogol.evaluation import evaluate
from cogol.model import Dataset, Mode, NonFiniteError, OrdinalModel, PenaltySpec, cogol_objective
from cogol.optimizer import (
    DegenerateLabelsError,
    FitSpec,
    fit,
    softplus,
    theta_inverse,
    theta_jacobian,
    theta_parametrization,
)

from oracles import SOFTPLUS_10


def bands(n=200, noise=0.0, seed=0, p=2):
    return make_synthetic(SyntheticSpec(SyntheticKind.PARALLEL_BANDS, n, 5, noise, seed, p=p)).data


# threshold parametrization

def test_theta_examples():
    np.testing.assert_allclose(theta_parametrization([0.0, 0.0, 0.0]),
                               [0.0, math.log(2), 2 * math.log(2)], rtol=1e-15)
    np.testing.assert_allclose(theta_parametrization([-1.0, 10.0, 10.0]),
                               [-1.0, -1.0 + SOFTPLUS_10, -1.0 + 2 * SOFTPLUS_10], rtol=1e-15)


@given(hnp.arrays(np.float64, st.integers(1, 8), elements=st.floats(-40, 40)))
def test_theta_nondecreasing(raw):
    assert np.all(np.diff(theta_parametrization(raw)) >= 0)


@given(hnp.arrays(np.float64, 4, elements=st.floats(-20, 20)))
def test_theta_inverse_roundtrip(raw):
    theta = theta_parametrization(raw)
    if np.all(np.diff(theta) > 1e-12):
        np.testing.assert_allclose(theta_parametrization(theta_inverse(theta)), theta,
                                   rtol=1e-9, atol=1e-9)


def test_theta_jacobian_matches_fd():
    raw = np.array([0.3, -1.2, 2.0, 0.1])
    J = theta_jacobian(raw)
    h = 1e-6
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        fd = (theta_parametrization(raw + e) - theta_parametrization(raw - e)) / (2 * h)
        np.testing.assert_allclose(J[:, i], fd, atol=1e-8)


def test_softplus_large_input():
    assert softplus(1e4) == 1e4
    assert softplus(-1e4) == 0.0


# fit contract

def test_fitspec_validation():
    with pytest.raises(ValueError, match="finite beta"):
        FitSpec(Mode.COGOL, PenaltySpec(0.1, math.inf))
    with pytest.raises(ValueError):
        FitSpec(max_iters=0)
    with pytest.raises(ValueError):
        FitSpec(grad_tol=0.0)


def test_single_class_is_degenerate():
    d = Dataset(np.arange(6.0).reshape(3, 2), [2, 2, 2], 3)
    with pytest.raises(DegenerateLabelsError, match=r"\[2\]"):
        fit(d, FitSpec(Mode.GOL, PenaltySpec(0.1)))


def test_converged_report_respects_tolerance():
    data = bands(150, noise=0.5)
    for mode, beta in ((Mode.OL, math.inf), (Mode.GOL, 0.0), (Mode.COGOL, 0.3)):
        model, rep = fit(data, FitSpec(mode, PenaltySpec(1e-2, beta)))
        assert rep.converged and rep.grad_norm <= 1e-6
        assert rep.iterations < 5000 and rep.wall_time >= 0
        assert model.mode is mode


def test_separable_ol_reaches_zero_training_mae():
    # two classes separated by a margin around a known hyperplane
    rng = np.random.default_rng(4)
    X = rng.normal(size=(120, 2))
    s = X @ np.array([0.6, -0.8])
    keep = np.abs(s) > 0.3
    X, y = X[keep], np.where(s[keep] > 0, 2, 1)
    data = Dataset(X, y, 2)
    model, rep = fit(data, FitSpec(Mode.OL, PenaltySpec(1e-6, math.inf)))
    assert evaluate(model.predict(X), y).mae == 0.0


def test_ol_output_has_monotone_thresholds():
    model, _ = fit(bands(100, noise=1.0, seed=3), FitSpec(Mode.OL, PenaltySpec(1e-3, math.inf)))
    assert model.mode is Mode.OL
    assert np.all(np.diff(model.thresholds) >= 0)
    assert np.all(model.weights == model.weights[0])


def test_cogol_beta_zero_equals_gol():
    data = bands(150, noise=0.4, seed=5)
    _, a = fit(data, FitSpec(Mode.COGOL, PenaltySpec(0.01, 0.0), seed=7))
    _, b = fit(data, FitSpec(Mode.GOL, PenaltySpec(0.01, 0.0), seed=7))
    assert a.final_objective == pytest.approx(b.final_objective, rel=1e-8)


def test_huge_beta_recovers_ol():
    syn = make_synthetic(SyntheticSpec(SyntheticKind.PARALLEL_BANDS, 300, 5, 0.0, 1))
    tr, te = train_test_split(syn.data, 0.25, 0)
    train, test = syn.data.subset(tr), syn.data.subset(te)
    co, _ = fit(train, FitSpec(Mode.COGOL, PenaltySpec(1e-3, 1e9)))
    ol, _ = fit(train, FitSpec(Mode.OL, PenaltySpec(1e-3, math.inf)))
    assert np.linalg.norm(np.diff(co.weights, axis=0), axis=1).max() <= 1e-3
    mae_co = evaluate(co.predict(test.features), test.labels).mae
    mae_ol = evaluate(ol.predict(test.features), test.labels).mae
    assert abs(mae_co - mae_ol) <= 1e-3


def test_different_seeds_reach_same_optimum():
    data = bands(120, noise=0.7, seed=2)
    for mode, beta in ((Mode.OL, math.inf), (Mode.COGOL, 0.5)):
        vals = [fit(data, FitSpec(mode, PenaltySpec(1e-2, beta), seed=s))[1].final_objective
                for s in range(5)]
        assert max(vals) - min(vals) <= 1e-5 * abs(min(vals))


def test_same_seed_is_bit_identical():
    data = bands(80, noise=0.5)
    a, _ = fit(data, FitSpec(Mode.COGOL, PenaltySpec(1e-2, 0.2), seed=3))
    b, _ = fit(data, FitSpec(Mode.COGOL, PenaltySpec(1e-2, 0.2), seed=3))
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.thresholds, b.thresholds)


def test_optimum_nondecreasing_in_beta():
    data = make_synthetic(SyntheticSpec(SyntheticKind.ROTATING_BOUNDARIES, 200, 5, 0.1, 0)).data
    vals = [fit(data, FitSpec(Mode.COGOL, PenaltySpec(1e-2, b)))[1].final_objective
            for b in (0.0, 0.01, 0.1, 1.0, 10.0)]
    assert all(b >= a - 1e-7 for a, b in zip(vals, vals[1:]))


def test_trace_is_monotone_descent():
    recs = []
    data = bands(100, noise=0.5)
    _, rep = fit(data, FitSpec(Mode.COGOL, PenaltySpec(1e-3, 0.1)), trace=recs.append)
    objs = [r.objective for r in recs]
    assert len(recs) == rep.iterations + 1
    assert all(b <= a for a, b in zip(objs, objs[1:]))
    assert recs[-1].objective == rep.final_objective
    assert recs[1].line().startswith("iter=1 objective=")


def test_ol_trace_is_monotone_descent():
    recs = []
    fit(bands(100, noise=0.5), FitSpec(Mode.OL, PenaltySpec(1e-3, math.inf)), trace=recs.append)
    objs = [r.objective for r in recs]
    assert all(b <= a for a, b in zip(objs, objs[1:]))


def test_final_objective_matches_model():
    data = bands(100, noise=0.5)
    pen = PenaltySpec(0.05, 0.3)
    model, rep = fit(data, FitSpec(Mode.COGOL, pen))
    assert cogol_objective(model, data, pen) == pytest.approx(rep.final_objective, rel=1e-12)


def test_iteration_cap_reports_not_converged():
    _, rep = fit(bands(100, noise=0.5), FitSpec(Mode.GOL, PenaltySpec(1e-3), max_iters=2))
    assert rep.iterations == 2 and not rep.converged


def test_nonfinite_objective_names_iteration(monkeypatch):
    from cogol import _accel, optimizer

    monkeypatch.setattr(_accel, "USE_NUMBA", False)
    calls = {"n": 0}
    real = optimizer._GeneralizedProblem.value_grad

    def poisoned(self, z):
        calls["n"] += 1
        f, g = real(self, z)
        if calls["n"] >= 3:
            g = g.copy()
            g[0] = np.nan
        return f, g

    monkeypatch.setattr(optimizer._GeneralizedProblem, "value_grad", poisoned)
    with pytest.raises(NonFiniteError, match="iteration 2"):
        fit(bands(60, noise=0.5), FitSpec(Mode.GOL, PenaltySpec(1e-3)))


def test_compiled_nonfinite_status_is_raised(monkeypatch):
    from cogol import _accel, optimizer

    def broken(self, z, spec):
        hist = np.zeros((spec.max_iters + 1, 3))
        return z, 1.0, 0.5, 4, hist, 1

    monkeypatch.setattr(optimizer._GeneralizedProblem, "run_compiled", broken)
    monkeypatch.setattr(_accel, "USE_NUMBA", True)
    with pytest.raises(NonFiniteError, match="iteration 4"):
        fit(bands(60, noise=0.5), FitSpec(Mode.GOL, PenaltySpec(1e-3)))


@pytest.mark.parametrize("mode,beta", [(Mode.OL, math.inf), (Mode.COGOL, 0.5)])
def test_compiled_and_python_loops_agree(monkeypatch, mode, beta):
    from cogol import _accel

    if not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    data = bands(120, noise=0.7, seed=2)
    spec = FitSpec(mode, PenaltySpec(1e-2, beta))
    monkeypatch.setattr(_accel, "USE_NUMBA", True)
    a, ra = fit(data, spec)
    monkeypatch.setattr(_accel, "USE_NUMBA", False)
    b, rb = fit(data, spec)
    assert ra.final_objective == pytest.approx(rb.final_objective, rel=1e-10)
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-5)
    np.testing.assert_allclose(a.thresholds, b.thresholds, atol=1e-5)


def test_fit_does_not_mutate_inputs():
    data = bands(60, noise=0.5)
    before = data.features.copy()
    fit(data, FitSpec(Mode.COGOL, PenaltySpec(1e-2, 1.0)))
    np.testing.assert_array_equal(data.features, before)


def test_model_result_is_ordinal_model():
    m, _ = fit(bands(60, noise=0.5), FitSpec(Mode.GOL, PenaltySpec(1e-2)))
    assert isinstance(m, OrdinalModel) and m.weights.shape == (4, 2)
