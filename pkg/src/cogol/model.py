"""Threshold models, surrogate losses and the coGOL objective.

Conventions
-----------
Labels are 1-based: ``y`` in ``1..k``. A model has ``k - 1`` thresholds
and one weight row per threshold, giving decision values

    g_j(x) = theta_j - w_j . x,        j = 1..k-1

(OL models repeat a single row). The predicted class is one plus the
number of strictly negative decision values.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from . import _kernels

LOG2 = math.log(2.0)


class Mode(str, enum.Enum):
    OL = "ol"
    GOL = "gol"
    COGOL = "cogol"


class LossKind(str, enum.Enum):
    ALL_THRESHOLDS = "all_thresholds"
    IMMEDIATE_THRESHOLD = "immediate_threshold"
    CUMULATIVE_LOGIT = "cumulative_logit"


class DimensionError(ValueError):
    pass


class LabelError(ValueError):
    pass


class NonPositiveProbabilityError(ValueError):
    """Cumulative-logit class probability is <= 0 (non-monotone g)."""


class NonFiniteError(ArithmeticError):
    pass


class DegenerateLabelsWarning(UserWarning):
    pass


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``features`` (n x p) with ordinal ``labels`` in 1..k."""

    features: np.ndarray
    labels: np.ndarray
    k: int
    name: str = ""

    def __post_init__(self):
        X = _frozen(self.features)
        if X.ndim == 1:
            X = _frozen(X.reshape(-1, 1))
        y = np.asarray(self.labels)
        if y.ndim != 1:
            raise DimensionError(f"labels must be a vector, got shape {y.shape}")
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise LabelError("labels must be integers")
        y = _frozen(y, dtype=np.int64)
        if X.ndim != 2:
            raise DimensionError(f"features must be a matrix, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"expected {X.shape[0]} labels, got {y.shape[0]}")
        if X.shape[0] < 1:
            raise ValueError("dataset needs at least one sample")
        if X.shape[1] < 1:
            raise DimensionError("dataset needs at least one feature")
        if not np.all(np.isfinite(X)):
            i, j = np.argwhere(~np.isfinite(X))[0]
            raise NonFiniteError(f"non-finite feature at row {i}, column {j}")
        k = int(self.k)
        if y.min() < 1 or y.max() > k:
            raise LabelError(f"labels must lie in 1..{k}, found range {y.min()}..{y.max()}")
        if k < 2:
            warnings.warn(f"dataset has k={k} classes; fitting requires k >= 2",
                          DegenerateLabelsWarning, stacklevel=3)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "k", k)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.k, self.name)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.k + 1)[1:]


@dataclass(frozen=True)
class PenaltySpec:
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (a >= 0 and math.isfinite(a)):
            raise ValueError(f"alpha must be a finite nonnegative number, got {a}")
        if math.isnan(b) or b < 0:
            raise ValueError(f"beta must be nonnegative or inf, got {b}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def tied(self):
        """True for the infinite-beta sentinel (shared weight row)."""
        return math.isinf(self.beta)


@dataclass(frozen=True)
class OrdinalModel:
    weights: np.ndarray
    thresholds: np.ndarray
    mode: Mode = Mode.COGOL
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        W = _frozen(self.weights)
        t = _frozen(self.thresholds)
        if W.ndim != 2 or t.ndim != 1 or W.shape[0] != t.shape[0]:
            raise DimensionError(
                f"weights must be (k-1, p) and thresholds (k-1,), got {W.shape} and {t.shape}")
        if W.shape[0] < 1:
            raise DimensionError("a model needs at least one threshold")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(t))):
            raise NonFiniteError("model parameters must be finite")
        mode = Mode(self.mode)
        if mode is Mode.OL:
            if not np.all(W == W[0]):
                raise ValueError("OL model requires identical weight rows")
            if np.any(np.diff(t) < 0):
                raise ValueError("OL model requires nondecreasing thresholds")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "mode", mode)

    @property
    def k(self):
        return self.thresholds.shape[0] + 1

    @property
    def p(self):
        return self.weights.shape[1]

    @classmethod
    def ordinal_logit(cls, w, thresholds):
        t = np.asarray(thresholds, dtype=float)
        W = np.tile(np.asarray(w, dtype=float), (t.shape[0], 1))
        return cls(W, t, Mode.OL)

    def decision_values(self, X):
        return decision_values(self, X)

    def predict(self, X):
        return predict(self, X)


def _as_rows(X, p):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X.reshape(1, -1) if single else X
    if X2.ndim != 2 or X2.shape[1] != p:
        raise DimensionError(f"expected {p} features, got {X2.shape[-1]}")
    return X2, single


def decision_values(model, X):
    """``theta_j - w_j . x`` for a vector (returns k-1 values) or a row batch."""
    X2, single = _as_rows(X, model.p)
    G = model.thresholds[None, :] - X2 @ model.weights.T
    return G[0] if single else G


def predict_from_g(G):
    G = np.asarray(G)
    return 1 + np.count_nonzero(G < 0, axis=-1)


def predict(model, X):
    out = predict_from_g(decision_values(model, X))
    return int(out) if np.ndim(out) == 0 else out


def phi(t):
    """Logistic surrogate ``log(1 + exp(-t))`` in its overflow-safe form."""
    t = np.asarray(t, dtype=np.float64)
    return np.maximum(-t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def _check_label(g, y, k):
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (k - 1,):
        raise DimensionError(f"expected {k - 1} decision values, got {g.shape}")
    if not (isinstance(y, (int, np.integer)) and 1 <= y <= k):
        raise LabelError(f"label must be an integer in 1..{k}, got {y!r}")
    return g, int(y)


def all_thresholds_loss(g, y, k):
    g, y = _check_label(g, y, k)
    return float(phi(-g[: y - 1]).sum() + phi(g[y - 1:]).sum())


def immediate_threshold_loss(g, y, k):
    g, y = _check_label(g, y, k)
    # edge terms for y = 1 and y = k are absent
    loss = 0.0
    if y > 1:
        loss += float(phi(-g[y - 2]))
    if y < k:
        loss += float(phi(g[y - 1]))
    return loss


def cumulative_logit_nll(g, y, k):
    """Negative log-likelihood of the cumulative-logit model.

    ``P(y <= j) = sigmoid(g_j)`` with ``sigmoid(g_0) = 0`` and
    ``sigmoid(g_k) = 1``. Raises :class:`NonPositiveProbabilityError` when
    the implied class probability is not positive.
    """
    g, y = _check_label(g, y, k)
    if y == 1:
        return float(phi(g[0]))
    if y == k:
        return float(phi(-g[k - 2]))
    lo, hi = g[y - 2], g[y - 1]
    if not hi > lo:
        raise NonPositiveProbabilityError(
            f"P(y={y}) = sigmoid({hi:g}) - sigmoid({lo:g}) <= 0; "
            "decision values violate the proportional-odds ordering")
    # sigmoid(hi) - sigmoid(lo) = sigmoid(hi) * sigmoid(-lo) * (1 - exp(lo - hi))
    return float(phi(hi) + phi(-lo) - math.log(-math.expm1(lo - hi)))


LOSSES = {
    LossKind.ALL_THRESHOLDS: all_thresholds_loss,
    LossKind.IMMEDIATE_THRESHOLD: immediate_threshold_loss,
    LossKind.CUMULATIVE_LOGIT: cumulative_logit_nll,
}


def threshold_loss(kind, g, y, k):
    return LOSSES[LossKind(kind)](g, y, k)


def _check_pair(model, data):
    if model.p != data.p:
        raise DimensionError(f"model expects {model.p} features, data has {data.p}")
    if model.k != data.k:
        raise DimensionError(f"model has k={model.k}, data has k={data.k}")


def penalty_value(W, alpha, beta):
    D = np.diff(W, axis=0)
    return alpha * float((W * W).sum()) + beta * float((D * D).sum())


def penalty_grad(W, alpha, beta):
    G = 2.0 * alpha * W
    if beta and W.shape[0] > 1:
        D = np.diff(W, axis=0)
        G[1:] += 2.0 * beta * D
        G[:-1] -= 2.0 * beta * D
    return G


def objective_arrays(W, theta, X, y, alpha, beta):
    data = _kernels.threshold_loss(X, W, theta, y) / X.shape[0]
    return data + penalty_value(W, alpha, beta)


def objective_grad_arrays(W, theta, X, y, alpha, beta):
    """Objective value with gradients for weights and thresholds."""
    n = X.shape[0]
    loss, gW, gt = _kernels.threshold_loss_grad(X, W, theta, y)
    f = loss / n + penalty_value(W, alpha, beta)
    return f, gW / n + penalty_grad(W, alpha, beta), gt / n


def _arrays(model, data, pen):
    _check_pair(model, data)
    if pen.tied:
        raise ValueError("beta=inf is realised by weight tying (mode OL), not evaluated")
    return (np.ascontiguousarray(model.weights), np.ascontiguousarray(model.thresholds),
            np.ascontiguousarray(data.features), np.ascontiguousarray(data.labels))


def cogol_objective(model, data, pen):
    """Mean all-thresholds loss plus the L2 and neighbour-deviation penalties.

    Penalties are added once to the mean data loss, not once per sample.
    """
    W, t, X, y = _arrays(model, data, pen)
    f = objective_arrays(W, t, X, y, pen.alpha, pen.beta)
    if not math.isfinite(f):
        raise NonFiniteError("objective is not finite")
    return f


def cogol_gradient(model, data, pen):
    """Gradient of :func:`cogol_objective`: ``(dW, dtheta)``."""
    W, t, X, y = _arrays(model, data, pen)
    f, gW, gt = objective_grad_arrays(W, t, X, y, pen.alpha, pen.beta)
    if not (math.isfinite(f) and np.all(np.isfinite(gW)) and np.all(np.isfinite(gt))):
        raise NonFiniteError("gradient is not finite")
    return gW, gt


def mean_loss(model, data, kind=LossKind.ALL_THRESHOLDS):
    _check_pair(model, data)
    G = decision_values(model, data.features)
    fn = LOSSES[LossKind(kind)]
    return float(np.mean([fn(g, int(y), data.k) for g, y in zip(G, data.labels)]))


def _extended_labels(y, m):
    # CORAL / OR-CNN binary targets [[y > j]], j = 1..m
    return (int(y) > np.arange(1, m + 1)).astype(np.float64)


def _bce_sum(h, ybin):
    return float(-(ybin * log_expit(h) + (1.0 - ybin) * log_expit(-h)).sum())


def coral_loss_form(theta, w, x, y):
    """CORAL binary cross-entropy with logits ``h_j = theta_j + w . x``."""
    theta = np.asarray(theta, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.shape != x.shape:
        raise DimensionError(f"expected {w.shape[0]} features, got {x.shape[0]}")
    _check_label(theta, y, theta.shape[0] + 1)
    h = theta + float(w @ x)
    return _bce_sum(h, _extended_labels(y, theta.shape[0]))


def orcnn_loss_form(theta, W, x, y):
    """OR-CNN per-output binary cross-entropy with ``h_j = theta_j + w_j . x``."""
    theta = np.asarray(theta, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != theta.shape[0]:
        raise DimensionError(f"expected weights of shape ({theta.shape[0]}, p), got {W.shape}")
    if W.shape[1] != x.shape[0]:
        raise DimensionError(f"expected {W.shape[1]} features, got {x.shape[0]}")
    _check_label(theta, y, theta.shape[0] + 1)
    h = theta + W @ x
    return _bce_sum(h, _extended_labels(y, theta.shape[0]))


def sigmoid(t):
    return expit(t)
