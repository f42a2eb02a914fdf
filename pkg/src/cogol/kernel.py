"""Kernelised OL / GOL / coGOL through a per-threshold representer expansion.

Each weight row is ``w_j = sum_i a_ji phi(x_i)`` over the training
points, so decision values are ``theta_j - a_j . k(x)`` with ``k(x)`` the
kernel column against the support points, the L2 penalty is
``a_j' K a_j`` and the deviation penalty ``(a_j - a_{j-1})' K (...)``.

Fitting diagonalises ``K = U diag(lam) U'`` and solves the equivalent
primal problem on the empirical feature map ``Phi = U sqrt(lam)``, where
``a_j' K a_j = |v_j|^2`` and ``K a_j = Phi v_j``. Eigen-directions with
``lam`` below ``EIG_RTOL * max(lam)`` carry no usable signal and are
dropped.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist

from . import _kernels
from .model import (
    DimensionError,
    Mode,
    NonFiniteError,
    _frozen,
    penalty_grad,
    predict_from_g,
)
from .optimizer import _check_data, fit_arrays

JITTER = 1e-10
EIG_RTOL = 1e-9


class KernelKind(str, enum.Enum):
    LINEAR = "linear"
    RBF = "rbf"


class DegenerateGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.RBF
    gamma: float | None = 1.0
    support_points: np.ndarray | None = None

    def __post_init__(self):
        kind = KernelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is KernelKind.RBF:
            if self.gamma is None or not (self.gamma > 0 and math.isfinite(self.gamma)):
                raise ValueError(f"RBF kernel needs gamma > 0, got {self.gamma}")
            object.__setattr__(self, "gamma", float(self.gamma))
        else:
            object.__setattr__(self, "gamma", None)
        if self.support_points is not None:
            S = _frozen(self.support_points)
            if S.ndim != 2 or not np.all(np.isfinite(S)):
                raise ValueError("support points must be a finite matrix")
            object.__setattr__(self, "support_points", S)

    def gram(self, X, Y):
        if self.kind is KernelKind.RBF:
            return rbf_gram(X, Y, self.gamma)
        return linear_gram(X, Y)

    def with_support(self, X):
        return replace(self, support_points=X)


def _pair(X, Y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise DimensionError(f"feature dimensions differ: {X.shape} vs {Y.shape}")
    return X, Y


def rbf_gram(X, Y, gamma):
    """``exp(-gamma |x_i - y_j|^2)`` for all row pairs."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    X, Y = _pair(X, Y)
    return _kernels.rbf_gram(X, Y, float(gamma))


def linear_gram(X, Y):
    X, Y = _pair(X, Y)
    return X @ Y.T


def gamma_range(X, k):
    """Log-uniform search box for the RBF bandwidth.

    ``tau0`` is the nearest-rank ``1/k`` quantile of all pairwise distances;
    the box is ``[0.01, 100] / (2 tau0^2)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two points")
    d = np.sort(pdist(X))
    rank = -(-d.size // int(k))  # ceil(N / k)
    tau0 = float(d[max(rank, 1) - 1])
    if tau0 <= 0:
        raise DegenerateGeometryError("pairwise-distance quantile is zero (repeated points)")
    s = 2.0 * tau0 * tau0
    return 0.01 / s, 100.0 / s


@dataclass(frozen=True)
class DualModel:
    dual_coeffs: np.ndarray
    thresholds: np.ndarray
    spec: KernelSpec
    mode: Mode = Mode.COGOL

    def __post_init__(self):
        A = _frozen(self.dual_coeffs)
        t = _frozen(self.thresholds)
        S = self.spec.support_points
        if S is None:
            raise ValueError("dual model needs support points")
        if A.ndim != 2 or A.shape != (t.shape[0], S.shape[0]):
            raise DimensionError(
                f"dual coefficients must be ({t.shape[0]}, {S.shape[0]}), got {A.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(t))):
            raise NonFiniteError("dual model parameters must be finite")
        object.__setattr__(self, "dual_coeffs", A)
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def k(self):
        return self.thresholds.shape[0] + 1

    @property
    def p(self):
        return self.spec.support_points.shape[1]

    def decision_values(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = X.reshape(1, -1) if single else X
        if X2.shape[1] != self.p:
            raise DimensionError(f"expected {self.p} features, got {X2.shape[1]}")
        Kx = self.spec.gram(X2, self.spec.support_points)
        G = self.thresholds[None, :] - Kx @ self.dual_coeffs.T
        return G[0] if single else G

    def predict(self, X):
        out = predict_from_g(self.decision_values(X))
        return int(out) if np.ndim(out) == 0 else out


def dual_penalty(A, K, alpha, beta):
    AK = A @ K
    D = np.diff(A, axis=0)
    return alpha * float((AK * A).sum()) + beta * float(((D @ K) * D).sum())


def dual_objective(A, theta, K, y, pen):
    """Coefficient-space objective with kernel rows ``K`` as features."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    K = np.ascontiguousarray(K, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    data = _kernels.threshold_loss(K, A, theta, y) / K.shape[0]
    return data + dual_penalty(A, K, pen.alpha, pen.beta)


def dual_gradient(A, theta, K, y, pen):
    A = np.ascontiguousarray(A, dtype=np.float64)
    K = np.ascontiguousarray(K, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    n = K.shape[0]
    _, gA, gt = _kernels.threshold_loss_grad(K, A, theta, y)
    # K symmetric: d/dA of a' K a summed over rows is 2 (A K)
    return gA / n + penalty_grad(A, pen.alpha, pen.beta) @ K, gt / n


def _feature_map(K):
    lam, U = np.linalg.eigh(K)
    keep = lam > EIG_RTOL * max(float(lam[-1]), 0.0)
    lam, U = lam[keep], U[:, keep]
    return U * np.sqrt(lam)[None, :], U / np.sqrt(lam)[None, :]


def fit_kernel(data, spec, kspec, trace=None):
    """Fit a kernel OL / GOL / coGOL model; returns ``(DualModel, FitReport)``.

    Support points are the full training set.
    """
    _check_data(data)
    t0 = time.perf_counter()
    X = np.ascontiguousarray(data.features)
    kspec = kspec.with_support(X)
    K = kspec.gram(X, X)
    if not np.all(np.isfinite(K)):
        raise NonFiniteError("Gram matrix has non-finite entries")
    K = K + JITTER * np.eye(K.shape[0])
    Phi, back = _feature_map(K)
    vmodel, rep = fit_arrays(Phi, data.labels, data.k, spec, trace)
    A = vmodel.weights @ back.T
    model = DualModel(A, vmodel.thresholds, kspec, spec.mode)
    report = replace(rep, wall_time=time.perf_counter() - t0, jitter=JITTER)
    return model, report


def dual_model_from_primal(W, theta, X, mode=Mode.COGOL):
    """Linear-kind dual model reproducing ``W`` on ``X`` (least-norm lift)."""
    A = np.linalg.lstsq(X.T, np.asarray(W).T, rcond=None)[0].T
    return DualModel(A, theta, KernelSpec(KernelKind.LINEAR, None, X), mode)
