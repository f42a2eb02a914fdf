"""Fitting OL, GOL and coGOL by preconditioned gradient descent.

All three models minimise the same smooth convex objective (mean
all-thresholds loss + L2 + neighbour-deviation penalty). The solver is
full-batch gradient descent with Armijo backtracking, where the descent
direction is the gradient rescaled by a fixed metric ``P``:

* the data term is bounded by ``phi'' <= 1/4``, which gives a
  block-diagonal curvature bound ``C = Z'Z / 4n`` per threshold
  (``Z = [X, -1]``);
* the penalty term is quadratic, so its Hessian enters ``P`` exactly.

``P`` therefore majorises the Hessian and a unit step always passes the
Armijo test for GOL/coGOL. Because the penalty is exact in ``P``, huge
``beta`` values do not slow the iteration down.

OL (``beta = inf``) ties all rows to a single ``w`` and keeps thresholds
monotone through :func:`theta_parametrization`.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from . import _kernels
from .model import (
    Dataset,
    Mode,
    NonFiniteError,
    OrdinalModel,
    PenaltySpec,
    objective_arrays,
    objective_grad_arrays,
)

ARMIJO_C = 1e-4
MAX_HALVINGS = 60


class DegenerateLabelsError(ValueError):
    pass


@dataclass(frozen=True)
class FitSpec:
    mode: Mode = Mode.COGOL
    pen: PenaltySpec = PenaltySpec()
    max_iters: int = 5000
    grad_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.mode is Mode.COGOL and self.pen.tied:
            raise ValueError("coGOL needs a finite beta; use mode OL for beta=inf")


@dataclass(frozen=True)
class FitReport:
    final_objective: float
    iterations: int
    converged: bool
    grad_norm: float
    wall_time: float
    backend: str = ""
    jitter: float = 0.0


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    grad_norm: float
    step_size: float

    def line(self):
        return (f"iter={self.iteration} objective={self.objective:.17g} "
                f"grad_norm={self.grad_norm:.6e} step={self.step_size:.6e}")


def softplus(t):
    return np.logaddexp(0.0, t)


def theta_parametrization(raw):
    """Map unconstrained ``raw`` to nondecreasing thresholds.

    ``theta_1 = raw_1`` and ``theta_j = theta_{j-1} + softplus(raw_j)``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size < 1:
        raise ValueError("raw must be a non-empty vector")
    steps = np.concatenate([raw[:1], softplus(raw[1:])])
    return np.cumsum(steps)


def theta_jacobian(raw):
    """Lower-triangular d theta / d raw."""
    m = raw.shape[0]
    scale = np.concatenate([[1.0], expit(raw[1:])])
    return np.tril(np.ones((m, m))) * scale[None, :]


def theta_inverse(theta):
    """Inverse of :func:`theta_parametrization` for strictly increasing input."""
    theta = np.asarray(theta, dtype=np.float64)
    gaps = np.diff(theta)
    if np.any(gaps <= 0):
        raise ValueError("thresholds must be strictly increasing to invert")
    # softplus^{-1}(d) = log(expm1(d)), written stably for large d
    return np.concatenate([theta[:1], gaps + np.log(-np.expm1(-gaps))])


def _data_bound(X):
    n = X.shape[0]
    Z = np.hstack([X, -np.ones((n, 1))])
    return Z.T @ Z / (4.0 * n)


def _ridge(C):
    return 1e-10 * max(1.0, float(np.max(np.diag(C))))


class _GeneralizedMetric:
    """Solve ``P d = g`` for the per-threshold (w_j, theta_j) layout."""

    def __init__(self, X, m, alpha, beta):
        p = X.shape[1]
        C = _data_bound(X)
        Q = 2.0 * alpha * np.eye(m)
        if beta and m > 1:
            D = np.diff(np.eye(m), axis=0)
            Q += 2.0 * beta * D.T @ D
        q, V = np.linalg.eigh(Q)
        E = np.zeros((p + 1, p + 1))
        E[np.arange(p), np.arange(p)] = 1.0
        lam = _ridge(C)
        blocks = C[None] + q[:, None, None] * E[None] + lam * np.eye(p + 1)[None]
        self.V = np.ascontiguousarray(V)
        self.inv = np.ascontiguousarray(np.linalg.inv(blocks))

    def solve(self, G):
        R = self.V.T @ G
        return self.V @ np.einsum("lab,lb->la", self.inv, R)


class _Problem:
    """Objective over a flat parameter vector, plus the model it encodes."""

    def value(self, z):
        raise NotImplementedError

    def value_grad(self, z):
        raise NotImplementedError

    def direction(self, z, grad):
        raise NotImplementedError


class _GeneralizedProblem(_Problem):
    def __init__(self, X, y, m, alpha, beta):
        self.X, self.y, self.m = X, y, m
        self.p = X.shape[1]
        self.alpha, self.beta = alpha, beta
        self.metric = _GeneralizedMetric(X, m, alpha, beta)

    def unpack(self, z):
        Z = z.reshape(self.m, self.p + 1)
        return np.ascontiguousarray(Z[:, :-1]), np.ascontiguousarray(Z[:, -1])

    def value(self, z):
        return self.value_grad(z)[0]

    def value_grad(self, z):
        f, G = _kernels.packed_objective_grad(self.X, self.y, z.reshape(self.m, self.p + 1),
                                              self.alpha, self.beta)
        return f, G.ravel()

    def direction(self, z, grad):
        return -self.metric.solve(grad.reshape(self.m, self.p + 1)).ravel()

    def run_compiled(self, z, spec):
        Z, f, gnorm, it, hist, status = _kernels.generalized_descent_numba(
            self.X, self.y, z.reshape(self.m, self.p + 1), self.alpha, self.beta, self.metric.V,
            self.metric.inv, spec.max_iters, spec.grad_tol, ARMIJO_C, MAX_HALVINGS)
        return Z.ravel(), f, gnorm, it, hist, status

    def model(self, z, mode):
        W, t = self.unpack(z)
        return OrdinalModel(W, t, mode)


class _TiedProblem(_Problem):
    """Shared weight row, monotone thresholds via cumulative softplus."""

    def __init__(self, X, y, m, alpha):
        self.X, self.y, self.m = X, y, m
        self.p = X.shape[1]
        self.alpha = alpha
        n, p = X.shape
        Z = np.hstack([X, -np.ones((n, 1))])
        # bound in (w, theta): sum_j z_ij z_ij' / 4n with z_ij = [x_i, -e_j]
        P = np.zeros((p + m, p + m))
        P[:p, :p] = m * (X.T @ X) / (4.0 * n) + 2.0 * alpha * m * np.eye(p)
        cross = -X.sum(axis=0) / (4.0 * n)
        P[:p, p:] = cross[:, None]
        P[p:, :p] = cross[None, :]
        P[p:, p:] = np.eye(m) / 4.0
        self.P = P
        self.lam = _ridge(Z.T @ Z / (4.0 * n))

    def unpack(self, z):
        w = z[: self.p]
        raw = z[self.p:]
        return w, raw

    def _W(self, w):
        return np.ascontiguousarray(np.broadcast_to(w, (self.m, self.p)))

    def value(self, z):
        w, raw = self.unpack(z)
        return objective_arrays(self._W(w), theta_parametrization(raw), self.X, self.y,
                                self.alpha, 0.0)

    def value_grad(self, z):
        w, raw = self.unpack(z)
        f, gW, gt = objective_grad_arrays(self._W(w), theta_parametrization(raw),
                                          self.X, self.y, self.alpha, 0.0)
        J = theta_jacobian(raw)
        return f, np.concatenate([gW.sum(axis=0), J.T @ gt])

    def direction(self, z, grad):
        _, raw = self.unpack(z)
        J = np.eye(self.p + self.m)
        J[self.p:, self.p:] = theta_jacobian(raw)
        M = J.T @ self.P @ J + self.lam * np.eye(self.p + self.m)
        return -np.linalg.solve(M, grad)

    def run_compiled(self, z, spec):
        return _kernels.tied_descent_numba(self.X, self.y, z, self.alpha, self.P, self.lam,
                                           spec.max_iters, spec.grad_tol, ARMIJO_C, MAX_HALVINGS)

    def model(self, z, mode):
        w, raw = self.unpack(z)
        return OrdinalModel(self._W(w), theta_parametrization(raw), Mode.OL)


def _descend_compiled(problem, z, spec, trace):
    # whole loop in numba; trace records are replayed from the history
    t0 = time.perf_counter()
    z, f, gnorm, it, hist, status = problem.run_compiled(z, spec)
    wall = time.perf_counter() - t0
    if trace is not None:
        for i in range(it + 1):
            trace(TraceRecord(i, float(hist[i, 0]), float(hist[i, 1]), float(hist[i, 2])))
    if status == 1:
        raise NonFiniteError(f"non-finite gradient at iteration {it}")
    return z, float(f), float(gnorm), int(it), wall


def _descend(problem, z, spec, trace):
    from . import _accel

    if _accel.USE_NUMBA:
        return _descend_compiled(problem, z, spec, trace)
    t0 = time.perf_counter()
    f, g = problem.value_grad(z)
    gnorm = float(np.max(np.abs(g)))
    it = 0
    if trace is not None:
        trace(TraceRecord(0, f, gnorm, 0.0))
    while gnorm > spec.grad_tol and it < spec.max_iters:
        d = problem.direction(z, g)
        slope = float(g @ d)
        if not slope < 0:
            # metric lost positive-definiteness numerically; fall back to -g
            d = -g
            slope = -float(g @ g)
        step = 1.0
        for _ in range(MAX_HALVINGS):
            z_new = z + step * d
            # gradient comes almost free with the value and is reused on acceptance
            f_new, g_new = problem.value_grad(z_new)
            if math.isfinite(f_new) and f_new <= f + ARMIJO_C * step * slope:
                break
            step *= 0.5
        else:
            # no decrease representable in floating point: stationary to precision
            break
        it += 1
        z, f, g = z_new, f_new, g_new
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient at iteration {it}")
        gnorm = float(np.max(np.abs(g)))
        if trace is not None:
            trace(TraceRecord(it, f, gnorm, step))
    return z, f, gnorm, it, time.perf_counter() - t0


def _check_data(data):
    present = np.unique(data.labels)
    if data.k < 2 or present.size < 2:
        raise DegenerateLabelsError(
            f"need at least two distinct classes to fit, found {present.tolist()}")


def initial_point(size, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1e-3, 1e-3, size=size)


def fit_arrays(X, y, k, spec, trace=None):
    """Fit on raw arrays; returns ``(model, report)``."""
    from . import _accel

    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    m = k - 1
    p = X.shape[1]
    mode = spec.mode
    if mode is Mode.OL:
        problem = _TiedProblem(X, y, m, spec.pen.alpha)
        size = p + m
    else:
        beta = 0.0 if mode is Mode.GOL else spec.pen.beta
        problem = _GeneralizedProblem(X, y, m, spec.pen.alpha, beta)
        size = m * (p + 1)
    z0 = initial_point(size, spec.seed)
    z, f, gnorm, it, wall = _descend(problem, z0, spec, trace)
    report = FitReport(
        final_objective=float(f),
        iterations=it,
        converged=bool(gnorm <= spec.grad_tol),
        grad_norm=gnorm,
        wall_time=wall,
        backend=_accel.backend_name(),
    )
    return problem.model(z, mode), report


def fit(data: Dataset, spec: FitSpec, trace: Optional[Callable[[TraceRecord], None]] = None):
    """Fit an OL, GOL or coGOL model to ``data``.

    Returns ``(OrdinalModel, FitReport)``. ``trace`` receives one
    :class:`TraceRecord` per accepted step.
    """
    _check_data(data)
    return fit_arrays(data.features, data.labels, data.k, spec, trace)
