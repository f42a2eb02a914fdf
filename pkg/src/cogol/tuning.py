"""Seeded random-search hyperparameter tuning over stratified CV."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import stratified_kfold
from .evaluation import evaluate
from .kernel import KernelKind, KernelSpec, fit_kernel, gamma_range
from .model import Mode, PenaltySpec
from .optimizer import FitSpec, fit

TRIAL_COLUMNS = ["trial", "alpha", "beta", "gamma", "cv_mae", "cv_mse", "cv_acc", "status"]


@dataclass(frozen=True)
class SearchSpace:
    alpha_range: tuple = (1e-6, 10.0)
    beta_range: tuple = (1e-6, 10.0)
    gamma_range: tuple | None = None
    trials: int = 30

    def __post_init__(self):
        for name in ("alpha_range", "beta_range", "gamma_range"):
            r = getattr(self, name)
            if r is None:
                continue
            lo, hi = float(r[0]), float(r[1])
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got {r}")
            object.__setattr__(self, name, (lo, hi))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class Trial:
    trial: int
    alpha: float
    beta: float
    gamma: float | None
    cv_mae: float = math.inf
    cv_mse: float = math.inf
    cv_acc: float = 0.0
    status: str = "pending"


@dataclass
class TuneResult:
    best: Trial
    table: list
    folds: list = field(repr=False)

    @property
    def params(self):
        return {"alpha": self.best.alpha, "beta": self.best.beta, "gamma": self.best.gamma}


def _log_uniform(rng, r):
    lo, hi = r
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def sample_trials(mode, space, seed):
    """Draw the parameter sequence; identical for identical ``seed``.

    OL gets ``beta = inf`` and GOL ``beta = 0``; only coGOL samples beta.
    """
    mode = Mode(mode)
    rng = np.random.default_rng(seed)
    out = []
    for t in range(space.trials):
        alpha = _log_uniform(rng, space.alpha_range)
        beta = _log_uniform(rng, space.beta_range)
        gamma = _log_uniform(rng, space.gamma_range) if space.gamma_range else None
        if mode is Mode.OL:
            beta = math.inf
        elif mode is Mode.GOL:
            beta = 0.0
        out.append(Trial(t, alpha, beta, gamma))
    return out


def fit_with(data, mode, alpha, beta, gamma=None, kernel=None, seed=0,
             max_iters=5000, grad_tol=1e-6):
    """Fit one model given hyperparameters; kernel=None means linear primal."""
    spec = FitSpec(Mode(mode), PenaltySpec(alpha, beta), max_iters, grad_tol, seed)
    if kernel is None:
        return fit(data, spec)
    kind = KernelKind(kernel)
    return fit_kernel(data, spec, KernelSpec(kind, gamma if kind is KernelKind.RBF else None))


def _run_trial(trial, data, folds, mode, kernel, seed, max_iters, grad_tol):
    scores = []
    try:
        for tr, va in folds:
            model, _ = fit_with(data.subset(tr), mode, trial.alpha, trial.beta, trial.gamma,
                                kernel, seed, max_iters, grad_tol)
            valid = data.subset(va)
            scores.append(evaluate(model.predict(valid.features), valid.labels))
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        trial.status = f"error: {type(exc).__name__}: {exc}"
        return trial
    trial.cv_mae = float(np.mean([s.mae for s in scores]))
    trial.cv_mse = float(np.mean([s.mse for s in scores]))
    trial.cv_acc = float(np.mean([s.accuracy for s in scores]))
    trial.status = "ok"
    return trial


def _selection_key(t):
    # lowest CV MAE; ties go to the larger beta, then the earlier trial
    return (t.cv_mae, -t.beta, t.trial)


def tune(data, mode, space=None, folds=3, seed=0, kernel=None, n_jobs=1,
         max_iters=5000, grad_tol=1e-6):
    """Random search over ``space`` scored by mean validation MAE.

    ``kernel`` is ``None`` (linear primal), ``"linear"`` or ``"rbf"``. For
    RBF without an explicit ``space.gamma_range`` the range comes from
    :func:`gamma_range` on ``data``.
    """
    space = space or SearchSpace()
    if kernel is not None and KernelKind(kernel) is KernelKind.RBF and space.gamma_range is None:
        space = SearchSpace(space.alpha_range, space.beta_range,
                            gamma_range(data.features, data.k), space.trials)
    fold_idx = stratified_kfold(data, folds, seed)
    trials = sample_trials(mode, space, seed)

    def run(t):
        return _run_trial(t, data, fold_idx, mode, kernel, seed, max_iters, grad_tol)

    if n_jobs == 1:
        done = [run(t) for t in trials]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            done = list(pool.map(run, trials))
    best = min(done, key=_selection_key)
    return TuneResult(best, done, fold_idx)


def write_trials_csv(result, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRIAL_COLUMNS)
        w.writeheader()
        for t in result.table:
            row = asdict(t)
            for key in ("alpha", "beta", "gamma", "cv_mae", "cv_mse", "cv_acc"):
                v = row[key]
                row[key] = "" if v is None else repr(float(v))
            w.writerow(row)
    return path
