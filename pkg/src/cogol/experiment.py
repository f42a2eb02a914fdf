"""Replicated train/test benchmark protocol.

Each replication draws a seeded stratified 75/25 split, standardises by
training statistics, tunes every model on the training part only, refits
the selected hyperparameters on the whole training part and scores the
test part. All models see the same split within a replication, so their
per-split metrics pair up for the Wilcoxon test.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
from pathlib import Path

import numpy as np

from .data import make_synthetic, standardize, train_test_split
from .evaluation import comparison_rows, evaluate, format_table
from .model import Mode
from .tuning import SearchSpace, fit_with, tune

log = logging.getLogger(__name__)

RAW_COLUMNS = ["dataset", "model", "rep", "mae", "mse", "acc", "alpha", "beta", "gamma",
               "cv_mae", "status"]
METRICS = ("mae", "mse", "acc")


class IndexAuditError(AssertionError):
    pass


def derive_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def model_label(mode, kernel=None):
    mode = Mode(mode)
    name = {"ol": "OL", "gol": "GOL", "cogol": "coGOL"}[mode.value]
    return f"{name}-{kernel}" if kernel else name


def replicate(data, modes, rep, seed=0, trials=None, folds=3, kernel=None,
              test_fraction=0.25, n_jobs=1):
    """One split of the protocol; returns one raw row per mode."""
    split_seed = derive_seed(seed, rep)
    tr, te = train_test_split(data, test_fraction, split_seed)
    scaled = standardize(data.subset(tr), [data.subset(te)])
    train, test = scaled.train, scaled.others[0]
    if trials is None:
        trials = 40 if kernel else 30
    rows = []
    for mode in modes:
        res = tune(train, mode, SearchSpace(trials=trials), folds, split_seed, kernel, n_jobs)
        touched = np.unique(np.concatenate([np.concatenate(f) for f in res.folds]))
        if np.intersect1d(tr[touched], te).size:
            raise IndexAuditError("cross-validation touched test rows")
        best = res.best
        model, _ = fit_with(train, mode, best.alpha, best.beta, best.gamma, kernel, split_seed)
        ev = evaluate(model.predict(test.features), test.labels)
        rows.append({
            "dataset": data.name, "model": model_label(mode, kernel), "rep": rep,
            "mae": ev.mae, "mse": ev.mse, "acc": ev.accuracy,
            "alpha": best.alpha, "beta": best.beta, "gamma": best.gamma,
            "cv_mae": best.cv_mae, "status": "ok",
        })
    return rows


def run_benchmark(datasets, modes, reps=30, seed=0, trials=None, folds=3, kernel=None,
                  n_jobs=1, progress=None):
    """Run :func:`replicate` ``reps`` times per dataset.

    A dataset that fails is recorded with ``status='error: ...'`` and the
    run continues with the next one.
    """
    raw = []
    for data in datasets:
        try:
            for r in range(reps):
                raw.extend(replicate(data, modes, r, seed, trials, folds, kernel, n_jobs=n_jobs))
                if progress:
                    progress(data.name, r)
        except Exception as exc:  # noqa: BLE001 - per-dataset isolation
            log.warning("dataset %s failed: %s", data.name, exc)
            raw.append({"dataset": data.name, "model": "", "rep": "", "status": f"error: {exc}"})
    return raw


def run_synthetic(spec, modes, reps=30, seed=0, trials=None, folds=3, kernel=None, n_jobs=1):
    """Replications that each draw a fresh sample from the generator.

    Replication ``r`` uses generator seed ``derive_seed(spec.seed, r)``, so
    the per-split metrics are independent rather than resamples of one
    fixed draw.
    """
    raw = []
    for r in range(reps):
        syn = make_synthetic(dataclasses.replace(spec, seed=derive_seed(spec.seed, r)))
        raw.extend(replicate(syn.data, modes, r, seed, trials, folds, kernel, n_jobs=n_jobs))
    return raw


def collect(raw):
    """Group per-split values as ``{(model, dataset, metric): [values...]}``."""
    out = {}
    for row in raw:
        if row.get("status") != "ok":
            continue
        for m in METRICS:
            out.setdefault((row["model"], row["dataset"], m), []).append(float(row[m]))
    return out


def summary_rows(raw, baseline="OL"):
    return comparison_rows(collect(raw), baseline)


def _model_order(label):
    base, _, kern = label.partition("-")
    rank = {"OL": 0, "GOL": 1, "coGOL": 2}.get(base, 3)
    return (kern, rank, label)


def results_table(raw):
    """Dataset-by-model table of mean MAE / MSE / accuracy."""
    grouped = collect(raw)
    models = sorted({k[0] for k in grouped}, key=_model_order)
    datasets = list(dict.fromkeys(k[1] for k in grouped))
    columns = ["dataset"] + [f"{m} {met.upper()}" for met in METRICS for m in models]
    rows = []
    for d in datasets:
        row = {"dataset": d}
        for met in METRICS:
            for m in models:
                vals = grouped.get((m, d, met))
                row[f"{m} {met.upper()}"] = float(np.mean(vals)) if vals else ""
        rows.append(row)
    return format_table(rows, columns)


def write_rows(rows, path, columns):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({c: _fmt(r.get(c, "")) for c in columns})
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else v
