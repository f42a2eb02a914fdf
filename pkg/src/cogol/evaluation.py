"""Ordinal prediction metrics and the Wilcoxon signed-rank test."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import _kernels

EXACT_MAX_N = 20


@dataclass(frozen=True)
class EvalReport:
    mae: float
    mse: float
    accuracy: float
    n: int

    def as_dict(self):
        return {"mae": self.mae, "mse": self.mse, "acc": self.accuracy, "n": self.n}


def evaluate(preds, labels):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValueError(f"length mismatch: {preds.shape} predictions vs {labels.shape} labels")
    if preds.size == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    err = preds.astype(np.float64) - labels.astype(np.float64)
    return EvalReport(
        mae=float(np.mean(np.abs(err))),
        mse=float(np.mean(err * err)),
        accuracy=float(np.mean(preds == labels)),
        n=int(preds.size),
    )


@dataclass(frozen=True)
class WilcoxonResult:
    """``statistic`` is min(W+, W-); ``direction`` is +1 when ``a`` tends to
    exceed ``b`` (W+ > W-), -1 for the reverse, 0 for a tie."""

    statistic: float
    pvalue: float
    n_effective: int
    method: str
    direction: int
    w_plus: float = 0.0
    degenerate: bool = False


def _normal_sf2(z):
    # two-sided normal tail 2 * (1 - Phi(z)) for z >= 0
    return math.erfc(z / math.sqrt(2.0))


def wilcoxon_signed_rank(a, b, exact_max_n=EXACT_MAX_N, method="auto"):
    """Paired two-sided Wilcoxon signed-rank test.

    Zero differences are dropped before ranking and tied magnitudes get
    mid-ranks. For ``n_effective <= exact_max_n`` the p-value comes from
    enumerating all ``2**n`` sign patterns; otherwise from the normal
    approximation with tie and continuity corrections. ``method`` may
    force ``"exact"`` or ``"normal"``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must have equal length, got {a.shape} and {b.shape}")
    d = a - b
    d = d[d != 0]
    n = int(d.size)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, "degenerate", 0, 0.0, True)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2.0
    w_minus = total - w_plus
    direction = int(np.sign(w_plus - w_minus))
    if method == "auto":
        method = "exact" if n <= exact_max_n else "normal"
    if method == "exact":
        ranks2 = np.rint(2.0 * ranks).astype(np.int64)
        count = _kernels.signed_rank_count(ranks2, int(round(2.0 * w_plus)))
        p = count / float(1 << n)
    elif method == "normal":
        _, counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float((counts ** 3 - counts).sum()) / 48.0
        dev = abs(w_plus - total / 2.0)
        if var <= 0:
            p = 1.0
        else:
            z = max(dev - 0.5, 0.0) / math.sqrt(var)
            p = min(1.0, _normal_sf2(z))
    else:
        raise ValueError(f"unknown method {method!r}")
    return WilcoxonResult(min(w_plus, w_minus), p, n, method, direction, w_plus)


def comparison_rows(summary, baseline):
    """Attach ``p_vs_baseline`` to long-format summary rows.

    ``summary`` maps ``(model, dataset, metric)`` to the list of per-split
    values; the p-value pairs each model's splits with the baseline's.
    """
    rows = []
    for (model, dataset, metric), values in summary.items():
        base = summary.get((baseline, dataset, metric))
        if model == baseline or base is None or len(base) != len(values):
            p = float("nan")
        else:
            p = wilcoxon_signed_rank(values, base).pvalue
        rows.append({"model": model, "dataset": dataset, "metric": metric,
                     "mean": float(np.mean(values)), "p_vs_baseline": p})
    return rows


def format_table(rows, columns, floatfmt="{:.4f}"):
    """Render dict rows as an aligned plain-text table."""
    cells = [[str(c) for c in columns]]
    for r in rows:
        line = []
        for c in columns:
            v = r.get(c, "")
            line.append(floatfmt.format(v) if isinstance(v, float) else str(v))
        cells.append(line)
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    out = []
    for j, row in enumerate(cells):
        out.append("  ".join(s.rjust(w) if j else s.ljust(w) for s, w in zip(row, widths)))
        if j == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)
