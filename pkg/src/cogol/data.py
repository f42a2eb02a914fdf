"""Dataset ingestion, scaling, stratified splitting and synthetic toys."""
from __future__ import annotations

import csv
import enum
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .model import Dataset, LabelError, Mode, NonFiniteError, OrdinalModel


class CSVFormatError(ValueError):
    pass


# (samples, features, classes) of the standard ordinal benchmark collection
BENCHMARK_SHAPES = {
    "ERA": (1000, 4, 9),
    "ESL": (488, 4, 9),
    "LEV": (1000, 4, 5),
    "SWD": (1000, 10, 4),
    "automobile": (205, 71, 6),
    "balance-scale": (625, 4, 3),
    "bondrate": (57, 37, 5),
    "car": (1728, 21, 4),
    "contact-lenses": (24, 6, 3),
    "eucalyptus": (736, 91, 5),
    "newthyroid": (215, 5, 3),
    "pasture": (36, 25, 3),
    "squash-stored": (52, 51, 3),
    "squash-unstored": (52, 52, 3),
    "tae": (151, 54, 3),
    "toy": (300, 2, 5),
    "winequality-red": (1599, 11, 6),
}


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path, name=None):
    """Read a comma-separated file whose last column is the 1-based label.

    A first row containing any non-numeric cell is treated as a header.
    ``k`` is the largest label present.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
        first_line = 2
    else:
        first_line = 1
    if not rows:
        raise CSVFormatError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise CSVFormatError(f"{path}: need at least one feature column and a label column")
    values = np.empty((len(rows), width))
    for i, r in enumerate(rows):
        line = i + first_line
        if len(r) != width:
            raise CSVFormatError(f"{path}: line {line} has {len(r)} fields, expected {width}")
        for j, cell in enumerate(r):
            try:
                v = float(cell)
            except ValueError:
                raise CSVFormatError(
                    f"{path}: line {line}, column {j + 1}: cannot parse {cell!r}") from None
            if not math.isfinite(v):
                raise NonFiniteError(f"{path}: line {line}, column {j + 1}: non-finite value {cell!r}")
            values[i, j] = v
    labels = values[:, -1]
    if not np.all(labels == np.round(labels)):
        bad = int(np.argmax(labels != np.round(labels)))
        raise LabelError(f"{path}: line {bad + first_line}: label {labels[bad]!r} is not an integer")
    labels = labels.astype(np.int64)
    if labels.min() < 1:
        bad = int(np.argmin(labels))
        raise LabelError(f"{path}: line {bad + first_line}: label {labels[bad]} outside 1..k")
    return Dataset(values[:, :-1], labels, int(labels.max()), name or path.stem)


def save_csv(data, path, header=True):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{j + 1}" for j in range(data.p)] + ["y"])
        for x, y in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
    return path


class Standardized(NamedTuple):
    train: Dataset
    others: list
    mean: np.ndarray
    sd: np.ndarray


def standardize(train, apply_to=()):
    """Centre and scale by training mean and population sd.

    Zero-variance columns are only centred.
    """
    mean = train.features.mean(axis=0)
    sd = train.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)

    def scale(d):
        return Dataset((d.features - mean) / sd, d.labels, d.k, d.name)

    return Standardized(scale(train), [scale(d) for d in apply_to], mean, sd)


@dataclass(frozen=True)
class SplitPlan:
    fractions: tuple = (0.75, 0.25)
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if not fr or any(not 0 < f < 1 for f in fr) or abs(sum(fr) - 1) > 1e-9:
            raise ValueError(f"fractions must lie in (0, 1) and sum to 1, got {fr}")
        object.__setattr__(self, "fractions", fr)


def _allocate(count, fractions):
    # largest-remainder rounding of count * fractions
    raw = np.asarray(fractions) * count
    base = np.floor(raw).astype(int)
    rest = count - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rest]] += 1
    return base


def split_indices(data, plan):
    """Partition ``0..n-1`` into one index array per fraction."""
    rng = np.random.default_rng(plan.seed)
    parts = [[] for _ in plan.fractions]
    groups = [np.flatnonzero(data.labels == c) for c in np.unique(data.labels)] \
        if plan.stratified else [np.arange(data.n)]
    for idx in groups:
        idx = rng.permutation(idx)
        counts = _allocate(idx.size, plan.fractions)
        # keep every class present in the first (training) part
        if idx.size and counts[0] == 0:
            counts[int(np.argmax(counts))] -= 1
            counts[0] = 1
        start = 0
        for part, c in zip(parts, counts):
            part.append(idx[start:start + c])
            start += c
    return [np.sort(np.concatenate(p)) if p else np.empty(0, dtype=np.int64) for p in parts]


def train_test_split(data, test_fraction=0.25, seed=0):
    tr, te = split_indices(data, SplitPlan((1 - test_fraction, test_fraction), seed, True))
    return tr, te


def stratified_kfold(data, folds, seed=0):
    """Stratified k-fold index pairs ``(train_idx, valid_idx)``.

    Each class is shuffled, then dealt round-robin over folds. The dealing
    position carries over from class to class, starting at a seed-derived
    offset, so small classes do not pile up in the first fold.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > data.n:
        raise ValueError(f"cannot make {folds} folds from {data.n} samples")
    rng = np.random.default_rng(seed)
    assign = np.empty(data.n, dtype=np.int64)
    pos = int(rng.integers(folds))
    for c in np.unique(data.labels):
        idx = rng.permutation(np.flatnonzero(data.labels == c))
        assign[idx] = (pos + np.arange(idx.size)) % folds
        pos = (pos + idx.size) % folds
    out = []
    for f in range(folds):
        out.append((np.flatnonzero(assign != f), np.flatnonzero(assign == f)))
    return out


class SyntheticKind(str, enum.Enum):
    PARALLEL_BANDS = "parallel_bands"
    ROTATING_BOUNDARIES = "rotating_boundaries"
    CONCENTRIC_RINGS = "concentric_rings"


@dataclass(frozen=True)
class SyntheticSpec:
    """Toy generator settings.

    ``p`` and ``rotation_deg`` extend the basic (kind, n, k, noise, seed)
    description; ``rotation_deg`` only matters for rotating boundaries.
    """

    kind: SyntheticKind
    n: int
    k: int = 5
    noise_sd: float = 0.0
    seed: int = 0
    p: int = 2
    rotation_deg: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SyntheticKind(self.kind))
        if self.n < self.k:
            raise ValueError("need n >= k")
        if self.k < 2:
            raise ValueError("need k >= 2")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.p < (1 if self.kind is SyntheticKind.PARALLEL_BANDS else 2):
            raise ValueError("p too small for this generator")


@dataclass
class Synthetic:
    data: Dataset
    spec: SyntheticSpec
    truth: dict = field(default_factory=dict)
    model: OrdinalModel | None = None


def _labels_from_g(G):
    return 1 + np.count_nonzero(G < 0, axis=1)


def _parallel_bands(spec, rng):
    X = rng.standard_normal((spec.n, spec.p))
    w = rng.standard_normal(spec.p)
    w /= np.linalg.norm(w)
    # thresholds at population quantiles of w.x ~ N(0, 1) for balanced classes
    from scipy.stats import norm

    theta = norm.ppf(np.arange(1, spec.k) / spec.k)
    eps = spec.noise_sd * rng.standard_normal(spec.n)
    G = theta[None, :] - (X @ w + eps)[:, None]
    model = OrdinalModel.ordinal_logit(w, theta)
    return X, _labels_from_g(G), model, {"w": w.tolist(), "theta": theta.tolist()}


def _rotating_boundaries(spec, rng):
    # hyperplanes fan out from a common centre below the data cloud, so
    # neighbouring boundaries rotate by a fixed angle and never cross
    # inside the sampled region
    m = spec.k - 1
    X = rng.uniform(-1.0, 1.0, (spec.n, spec.p))
    half = math.radians(spec.rotation_deg) / 2.0
    angles = np.linspace(half, -half, m) if m > 1 else np.zeros(1)
    # centre distance puts the outer boundaries at +-0.6 through the middle
    depth = 0.6 / math.tan(half) if half > 0 else 1e6
    centre = np.zeros(spec.p)
    centre[1] = -depth
    W = np.zeros((m, spec.p))
    W[:, 0] = np.cos(angles)
    W[:, 1] = np.sin(angles)
    if half == 0:
        W[:, 0] = 1.0
        theta = np.linspace(-0.6, 0.6, m)
    else:
        theta = W @ centre
    eps = spec.noise_sd * rng.standard_normal(spec.n)
    G = theta[None, :] - X @ W.T - eps[:, None]
    model = OrdinalModel(W, theta, Mode.GOL)
    info = {"angles_deg": np.degrees(angles).tolist(), "centre": centre.tolist(),
            "W": W.tolist(), "theta": theta.tolist()}
    return X, _labels_from_g(G), model, info


def _concentric_rings(spec, rng):
    r2 = rng.uniform(0.0, 1.0, spec.n)
    ang = rng.uniform(0.0, 2 * math.pi, spec.n)
    r = np.sqrt(r2)
    X = np.zeros((spec.n, spec.p))
    X[:, 0] = r * np.cos(ang)
    X[:, 1] = r * np.sin(ang)
    if spec.p > 2:
        X[:, 2:] = rng.uniform(-1.0, 1.0, (spec.n, spec.p - 2))
    # cuts at r^2 = (j/k)^1.5 sit between equal-area and equal-radius bands;
    # the outer band is then the largest, and a single linear projection
    # gains almost nothing over predicting it for every point
    cuts = (np.arange(1, spec.k) / spec.k) ** 1.5
    score = r2 + spec.noise_sd * rng.standard_normal(spec.n)
    y = 1 + np.count_nonzero(score[:, None] > cuts[None, :], axis=1)
    return X, y, None, {"radii": np.sqrt(cuts).tolist()}


_GENERATORS = {
    SyntheticKind.PARALLEL_BANDS: _parallel_bands,
    SyntheticKind.ROTATING_BOUNDARIES: _rotating_boundaries,
    SyntheticKind.CONCENTRIC_RINGS: _concentric_rings,
}


def make_synthetic(spec):
    """Generate a toy dataset together with its generating parameters."""
    rng = np.random.default_rng(spec.seed)
    X, y, model, info = _GENERATORS[spec.kind](spec, rng)
    data = Dataset(X, y, spec.k, spec.kind.value)
    return Synthetic(data, spec, info, model)


def export_synthetic(syn, path):
    """Write the data CSV plus a ``.params.json`` sidecar."""
    path = Path(path)
    save_csv(syn.data, path)
    spec = asdict(syn.spec)
    spec["kind"] = syn.spec.kind.value
    side = path.with_suffix(".params.json")
    side.write_text(json.dumps({"spec": spec, "truth": syn.truth}, indent=2, sort_keys=True) + "\n")
    return path, side


def check_benchmark_shapes(directory):
    """Load every benchmark dataset found as ``<name>.csv`` under ``directory``.

    Returns ``{name: (expected, found or None)}``; missing files map to
    ``None``.
    """
    out = {}
    for name, shape in BENCHMARK_SHAPES.items():
        f = Path(directory) / f"{name}.csv"
        if not f.is_file():
            out[name] = (shape, None)
            continue
        d = load_csv(f, name)
        out[name] = (shape, (d.n, d.p, d.k))
    return out


def default_dataset_dir():
    return Path(os.environ.get("COGOL_DATASETS", "datasets"))
