"""Versioned JSON documents for fitted models.

Floats are written with ``repr``, which round-trips float64 exactly, so a
save/load cycle is bit-stable.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .kernel import DualModel, KernelKind, KernelSpec
from .model import Mode, OrdinalModel

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def model_to_dict(model):
    if isinstance(model, DualModel):
        spec = model.spec
        return {
            "schema_version": SCHEMA_VERSION,
            "mode": model.mode.value,
            "k": model.k,
            "p": model.p,
            "weights": _floats(model.dual_coeffs),
            "thresholds": _floats(model.thresholds),
            "kernel": {
                "kind": spec.kind.value,
                "gamma": spec.gamma,
                "support_points": _floats(spec.support_points),
                "m": int(spec.support_points.shape[0]),
            },
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "mode": model.mode.value,
        "k": model.k,
        "p": model.p,
        "weights": _floats(model.weights),
        "thresholds": _floats(model.thresholds),
    }


def model_from_dict(doc):
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    try:
        mode = Mode(doc["mode"])
        k, p = int(doc["k"]), int(doc["p"])
        theta = np.array(doc["thresholds"], dtype=np.float64)
        flat = np.array(doc["weights"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from None
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(flat))):
        raise SchemaError("model document holds non-finite parameters")
    if theta.shape != (k - 1,):
        raise SchemaError(f"expected {k - 1} thresholds, found {theta.shape[0]}")
    kern = doc.get("kernel")
    if kern is None:
        if flat.size != (k - 1) * p:
            raise SchemaError(f"expected {(k - 1) * p} weights, found {flat.size}")
        return OrdinalModel(flat.reshape(k - 1, p), theta, mode)
    S = np.array(kern["support_points"], dtype=np.float64)
    if S.size % p:
        raise SchemaError("support_points length is not a multiple of p")
    S = S.reshape(-1, p)
    m = S.shape[0]
    if flat.size != (k - 1) * m:
        raise SchemaError(f"expected {(k - 1) * m} dual coefficients, found {flat.size}")
    spec = KernelSpec(KernelKind(kern["kind"]), kern.get("gamma"), S)
    return DualModel(flat.reshape(k - 1, m), theta, spec, mode)


def dumps(model):
    doc = model_to_dict(model)
    for v in doc["weights"] + doc["thresholds"]:
        if not math.isfinite(v):
            raise ValueError("refusing to serialise non-finite parameters")
    return json.dumps(doc, indent=1) + "\n"


def loads(text):
    return model_from_dict(json.loads(text))


def save_model(model, path):
    path = Path(path)
    path.write_text(dumps(model))
    return path


def load_model(path):
    return loads(Path(path).read_text())
