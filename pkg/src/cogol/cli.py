"""``cogol`` command line: train, predict, tune, benchmark, compare, synth, grid.

Exit status is 0 on success, 2 for usage or input problems (bad flags,
missing or malformed files, invalid parameters) and 1 for anything else.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import _accel, __version__
from .data import CSVFormatError, SyntheticSpec, export_synthetic, load_csv, make_synthetic
from .evaluation import evaluate, format_table, wilcoxon_signed_rank
from .experiment import RAW_COLUMNS, run_benchmark, summary_rows, results_table, write_rows
from .model import Mode, NonFiniteError
from .serialize import load_model, save_model
from .tuning import fit_with, tune, SearchSpace, write_trials_csv

log = logging.getLogger("cogol")

METRIC_COLUMNS = ["split", "n", "mae", "mse", "acc"]
SUMMARY_COLUMNS = ["model", "dataset", "metric", "mean", "p_vs_baseline"]

# flag defaults applied after the config file, so a config value beats a default
DEFAULTS = {
    "mode": "cogol", "alpha": 1e-3, "beta": 1.0, "kernel": None, "gamma": None, "seed": 0,
    "folds": 3, "trials": None, "reps": 30, "out": "run", "trace": None,
    "max_iters": 5000, "grad_tol": 1e-6, "jobs": 1, "modes": "ol,gol,cogol",
}
INT_KEYS = {"seed", "folds", "trials", "reps", "max_iters", "jobs"}
FLOAT_KEYS = {"alpha", "beta", "gamma", "grad_tol"}


class UsageError(Exception):
    pass


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None
    return value


def resolve(args):
    """Merge flags over config over defaults, in place."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for key, default in DEFAULTS.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) is None:
            setattr(args, key, _coerce(key, cfg.get(key, default)))
    if getattr(args, "data", None) is None and "data" in cfg:
        args.data = cfg["data"] if args.command != "benchmark" else cfg["data"].split(",")
    return args


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, args, inputs, outputs, params, wall):
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": getattr(args, "seed", None),
        "params": params,
        "tool_version": __version__,
        "backend": _accel.backend_name(),
        "outputs": {str(p): _sha256(p) for p in outputs},
        "wall_time_s": wall,
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(args):
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join(missing)}")


def _trace_sink(target):
    if target is None:
        return None, None
    if target == "-":
        return (lambda rec: print(rec.line(), file=sys.stderr)), None
    fh = open(target, "w")
    return (lambda rec: fh.write(rec.line() + "\n")), fh


def _metrics_row(split, preds, labels):
    ev = evaluate(preds, labels)
    return {"split": split, "n": ev.n, "mae": ev.mae, "mse": ev.mse, "acc": ev.accuracy}


def cmd_train(args):
    _need(args, "data")
    t0 = time.perf_counter()
    data = load_csv(args.data)
    out = _out_dir(args)
    sink, fh = _trace_sink(args.trace)
    try:
        from .kernel import KernelKind, KernelSpec, fit_kernel
        from .model import PenaltySpec
        from .optimizer import FitSpec, fit

        beta = math.inf if Mode(args.mode) is Mode.OL else args.beta
        spec = FitSpec(Mode(args.mode), PenaltySpec(args.alpha, beta), args.max_iters,
                       args.grad_tol, args.seed)
        if args.kernel is None:
            model, report = fit(data, spec, sink)
        else:
            kind = KernelKind(args.kernel)
            if kind is KernelKind.RBF and args.gamma is None:
                raise UsageError("--gamma is required with --kernel rbf")
            model, report = fit_kernel(data, spec, KernelSpec(kind, args.gamma), sink)
    finally:
        if fh:
            fh.close()
    model_path = save_model(model, out / "model.json")
    metrics_path = write_rows([_metrics_row("train", model.predict(data.features), data.labels)],
                              out / "metrics.csv", METRIC_COLUMNS)
    print(f"final_objective={report.final_objective:.17g} iterations={report.iterations} "
          f"converged={str(report.converged).lower()} grad_norm={report.grad_norm:.3e}")
    params = {"mode": args.mode, "alpha": args.alpha, "beta": beta if math.isfinite(beta) else "inf",
              "kernel": args.kernel, "gamma": args.gamma, "max_iters": args.max_iters,
              "grad_tol": args.grad_tol}
    write_manifest(out, args, [args.data], [model_path, metrics_path], params,
                   time.perf_counter() - t0)
    return 0


def cmd_predict(args):
    _need(args, "data", "model")
    t0 = time.perf_counter()
    model = load_model(_existing(args.model))
    data = load_csv(args.data)
    out = _out_dir(args)
    preds = model.predict(data.features)
    pred_path = out / "predictions.csv"
    with pred_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "label", "prediction"])
        for i, (y, p) in enumerate(zip(data.labels, preds)):
            w.writerow([i, int(y), int(p)])
    metrics_path = write_rows([_metrics_row("data", preds, data.labels)], out / "metrics.csv",
                              METRIC_COLUMNS)
    ev = evaluate(preds, data.labels)
    print(f"mae={ev.mae:.6f} mse={ev.mse:.6f} acc={ev.accuracy:.6f}")
    write_manifest(out, args, [args.data, args.model], [pred_path, metrics_path], {},
                   time.perf_counter() - t0)
    return 0


def cmd_tune(args):
    _need(args, "data")
    t0 = time.perf_counter()
    data = load_csv(args.data)
    out = _out_dir(args)
    trials = args.trials or (40 if args.kernel else 30)
    res = tune(data, args.mode, SearchSpace(trials=trials), args.folds, args.seed, args.kernel,
               args.jobs, args.max_iters, args.grad_tol)
    trials_path = write_trials_csv(res, out / "trials.csv")
    b = res.best
    model, _ = fit_with(data, args.mode, b.alpha, b.beta, b.gamma, args.kernel, args.seed,
                        args.max_iters, args.grad_tol)
    model_path = save_model(model, out / "model.json")
    print(f"best trial={b.trial} alpha={b.alpha:.6g} beta={b.beta:.6g} "
          f"gamma={'' if b.gamma is None else f'{b.gamma:.6g}'} cv_mae={b.cv_mae:.6f}")
    params = {"mode": args.mode, "kernel": args.kernel, "trials": trials, "folds": args.folds}
    write_manifest(out, args, [args.data], [trials_path, model_path], params,
                   time.perf_counter() - t0)
    return 0


def _dataset_files(entries):
    files = []
    for e in entries:
        p = Path(e)
        if p.is_dir():
            found = sorted(p.glob("*.csv"))
            if not found:
                raise FileNotFoundError(f"no CSV files in directory: {p}")
            files.extend(found)
        else:
            files.append(_existing(p))
    return files


def cmd_benchmark(args):
    _need(args, "data")
    t0 = time.perf_counter()
    files = _dataset_files(args.data)
    datasets = [load_csv(f) for f in files]
    modes = [Mode(m.strip()) for m in args.modes.split(",") if m.strip()]
    out = _out_dir(args)
    raw = run_benchmark(datasets, modes, args.reps, args.seed, args.trials, args.folds,
                        args.kernel, args.jobs,
                        progress=lambda name, r: log.info("%s rep %d done", name, r))
    raw_path = write_rows(raw, out / "raw.csv", RAW_COLUMNS)
    summary_path = write_rows(summary_rows(raw), out / "summary.csv", SUMMARY_COLUMNS)
    table = results_table(raw)
    table_path = out / "table.txt"
    table_path.write_text(table + "\n")
    print(table)
    failed = [r for r in raw if r.get("status", "ok") != "ok"]
    for r in failed:
        print(f"dataset {r['dataset']}: {r['status']}", file=sys.stderr)
    params = {"modes": [m.value for m in modes], "reps": args.reps, "trials": args.trials,
              "folds": args.folds, "kernel": args.kernel}
    write_manifest(out, args, files, [raw_path, summary_path, table_path], params,
                   time.perf_counter() - t0)
    return 0


def _existing(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return path


def read_results(path, metric, model=None):
    """Per-dataset mean of ``metric`` from a results CSV.

    Accepts long summaries (``dataset, metric, mean``), raw per-split rows
    with one column per metric, or any ``dataset, <metric>`` table. An
    optional ``model`` column is filtered by ``model``.
    """
    with _existing(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "dataset" not in rows[0]:
        raise CSVFormatError(f"{path}: expected a 'dataset' column")
    cols = rows[0].keys()
    if "model" in cols:
        if model is not None:
            rows = [r for r in rows if r["model"] == model]
        names = {r["model"] for r in rows if r["model"]}
        if len(names) > 1:
            raise UsageError(f"{path}: several models {sorted(names)}; pick one with --model")
    if "metric" in cols:
        value_col = "mean" if "mean" in cols else "value"
        pairs = [(r["dataset"], r[value_col]) for r in rows if r["metric"] == metric]
    elif metric in cols:
        pairs = [(r["dataset"], r[metric]) for r in rows if r.get("status", "ok") == "ok"]
    else:
        raise CSVFormatError(f"{path}: no column or rows for metric {metric!r}")
    acc = {}
    for d, v in pairs:
        try:
            acc.setdefault(d, []).append(float(v))
        except ValueError:
            raise CSVFormatError(f"{path}: non-numeric {metric} for dataset {d!r}: {v!r}") from None
    return {d: float(np.mean(v)) for d, v in acc.items()}


def cmd_compare(args):
    a = read_results(args.a, args.metric, args.model)
    b = read_results(args.b, args.metric, args.model)
    only_a, only_b = sorted(set(a) - set(b)), sorted(set(b) - set(a))
    if only_a or only_b:
        raise UsageError(f"unmatched dataset keys: only in {args.a}: {only_a}; "
                         f"only in {args.b}: {only_b}")
    keys = sorted(a)
    res = wilcoxon_signed_rank([a[k] for k in keys], [b[k] for k in keys])
    print(f"datasets={len(keys)} metric={args.metric} W={res.statistic:g} p={res.pvalue:.6g} "
          f"direction={res.direction:+d} method={res.method}")
    return 0


def cmd_synth(args):
    spec = SyntheticSpec(args.kind, args.n, args.k, args.noise, args.seed or 0, args.p,
                         args.rotation)
    syn = make_synthetic(spec)
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"{spec.kind.value}.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    csv_path, side = export_synthetic(syn, out)
    print(f"wrote {csv_path} and {side}")
    return 0


def boundary_grid(model, lo, hi, steps):
    """Predicted class on a ``steps x steps`` grid over ``[lo, hi]^2``."""
    if model.p != 2:
        raise UsageError(f"grid export needs a 2-feature model, got p={model.p}")
    ax = np.linspace(lo, hi, steps)
    g1, g2 = np.meshgrid(ax, ax, indexing="xy")
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    return pts, model.predict(pts)


def cmd_grid(args):
    model = load_model(_existing(args.model))
    pts, pred = boundary_grid(model, args.lo, args.hi, args.steps)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "prediction"])
        for (x1, x2), p in zip(pts, pred):
            w.writerow([repr(float(x1)), repr(float(x2)), int(p)])
    print(f"wrote {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="cogol", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cogol {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fit=True):
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        if fit:
            p.add_argument("--mode", choices=[m.value for m in Mode])
            p.add_argument("--kernel", choices=["linear", "rbf"])
            p.add_argument("--max-iters", dest="max_iters", type=int)
            p.add_argument("--grad-tol", dest="grad_tol", type=float)

    p = sub.add_parser("train", help="fit one model")
    common(p)
    p.add_argument("--data")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--trace", help="file for per-iteration records, '-' for stderr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a saved model to a CSV")
    common(p, fit=False)
    p.add_argument("--data")
    p.add_argument("--model")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("tune", help="random-search hyperparameters by CV")
    common(p)
    p.add_argument("--data")
    p.add_argument("--folds", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("benchmark", help="replicated split/tune/test protocol")
    common(p)
    p.add_argument("--data", nargs="+", help="CSV files or directories of CSVs")
    p.add_argument("--modes", help="comma list, default ol,gol,cogol")
    p.add_argument("--reps", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("compare", help="Wilcoxon test on per-dataset means of two result files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--metric", default="mae")
    p.add_argument("--model", help="filter rows by model column")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="write a synthetic dataset CSV")
    p.add_argument("--kind", required=True,
                   choices=["parallel_bands", "rotating_boundaries", "concentric_rings"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--rotation", type=float, default=60.0, help="fan angle in degrees")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path or directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("grid", help="export predictions on a 2-D grid as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--lo", type=float, default=-3.0)
    p.add_argument("--hi", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=101)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        resolve(args)
        return args.func(args)
    except (UsageError, FileNotFoundError, IsADirectoryError, ValueError, NonFiniteError) as exc:
        # CSVFormatError and model validation errors are ValueErrors: bad input
        print(f"cogol: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"cogol: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
