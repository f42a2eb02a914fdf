"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is warmed up once (so compile time is excluded), then timed
as the best of ``--repeat`` runs. The last rows time complete fits with
the compiled descent loop switched on and off.
"""
import argparse
import math
import timeit

import numpy as np

from cogol import _accel, _kernels
from cogol.data import SyntheticKind, SyntheticSpec, make_synthetic
from cogol.model import Mode, PenaltySpec
from cogol.optimizer import FitSpec, fit


def best_of(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases():
    rng = np.random.default_rng(0)
    n, p, m = 2000, 10, 8
    X = rng.normal(size=(n, p))
    y = rng.integers(1, m + 2, size=n)
    Z = rng.normal(size=(m, p + 1))
    G = rng.normal(size=(600, 4))
    ranks2 = 2 * np.arange(1, 19, dtype=np.int64)
    return [
        ("objective+gradient n=2000 p=10 k=9",
         lambda: _kernels.packed_objective_grad_numpy(X, y, Z, 1e-3, 0.1),
         lambda: _kernels.packed_objective_grad_numba(X, y, Z, 1e-3, 0.1)),
        ("rbf gram 600x600",
         lambda: _kernels.rbf_gram_numpy(G, G, 0.5),
         lambda: _kernels.rbf_gram_numba(G, G, 0.5)),
        ("wilcoxon exact n=18",
         lambda: _kernels.signed_rank_count_numpy(ranks2, 100),
         lambda: _kernels.signed_rank_count_numba(ranks2, 100)),
    ]


def fit_cases():
    bands = make_synthetic(SyntheticSpec(SyntheticKind.PARALLEL_BANDS, 300, 5, 0.5, 0, p=5)).data
    rot = make_synthetic(SyntheticSpec(SyntheticKind.ROTATING_BOUNDARIES, 600, 5, 0.1, 0)).data
    return [
        ("fit coGOL n=600", rot, FitSpec(Mode.COGOL, PenaltySpec(1e-3, 0.1))),
        ("fit OL n=300 p=5", bands, FitSpec(Mode.OL, PenaltySpec(1e-3, math.inf))),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rows = [(name, best_of(a, args.repeat), best_of(b, args.repeat)) for name, a, b in kernel_cases()]
    saved = _accel.USE_NUMBA
    try:
        for name, data, spec in fit_cases():
            timings = []
            for flag in (False, True):
                _accel.USE_NUMBA = flag
                timings.append(best_of(lambda: fit(data, spec), max(1, args.repeat // 2)))
            rows.append((name, *timings))
    finally:
        _accel.USE_NUMBA = saved

    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'numpy s':>10}  {'numba s':>10}  {'speedup':>8}")
    for name, t_np, t_nb in rows:
        print(f"{name:<{width}}  {t_np:10.4f}  {t_nb:10.4f}  {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
