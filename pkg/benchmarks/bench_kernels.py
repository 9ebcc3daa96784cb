"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Both backends live in ``strata_shap.kernels``; the benchmark calls the
private implementations directly so one process can time both.
"""

import argparse
import json
import time

import numpy as np

from strata_shap import kernels
from strata_shap.experiments import gen_synthetic


def _batch(n, sizes, seed):
    rng = np.random.default_rng(seed)
    blocks = []
    for k in sizes:
        blocks.append(np.sort(rng.choice(n, size=k, replace=False)))
    flat = np.concatenate(blocks)
    offsets = np.concatenate([[0], np.cumsum([b.size for b in blocks])])
    return flat, offsets


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--fits", type=int, default=400)
    ap.add_argument("--json", default=None)
    args = ap.parse_args()

    data = gen_synthetic(300, 50, seed=0)
    Xb = kernels.add_bias(data.X[:100])
    y = data.y[:100].astype(np.float64)
    Xh = kernels.add_bias(data.X[100:])
    yh = data.y[100:].astype(np.float64)
    lam = 0.005

    results = []
    for label, sizes in (
        ("small coalitions (k=2..10)", np.arange(args.fits) % 9 + 2),
        ("mid coalitions (k=20..60)", np.arange(args.fits // 4) % 41 + 20),
        ("large coalitions (k=90..99)", np.arange(args.fits // 8) % 10 + 90),
    ):
        flat, offsets = _batch(100, sizes, 1)
        call = (Xb, y, flat, offsets, lam, 1e-6, 10_000, Xh, yh)
        kernels._fit_batch_nb(*call)  # compile outside the timing
        t_nb = _time(lambda: kernels._fit_batch_nb(*call), args.repeat)
        t_np = _time(lambda: kernels._fit_batch_np(*call), args.repeat)
        results.append(
            {"kernel": "fit_batch", "case": label, "fits": len(sizes), "numba_s": t_nb, "numpy_s": t_np}
        )

    rng = np.random.default_rng(2)
    jumps = rng.integers(np.arange(30), 999, size=(20_000, 30))
    perm = np.arange(999, dtype=np.int64)
    kernels._draw_subsets_nb(perm.copy(), jumps)
    t_nb = _time(lambda: kernels._draw_subsets_nb(perm.copy(), jumps), args.repeat)
    t_np = _time(lambda: kernels._draw_subsets_np(perm.copy(), jumps), args.repeat)
    results.append({"kernel": "draw_subsets", "case": "20000 draws, k=30, pool 999", "fits": 0, "numba_s": t_nb, "numpy_s": t_np})

    print(f"{'kernel':<14} {'case':<30} {'numba s':>10} {'numpy s':>10} {'speedup':>8}")
    for r in results:
        r["speedup"] = r["numpy_s"] / r["numba_s"]
        print(f"{r['kernel']:<14} {r['case']:<30} {r['numba_s']:>10.4f} {r['numpy_s']:>10.4f} {r['speedup']:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
