"""Compare numba and numpy kernel backends on typical workloads.

    python benchmarks/bench_kernels.py --repeat 20

Timings exclude the first (compiling) call. Each pair is also checked for
agreement so a fast-but-wrong backend shows up here.
"""
import argparse
import time

import numpy as np

from gazeatt import kernels


def best_of(fn, repeat):
    fn()  # warm up / compile
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--side", type=int, default=227, help="canvas side for painting")
    ap.add_argument("--n", type=int, default=100_000, help="scores per ranking sweep")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not kernels.HAVE_NUMBA:
        print("numba not importable; nothing to compare")
        return 1
    rng = np.random.default_rng(args.seed)
    s = args.side
    scores = np.round(rng.random(args.n), 3)  # plenty of ties
    labels = (rng.random(args.n) < 0.1).astype(float)

    def paint(fn):
        def run():
            img = np.zeros((s, s, 3))
            for _ in range(20):
                fn(img, 0.2 * s, 0.3 * s, 0.7 * s, 0.6 * s, 0.02 * s, 0.05 * s, (0.8, 0.2, 0.1), 0.9)
            return img
        return run

    def ring(fn):
        def run():
            img = np.zeros((s, s, 3))
            for _ in range(20):
                fn(img, 0.5 * s, 0.5 * s, 0.1 * s, 0.15 * s, (0.1, 0.9, 0.2), 1.0)
            return img
        return run

    cases = [
        ("paint_capsule x20", paint(kernels.paint_capsule_numba), paint(kernels.paint_capsule_numpy)),
        ("paint_ring x20", ring(kernels.paint_ring_numba), ring(kernels.paint_ring_numpy)),
        ("roc_auc", lambda: kernels.roc_auc_numba(scores, labels), lambda: kernels.roc_auc_numpy(scores, labels)),
        ("average_precision", lambda: kernels.average_precision_numba(scores, labels),
         lambda: kernels.average_precision_numpy(scores, labels)),
    ]
    print(f"{'kernel':<20}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  max |diff|")
    for name, fast, ref in cases:
        diff = float(np.max(np.abs(np.asarray(fast()) - np.asarray(ref()))))
        tn, tp = best_of(fast, args.repeat), best_of(ref, args.repeat)
        print(f"{name:<20}{tn * 1e3:>10.3f}{tp * 1e3:>10.3f}{tp / tn:>8.1f}x  {diff:.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
