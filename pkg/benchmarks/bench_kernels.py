"""Replications per second of the per-replication kernel, numba vs numpy.

    python3 benchmarks/bench_kernels.py [--reps 20000] [--studies 5 20 50]

Both backends get identical pre-drawn effect sizes, so the timing covers only
Q, the corrected moments and the three p-values. numba is warmed up (and its
on-disk cache filled) before timing. Results are also checked for agreement.
"""
import argparse
import time

import numpy as np

from metaq import _accel, _kernels, simlab
from metaq.smd import DesignConstants


def bench(n_studies, reps, repeat):
    sizes = [simlab.split_size(n) for n in np.linspace(24, 168, n_studies).astype(int)]
    design = DesignConstants.from_sizes([s[0] for s in sizes], [s[1] for s in sizes])
    rng = simlab.block_rng(0, 0)
    G = simlab.sample_study_g(np.array([s[0] for s in sizes])[:, None],
                              np.array([s[1] for s in sizes])[:, None],
                              0.5, rng, (n_studies, reps), design.j[:, None])
    backends = ["numpy"] + (["numba"] if _accel.NUMBA_ENABLED else [])
    rows, outs = {}, {}
    for name in backends:
        kernel = _kernels.BACKENDS[name]
        kernel(G[:, :10], design, True, True, False, np.nan, np.nan)  # warm-up / compile
        best = np.inf
        for _ in range(repeat):
            t0 = time.perf_counter()
            outs[name] = kernel(G, design, True, True, False, np.nan, np.nan)
            best = min(best, time.perf_counter() - t0)
        rows[name] = best
    diff = np.nan
    if len(outs) == 2:
        diff = float(np.nanmax(np.abs(outs["numba"] - outs["numpy"])))
    return rows, diff


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20_000)
    ap.add_argument("--studies", type=int, nargs="+", default=[5, 20, 50])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.NUMBA_ENABLED:
        print("numba disabled; timing the numpy backend only")
    print(f"{'I':>4} {'numpy rep/s':>13} {'numba rep/s':>13} {'speedup':>8} {'max |diff|':>11}")
    for n in args.studies:
        rows, diff = bench(n, args.reps, args.repeat)
        np_rate = args.reps / rows["numpy"]
        nb = rows.get("numba")
        nb_rate = f"{args.reps / nb:13.0f}" if nb else f"{'-':>13}"
        speed = f"{rows['numpy'] / nb:7.1f}x" if nb else f"{'-':>8}"
        print(f"{n:>4} {np_rate:13.0f} {nb_rate} {speed} {diff:11.1e}")


if __name__ == "__main__":
    main()
