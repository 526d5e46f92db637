#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

The package picks its hot-loop implementation at import time: numba-compiled
kernels by default, plain numpy when ``SIFSVM_NO_NUMBA=1``. Both variants stay
importable side by side, so every kernel row below is timed in-process on
identical inputs. The end-to-end row re-runs a small regularization path in a
subprocess with the flag set, because the dispatch choice is baked in at
import.

Usage:
    python benchmarks/bench_backends.py
    python benchmarks/bench_backends.py --n 4000 --p 800 --density 0.02 --repeats 7
    python benchmarks/bench_backends.py --csv kernels.csv
"""

import argparse
import csv
import os
import subprocess
import sys
import time

import numpy as np
import scipy.sparse as sp

from sifsvm import kernels
from sifsvm.backend import ENV_FLAG, NUMBA_ENABLED
from sifsvm.boundary import GridSpec, log_fracs
from sifsvm.data import SynthSpec, generate_synthetic
from sifsvm.harness import run_path
from sifsvm.solver import reference_config

PATH_N, PATH_P, PATH_SEED = 1000, 200, 5
PATH_GAMMA = 0.05


def build_inputs(n, p, density, seed):
    rng = np.random.default_rng(seed)
    mat = sp.random(p, n, density=density, random_state=rng.integers(2**31), format="csc")
    mat.data = rng.standard_normal(mat.nnz)
    csc = sp.csc_matrix(mat)
    csc.sort_indices()
    csr = csc.tocsr()
    theta = rng.uniform(0.0, 1.0, n)
    col_sqnorms = np.asarray(csc.multiply(csc).sum(axis=0)).ravel()
    v = np.asarray(csc @ theta).ravel() / n

    status = rng.choice(np.array([0, 0, 0, 1, 2], dtype=np.int8), size=n)
    dc = np.flatnonzero(status == 0).astype(np.int64)
    pos = np.zeros(n, dtype=np.int64)
    pos[dc] = np.arange(dc.size)
    pinned = np.where(status == 2, 1.0, 0.0)
    u_init = np.zeros(p)
    kernels.scatter_matvec_numpy(csc.indptr, csc.indices, csc.data, pinned, 1.0 / n, u_init)
    feat_mask = rng.uniform(size=p) > 0.2
    fc = np.flatnonzero(feat_mask)
    fpos = np.zeros(p, dtype=np.int64)
    fpos[fc] = np.arange(fc.size)

    alpha, beta, gamma = 0.5, 0.02, 0.5
    epochs = 10
    orders = np.argsort(rng.random((epochs, n)), axis=1).astype(np.int64)
    sel_cols = np.sort(rng.choice(n, size=int(0.8 * n), replace=False)).astype(np.int64)
    dual_center = rng.standard_normal(dc.size)
    primal_center = rng.standard_normal(fc.size)
    coef = rng.standard_normal(n)
    margins = rng.uniform(-2.0, 3.0, n)

    # (label, kernel base name, callable building fresh args for one run)
    cases = [
        (
            f"cd_batch[{epochs} epochs]",
            "cd_batch",
            lambda: (csc.indptr, csc.indices, csc.data, col_sqnorms,
                     v.copy(), theta.copy(), orders, alpha, beta, gamma, float(n)),
        ),
        (
            "gap_eval",
            "gap_eval",
            lambda: (csc.indptr, csc.indices, csc.data, csr.indptr, csr.indices,
                     csr.data, u_init, dc, theta[dc].copy(), float(np.sum(status == 2)),
                     feat_mask, np.zeros(p), np.empty(p), np.empty(n),
                     alpha, beta, gamma),
        ),
        (
            "ifs_pass",
            "ifs_pass",
            lambda: (csr.indptr, csr.indices, csr.data,
                     np.arange(p, dtype=np.int64), status, pos,
                     dual_center, 0.3, float(n), np.empty(p)),
        ),
        (
            "iss_pass",
            "iss_pass",
            lambda: (csc.indptr, csc.indices, csc.data,
                     np.arange(n, dtype=np.int64), feat_mask, fpos,
                     primal_center, 0.2, np.empty(n), np.empty(n)),
        ),
        (
            "scatter_matvec",
            "scatter_matvec",
            lambda: (csc.indptr, csc.indices, csc.data,
                     coef, 1.0 / n, np.zeros(p)),
        ),
        (
            "masked_col_sqnorms",
            "masked_col_sqnorms",
            lambda: (csc.indptr, csc.indices, csc.data, sel_cols, feat_mask,
                     np.empty(sel_cols.size)),
        ),
        (
            "loss_sum_eval",
            "loss_sum_eval",
            lambda: (margins.copy(), gamma),
        ),
    ]
    return csc.nnz, cases


def best_of(fn, make_args, repeats):
    best = float("inf")
    for _ in range(repeats):
        args = make_args()
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(n, p, density, seed, repeats):
    nnz, cases = build_inputs(n, p, density, seed)
    print(f"kernel inputs: {p} features x {n} samples, {nnz} nonzeros")
    print()
    header = f"{'kernel':<24} {'numba (ms)':>12} {'numpy (ms)':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    rows = []
    for label, base, make_args in cases:
        fn_nb = getattr(kernels, base + "_numba")
        fn_np = getattr(kernels, base + "_numpy")
        fn_nb(*make_args())  # compile before timing
        t_nb = best_of(fn_nb, make_args, repeats)
        t_np = best_of(fn_np, make_args, repeats)
        rows.append((label, t_nb, t_np, t_np / t_nb))
        print(f"{label:<24} {t_nb * 1e3:>12.3f} {t_np * 1e3:>12.3f} {t_np / t_nb:>8.1f}x")
    return rows


def run_bench_path():
    d = generate_synthetic(SynthSpec(n=PATH_N, p=PATH_P, seed=PATH_SEED))
    spec = GridSpec(beta_fracs=log_fracs(1.0, 0.1, 3), alpha_fracs=log_fracs(1.0, 0.01, 10))
    cfg = reference_config(PATH_GAMMA)
    run_path(d, PATH_GAMMA, spec, mode="sifs", cfg=cfg)  # warm up
    t0 = time.perf_counter()
    run_path(d, PATH_GAMMA, spec, mode="sifs", cfg=cfg)
    return time.perf_counter() - t0


def bench_end_to_end():
    print()
    print(f"end-to-end: sifs path over 3x10 grid, "
          f"{PATH_N} samples x {PATH_P} features, gamma={PATH_GAMMA}")
    t_here = run_bench_path()
    code = (
        "from benchmarks.bench_backends import run_bench_path\n"
        "print(f'{run_bench_path():.6f}')\n"
    )
    env = dict(os.environ, **{ENV_FLAG: "1"})
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    proc = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env=env, cwd=root
    )
    if proc.returncode != 0:
        print(f"numpy subprocess failed:\n{proc.stderr}", file=sys.stderr)
        return None
    t_numpy = float(proc.stdout.strip().splitlines()[-1])
    print(f"{'path (this backend)':<24} {t_here * 1e3:>12.1f} ms")
    print(f"{'path (numpy fallback)':<24} {t_numpy * 1e3:>12.1f} ms")
    print(f"{'end-to-end speedup':<24} {t_numpy / t_here:>11.1f}x")
    return ("path[3x10 grid]", t_here, t_numpy, t_numpy / t_here)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000, help="samples")
    ap.add_argument("--p", type=int, default=500, help="features")
    ap.add_argument("--density", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    ap.add_argument("--csv", help="also write the rows to this CSV file")
    args = ap.parse_args(argv)

    if not NUMBA_ENABLED:
        print(f"numba backend is disabled ({ENV_FLAG} is set); "
              "unset it to compare the backends", file=sys.stderr)
        return 1

    rows = bench_kernels(args.n, args.p, args.density, args.seed, args.repeats)
    if not args.skip_end_to_end:
        extra = bench_end_to_end()
        if extra is not None:
            rows.append(extra)

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kernel", "numba_seconds", "numpy_seconds", "speedup"])
            writer.writerows(rows)
        print(f"\nwrote {len(rows)} rows to {args.csv}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
