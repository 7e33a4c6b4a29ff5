#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--repeat 5]

Numba must be importable for the comparison; the script times both code
paths directly (the env flag CONSMAX_NO_NUMBA only affects which path the
package itself selects at import time).
"""

import argparse
import time

import numpy as np

from consmax import _kernels as K
from consmax._accel import NUMBA_ENABLED


def _time(fn, *args, repeat=5):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_dijkstra(repeat):
    rng = np.random.default_rng(0)
    n = 3000
    # random planar-ish graph: grid plus shortcuts
    side = int(np.sqrt(n))
    edges = []
    for r in range(side):
        for c in range(side):
            v = r * side + c
            if c + 1 < side:
                edges.append((v, v + 1))
            if r + 1 < side:
                edges.append((v, v + side))
    extra = rng.integers(0, side * side, size=(n // 2, 2))
    edges += [tuple(e) for e in extra if e[0] != e[1]]
    arr = np.array(sorted(set(tuple(sorted(e)) for e in edges)), dtype=np.int64)
    nv = side * side
    src = np.concatenate([arr[:, 0], arr[:, 1]])
    dst = np.concatenate([arr[:, 1], arr[:, 0]])
    w = rng.uniform(0.1, 2.0, size=len(arr))
    w = np.concatenate([w, w])
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    indptr = np.zeros(nv + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    sources = np.arange(0, nv, 37, dtype=np.int64)

    t_py, out_py = _time(K._dijkstra_table_py, indptr, dst, w, sources, nv, repeat=repeat)
    t_nb, out_nb = _time(K._dijkstra_table_nb, indptr, dst, w, sources, nv, repeat=repeat)
    assert np.allclose(out_py, out_nb, equal_nan=True)
    return f"dijkstra ({nv} verts, {len(sources)} sources)", t_py, t_nb


def bench_simplex(repeat):
    rng = np.random.default_rng(1)
    n_rows, n_cols = 150, 6000
    cols = []
    for _ in range(n_cols):
        size = int(rng.choice([2, 4]))
        cols.append(np.sort(rng.choice(n_rows, size=size, replace=False)))
    indptr = np.zeros(n_cols + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(c) for c in cols])
    indices = np.concatenate(cols).astype(np.int64)

    t_py, out_py = _time(
        K._packing_simplex_py, n_rows, n_cols, indptr, indices, 1e-7, 100000, repeat=repeat
    )
    t_nb, out_nb = _time(
        K._packing_simplex_nb, n_rows, n_cols, indptr, indices, 1e-7, 100000, repeat=repeat
    )
    assert out_py[0] == out_nb[0] == K.LP_OPTIMAL
    assert abs(out_py[1] - out_nb[1]) < 1e-6, (out_py[1], out_nb[1])
    return f"covering LP ({n_rows} vars, {n_cols} constraints)", t_py, t_nb


def bench_greedy(repeat):
    rng = np.random.default_rng(2)
    n_vars, n_cons = 500, 20000
    cons = []
    for _ in range(n_cons):
        size = int(rng.choice([2, 4]))
        cons.append(np.sort(rng.choice(n_vars, size=size, replace=False)))
    indptr = np.zeros(n_cons + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(c) for c in cons])
    indices = np.concatenate(cons).astype(np.int64)
    counts = np.bincount(indices, minlength=n_vars)
    var_indptr = np.zeros(n_vars + 1, dtype=np.int64)
    np.cumsum(counts, out=var_indptr[1:])
    order = np.argsort(indices, kind="stable")
    var_cons = np.repeat(np.arange(n_cons, dtype=np.int64), np.diff(indptr))[order]

    t_py, out_py = _time(K._greedy_pick_py, n_vars, indptr, indices, var_indptr, var_cons, repeat=repeat)
    t_nb, out_nb = _time(K._greedy_pick_nb, n_vars, indptr, indices, var_indptr, var_cons, repeat=repeat)
    assert np.array_equal(out_py, out_nb)
    return f"greedy cover ({n_vars} vars, {n_cons} constraints)", t_py, t_nb


def bench_pose_refine(repeat):
    rng = np.random.default_rng(3)
    cases = []
    for _ in range(200):
        C = np.column_stack(
            [rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.5, 0.5, 3), rng.uniform(2.0, 4.0, 3)]
        )
        F = C / np.sqrt((C * C).sum(axis=1))[:, None]
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        R = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        t = rng.uniform(-2, 2, 3)
        P = (C - t) @ R
        R0 = R + rng.normal(scale=1e-3, size=(3, 3))
        U, _, Vt = np.linalg.svd(R0)
        R0 = U @ Vt
        cases.append((R0, t + rng.normal(scale=1e-3, size=3), P, F))

    def run(fn):
        acc = 0.0
        for R0, t0, P, F in cases:
            Rr, tr, _ = fn(R0.copy(), t0.copy(), P, F, 40)
            acc += tr[0]
        return acc

    t_py, a = _time(run, K._pose_refine_gn_py, repeat=repeat)
    t_nb, b = _time(run, K._pose_refine_gn_nb, repeat=repeat)
    assert abs(a - b) < 1e-6
    return "pose refine GN (200 problems)", t_py, t_nb


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not NUMBA_ENABLED:
        raise SystemExit(
            "numba path is disabled (CONSMAX_NO_NUMBA set or numba missing); "
            "nothing to compare"
        )
    K.warmup()
    rows = [
        bench_dijkstra(args.repeat),
        bench_simplex(args.repeat),
        bench_greedy(args.repeat),
        bench_pose_refine(args.repeat),
    ]
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, t_py, t_nb in rows:
        print(f"{name:<{width}}  {t_py * 1e3:>8.1f}ms  {t_nb * 1e3:>8.1f}ms  {t_py / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
