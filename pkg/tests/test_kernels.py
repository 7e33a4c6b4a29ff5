"""Cross-checks between the numba kernels and their numpy fallbacks."""

import numpy as np
import pytest

from consmax import _kernels as K
from consmax._accel import NUMBA_ENABLED

pytestmark = pytest.mark.skipif(
    not NUMBA_ENABLED, reason="numba path disabled; nothing to cross-check"
)


def random_csr_graph(rng, n, extra):
    edges = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.add((j, i))
    for _ in range(extra):
        a, b = rng.integers(0, n, size=2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    arr = np.array(sorted(edges), dtype=np.int64)
    src = np.concatenate([arr[:, 0], arr[:, 1]])
    dst = np.concatenate([arr[:, 1], arr[:, 0]])
    w = rng.uniform(0.1, 3.0, size=len(arr))
    w = np.concatenate([w, w])
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst, w


def random_cols(rng, n_rows, n_cols, sizes=(1, 2, 4)):
    cols = []
    for _ in range(n_cols):
        size = min(int(rng.choice(sizes)), n_rows)
        cols.append(np.sort(rng.choice(n_rows, size=size, replace=False)))
    indptr = np.zeros(len(cols) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(c) for c in cols])
    return indptr, np.concatenate(cols).astype(np.int64)


class TestDijkstraPaths:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_fallback(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 120))
        indptr, indices, w = random_csr_graph(rng, n, extra=n)
        sources = rng.choice(n, size=min(7, n), replace=False).astype(np.int64)
        a = K._dijkstra_table_py(indptr, indices, w, sources, n)
        b = K._dijkstra_table_nb(indptr, indices, w, sources, n)
        assert np.allclose(a, b, equal_nan=True)


class TestSimplexPaths:
    @pytest.mark.parametrize("seed", range(8))
    def test_same_optimum(self, seed):
        rng = np.random.default_rng(seed)
        n_rows = int(rng.integers(2, 30))
        n_cols = int(rng.integers(1, 80))
        indptr, indices = random_cols(rng, n_rows, n_cols)
        sa, oa, za, _ = K._packing_simplex_py(n_rows, n_cols, indptr, indices, 1e-7, 100000)
        sb, ob, zb, _ = K._packing_simplex_nb(n_rows, n_cols, indptr, indices, 1e-7, 100000)
        assert sa == sb == K.LP_OPTIMAL
        assert oa == pytest.approx(ob, abs=1e-7)
        # both primal vectors must be feasible covers of equal objective
        for z in (za, zb):
            assert z.sum() == pytest.approx(oa, abs=1e-6)
            for c in range(n_cols):
                members = indices[indptr[c]:indptr[c + 1]]
                assert z[members].sum() >= 1 - 1e-7


class TestGreedyPaths:
    @pytest.mark.parametrize("seed", range(8))
    def test_identical_picks(self, seed):
        rng = np.random.default_rng(100 + seed)
        n_vars = int(rng.integers(2, 40))
        n_cons = int(rng.integers(1, 120))
        indptr, indices = random_cols(rng, n_vars, n_cons)
        counts = np.bincount(indices, minlength=n_vars)
        var_indptr = np.zeros(n_vars + 1, dtype=np.int64)
        np.cumsum(counts, out=var_indptr[1:])
        order = np.argsort(indices, kind="stable")
        var_cons = np.repeat(np.arange(n_cons, dtype=np.int64), np.diff(indptr))[order]
        a = K._greedy_pick_py(n_vars, indptr, indices, var_indptr, var_cons)
        b = K._greedy_pick_nb(n_vars, indptr, indices, var_indptr, var_cons)
        assert np.array_equal(a, b)


class TestPoseRefinePaths:
    def test_same_fixed_point(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            C = np.column_stack(
                [rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.5, 0.5, 3), rng.uniform(2, 4, 3)]
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
            Rp = R + rng.normal(scale=1e-4, size=(3, 3))
            U, _, Vt = np.linalg.svd(Rp)
            Rp = U @ Vt
            tp = t + rng.normal(scale=1e-4, size=3)
            Ra, ta, _ = K._pose_refine_gn_py(Rp.copy(), tp.copy(), P, F, 40)
            Rb, tb, _ = K._pose_refine_gn_nb(Rp.copy(), tp.copy(), P, F, 40)
            assert np.allclose(Ra, R, atol=1e-8)
            assert np.allclose(Rb, R, atol=1e-8)
            assert np.allclose(ta, t, atol=1e-8)
            assert np.allclose(tb, t, atol=1e-8)
