import math

import numpy as np
import pytest

import collapselab.neighbors as neighbors
from collapselab import (
    ConfigError,
    DimensionError,
    EmptyDatasetError,
    EUCLIDEAN,
    InsufficientPointsError,
    PointSet,
    kth_nn_within,
    nn_cross,
)


def naive_kth_within(data, k):
    """Quadratic reference: sort (distance, index) pairs per row."""
    n = len(data)
    dists = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    for i in range(n):
        pairs = []
        for j in range(n):
            if j == i:
                continue
            d = math.sqrt(float(np.sum((data[i] - data[j]) ** 2)))
            pairs.append((d, j))
        pairs.sort()
        dists[i], idx[i] = pairs[k - 1]
    return dists, idx


def naive_cross(queries, refs):
    nq = len(queries)
    dists = np.empty(nq)
    idx = np.empty(nq, dtype=np.int64)
    for i in range(nq):
        pairs = sorted(
            (math.sqrt(float(np.sum((queries[i] - refs[j]) ** 2))), j) for j in range(len(refs))
        )
        dists[i], idx[i] = pairs[0]
    return dists, idx


class TestKthWithin:
    def test_hand_values_line(self):
        ps = PointSet([[0.0], [1.0], [3.0]])
        res = kth_nn_within(ps, k=1)
        assert np.array_equal(res.distances, [1.0, 1.0, 2.0])
        assert np.array_equal(res.indices, [1, 0, 1])

    def test_tie_break_prefers_lowest_index(self):
        ps = PointSet([[0.0], [1.0], [-1.0], [2.0]])
        res = kth_nn_within(ps, k=1)
        assert res.distances[0] == 1.0
        assert res.indices[0] == 1
        res2 = kth_nn_within(ps, k=2)
        assert res2.distances[0] == 1.0
        assert res2.indices[0] == 2
        res3 = kth_nn_within(ps, k=3)
        assert res3.distances[0] == 2.0
        assert res3.indices[0] == 3

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(17)
        for trial in range(12):
            n = int(rng.integers(5, 120))
            d = int(rng.choice([1, 2, 5]))
            data = rng.standard_normal((n, d)) * rng.uniform(0.1, 50.0)
            ps = PointSet(data)
            for k in (1, 2, min(5, n - 1)):
                res = kth_nn_within(ps, k=k)
                ref_d, ref_i = naive_kth_within(data, k)
                np.testing.assert_allclose(res.distances, ref_d, rtol=1e-12, atol=0.0)
                assert np.array_equal(res.indices, ref_i)

    def test_matches_naive_on_tied_lattice(self):
        # integer grid: every interior point has four equidistant neighbors
        g = np.arange(6.0)
        data = np.array([[x, y] for x in g for y in g])
        ps = PointSet(data)
        for k in (1, 2, 3, 4):
            res = kth_nn_within(ps, k=k)
            ref_d, ref_i = naive_kth_within(data, k)
            assert np.array_equal(res.distances, ref_d)
            assert np.array_equal(res.indices, ref_i)

    def test_distances_monotone_in_k(self):
        rng = np.random.default_rng(23)
        ps = PointSet(rng.standard_normal((40, 3)))
        prev = None
        for k in range(1, 6):
            cur = kth_nn_within(ps, k=k).distances
            if prev is not None:
                assert np.all(cur >= prev)
            prev = cur

    def test_permutation_equivariant(self):
        rng = np.random.default_rng(29)
        data = rng.standard_normal((60, 2))
        perm = rng.permutation(60)
        res = kth_nn_within(PointSet(data), k=1)
        res_p = kth_nn_within(PointSet(data[perm]), k=1)
        np.testing.assert_allclose(res_p.distances, res.distances[perm], rtol=1e-12)
        inv = np.empty(60, dtype=np.int64)
        inv[perm] = np.arange(60)
        assert np.array_equal(res_p.indices, inv[res.indices[perm]])

    def test_duplicate_rows_give_zero(self):
        ps = PointSet([[1.0, 2.0], [1.0, 2.0], [5.0, 5.0]])
        res = kth_nn_within(ps, k=1)
        assert res.distances[0] == 0.0
        assert res.distances[1] == 0.0
        assert res.indices[0] == 1
        assert res.indices[1] == 0

    def test_errors(self):
        ps = PointSet([[0.0], [1.0]])
        with pytest.raises(ConfigError):
            kth_nn_within(ps, k=0)
        with pytest.raises(InsufficientPointsError):
            kth_nn_within(ps, k=2)


class TestNnCross:
    def test_hand_value(self):
        queries = PointSet([[0.0, 0.0]])
        refs = PointSet([[3.0, 4.0], [6.0, 8.0]])
        res = nn_cross(queries, refs)
        assert res.distances[0] == 5.0
        assert res.indices[0] == 0

    def test_self_match_allowed(self):
        ps = PointSet([[0.0], [1.0], [2.0]])
        res = nn_cross(ps, ps)
        assert np.array_equal(res.distances, [0.0, 0.0, 0.0])
        assert np.array_equal(res.indices, [0, 1, 2])

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(31)
        for trial in range(8):
            q = rng.standard_normal((int(rng.integers(3, 80)), 3))
            r = rng.standard_normal((int(rng.integers(3, 80)), 3))
            res = nn_cross(PointSet(q), PointSet(r))
            ref_d, ref_i = naive_cross(q, r)
            np.testing.assert_allclose(res.distances, ref_d, rtol=1e-12, atol=0.0)
            assert np.array_equal(res.indices, ref_i)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            nn_cross(PointSet([[0.0]]), PointSet([[0.0, 1.0]]))

    def test_empty_sides_rejected(self):
        ps = PointSet([[0.0]])
        empty = PointSet(np.empty((0, 1)))
        with pytest.raises(EmptyDatasetError):
            nn_cross(empty, ps)
        with pytest.raises(EmptyDatasetError):
            nn_cross(ps, empty)


class TestDeterminism:
    def test_block_size_does_not_change_bits(self, monkeypatch):
        rng = np.random.default_rng(37)
        ps = PointSet(rng.standard_normal((300, 4)))
        base = kth_nn_within(ps, k=2)
        monkeypatch.setattr(neighbors, "_BLOCK_BUDGET", 1 << 10)
        small = kth_nn_within(ps, k=2)
        assert np.array_equal(base.distances, small.distances)
        assert np.array_equal(base.indices, small.indices)

    def test_worker_count_does_not_change_bits(self, monkeypatch):
        rng = np.random.default_rng(41)
        ps = PointSet(rng.standard_normal((500, 3)))
        monkeypatch.setattr(neighbors, "_BLOCK_BUDGET", 1 << 12)
        results = []
        for workers in ("1", "3", "8"):
            monkeypatch.setenv("COLLAPSE_LAB_THREADS", workers)
            results.append(kth_nn_within(ps, k=1))
        for res in results[1:]:
            assert np.array_equal(res.distances, results[0].distances)
            assert np.array_equal(res.indices, results[0].indices)

    def test_bad_worker_env_rejected(self, monkeypatch):
        monkeypatch.setenv("COLLAPSE_LAB_THREADS", "zero")
        with pytest.raises(ConfigError):
            neighbors.worker_count()
        monkeypatch.setenv("COLLAPSE_LAB_THREADS", "0")
        with pytest.raises(ConfigError):
            neighbors.worker_count()
