import numpy as np
import pytest

from pointattn import PointSet, fps_sample, interpolate, knn_search
from pointattn.geometry import interpolation_weights

from oracles import brute_force_knn, greedy_fps_reference, interpolate_reference


class TestKnn:
    def test_self_is_first_neighbor(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [3, 0, 0]], dtype=float)
        table = knn_search(pts, pts, 2)
        assert table.indices[0].tolist() == [0, 1]
        assert table.sq_dists[0].tolist() == [0.0, 1.0]

    def test_matches_brute_force_on_random_cube(self):
        rng = np.random.default_rng(42)
        pts = rng.random((1000, 3))
        table = knn_search(pts, pts, 16)
        idx, sqd = brute_force_knn(pts, pts, 16)
        np.testing.assert_array_equal(table.indices, idx)
        np.testing.assert_array_equal(table.sq_dists, sqd)

    def test_separate_query_set(self):
        rng = np.random.default_rng(7)
        pts = rng.random((300, 3))
        qry = rng.random((50, 3))
        table = knn_search(pts, qry, 5)
        idx, sqd = brute_force_knn(pts, qry, 5)
        np.testing.assert_array_equal(table.indices, idx)
        np.testing.assert_array_equal(table.sq_dists, sqd)

    def test_ties_break_toward_smaller_index(self):
        # Two candidates at identical distance from the query.
        pts = np.array([[1, 0, 0], [0, 5, 0], [-1, 0, 0], [0, 0, 0]], dtype=float)
        table = knn_search(pts, np.zeros((1, 3)), 2)
        assert table.indices[0].tolist() == [3, 0]

    def test_rows_sorted_ascending(self):
        rng = np.random.default_rng(3)
        pts = rng.random((200, 3))
        table = knn_search(pts, pts, 12)
        assert np.all(np.diff(table.sq_dists, axis=1) >= 0)

    def test_k_equals_n(self):
        rng = np.random.default_rng(5)
        pts = rng.random((17, 3))
        table = knn_search(pts, pts, 17)
        idx, _ = brute_force_knn(pts, pts, 17)
        np.testing.assert_array_equal(table.indices, idx)

    def test_k_larger_than_n_rejected(self):
        pts = np.zeros((3, 3))
        with pytest.raises(ValueError, match="exceeds"):
            knn_search(pts, pts, 4)

    def test_non_finite_rejected(self):
        pts = np.array([[0, 0, 0], [np.nan, 0, 0]])
        with pytest.raises(ValueError, match="non-finite"):
            knn_search(pts, pts, 1)

    def test_translation_leaves_indices_unchanged(self):
        rng = np.random.default_rng(11)
        pts = rng.random((150, 3))
        shift = np.array([12.5, -3.0, 7.25])
        a = knn_search(pts, pts, 8)
        b = knn_search(pts + shift, pts + shift, 8)
        np.testing.assert_array_equal(a.indices, b.indices)

    def test_accepts_point_sets(self):
        ps = PointSet(np.random.default_rng(0).random((20, 3)))
        table = knn_search(ps, ps, 4)
        assert table.indices.shape == (20, 4)


class TestFps:
    def test_sampling_everything_is_a_permutation(self):
        rng = np.random.default_rng(1)
        pts = rng.random((40, 3))
        res = fps_sample(pts, 40)
        assert sorted(res.selected.tolist()) == list(range(40))

    def test_collinear_picks_farthest(self):
        pts = np.zeros((5, 3))
        pts[:, 0] = [0, 1, 2, 3, 10]
        res = fps_sample(pts, 2, start=0)
        assert res.selected.tolist() == [0, 4]

    def test_matches_reference(self):
        rng = np.random.default_rng(9)
        pts = rng.random((200, 3))
        res = fps_sample(pts, 50)
        np.testing.assert_array_equal(res.selected, greedy_fps_reference(pts, 50))

    def test_maxmin_property(self):
        rng = np.random.default_rng(13)
        pts = rng.random((120, 3))
        res = fps_sample(pts, 30)
        chosen = res.selected
        for t in range(1, 30):
            prior = pts[chosen[:t]]
            dist_of = lambda i: ((pts[i] - prior) ** 2).sum(axis=1).min()
            picked = dist_of(chosen[t])
            others = np.setdiff1d(np.arange(len(pts)), chosen[:t])
            assert picked >= max(dist_of(i) for i in others) - 1e-12

    def test_start_parameter(self):
        rng = np.random.default_rng(2)
        pts = rng.random((60, 3))
        a = fps_sample(pts, 10, start=0)
        b = fps_sample(pts, 10, start=17)
        assert b.selected[0] == 17
        assert a.selected[0] == 0

    def test_translation_invariance(self):
        rng = np.random.default_rng(8)
        pts = rng.random((80, 3))
        a = fps_sample(pts, 20)
        b = fps_sample(pts + np.array([5.0, 5.0, 5.0]), 20)
        np.testing.assert_array_equal(a.selected, b.selected)

    def test_min_dists_reported(self):
        pts = np.zeros((3, 3))
        pts[:, 0] = [0, 1, 5]
        res = fps_sample(pts, 2)
        assert res.min_sq_dists.tolist() == [0.0, 1.0, 0.0]

    def test_oversampling_rejected(self):
        with pytest.raises(ValueError, match="m="):
            fps_sample(np.zeros((3, 3)), 4)

    def test_duplicate_points_still_distinct_selection(self):
        pts = np.zeros((6, 3))
        res = fps_sample(pts, 6)
        assert sorted(res.selected.tolist()) == list(range(6))


class TestInterpolate:
    def _source(self, rng, n=64, d=5):
        # Spread over a 5-unit box: the eps=1e-8 weight floor leaves a
        # residual of order eps / (second-neighbor sq. distance).
        return PointSet(rng.random((n, 3)) * 5.0, features=rng.standard_normal((n, d)))

    def test_coincident_target_returns_source_feature(self):
        rng = np.random.default_rng(21)
        src = self._source(rng)
        out = interpolate(src, src.positions[[10]])
        np.testing.assert_allclose(out[0], src.features[10], atol=1e-6)

    def test_equidistant_pair_averages(self):
        src = PointSet(
            np.array([[1.0, 0, 0], [-1.0, 0, 0]]),
            features=np.array([[2.0, 4.0], [6.0, 0.0]]),
        )
        out = interpolate(src, np.zeros((1, 3)), p=2)
        np.testing.assert_allclose(out[0], [4.0, 2.0], atol=1e-12)

    def test_matches_reference(self):
        rng = np.random.default_rng(33)
        src = self._source(rng)
        targets = rng.random((16, 3))
        out = interpolate(src, targets)
        ref = interpolate_reference(src.positions, src.features, targets)
        np.testing.assert_allclose(out, ref, atol=1e-10)

    def test_weights_normalized(self):
        rng = np.random.default_rng(41)
        src = rng.random((30, 3))
        targets = rng.random((25, 3))
        _, w = interpolation_weights(src, targets, p=3)
        assert np.all(w >= 0)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-9)

    def test_missing_features_rejected(self):
        src = PointSet(np.random.default_rng(0).random((10, 3)))
        with pytest.raises(ValueError, match="features"):
            interpolate(src, np.zeros((1, 3)))

    def test_translation_invariance(self):
        rng = np.random.default_rng(55)
        src = self._source(rng)
        targets = rng.random((8, 3))
        shift = np.array([3.0, -2.0, 9.0])
        a = interpolate(src, targets)
        b = interpolate(PointSet(src.positions + shift, features=src.features), targets + shift)
        np.testing.assert_allclose(a, b, atol=1e-9)


class TestPointSet:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            PointSet(np.zeros((0, 3)))

    def test_rejects_feature_length_mismatch(self):
        with pytest.raises(ValueError):
            PointSet(np.zeros((3, 3)), features=np.zeros((2, 4)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            PointSet(np.array([[0, 0, np.inf]]))
