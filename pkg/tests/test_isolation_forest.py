"""Isolation forest construction, scoring law, and outlier partitioning."""

import math

import numpy as np
import pytest

from anomaly_pipeline.errors import ConfigError, DataError
from anomaly_pipeline.isolation_forest import (
    IsolationForest,
    c_normalizer,
    fit_forest,
    forest_from_document,
    forest_to_document,
    partition_outliers,
    path_length,
    score,
    score_batch,
)


def harmonic(n):
    return sum(1.0 / i for i in range(1, n + 1))


class TestNormalizer:
    def test_c_of_two_is_one(self):
        assert abs(c_normalizer(2) - 1.0) < 1e-12

    def test_matches_exact_harmonic_sum(self):
        for n in [2, 3, 5, 17, 100, 256, 1000]:
            expected = 2 * harmonic(n - 1) - 2 * (n - 1) / n
            assert abs(c_normalizer(n) - expected) < 1e-10

    def test_strictly_increasing(self):
        values = [c_normalizer(n) for n in range(2, 2000, 7)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_large_n_approximation_is_close(self):
        # At the crossover the log form should agree with the sum to ~1e-5.
        exact = 2 * harmonic(10_000) - 2 * 10_000 / 10_001
        assert abs(c_normalizer(10_001) - exact) < 1e-4

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            c_normalizer(1)


class TestFit:
    def test_default_geometry(self):
        rng = np.random.default_rng(3)
        data = rng.standard_normal((1000, 4))
        forest = fit_forest(data, seed=5)
        assert forest.tree_count == 100
        assert len(forest.trees) == 100
        assert forest.subsample_size == 256
        assert all(t.height_limit == math.ceil(math.log2(256)) for t in forest.trees)

    def test_subsample_capped_at_row_count(self):
        data = np.random.default_rng(5).standard_normal((40, 3))
        forest = fit_forest(data, tree_count=10, subsample_size=256, seed=1)
        assert forest.subsample_size == 40

    def test_identical_rows_yield_single_leaves(self):
        data = np.ones((50, 3))
        forest = fit_forest(data, tree_count=5, subsample_size=16, seed=2)
        for tree in forest.trees:
            assert tree.root.is_leaf
            assert tree.root.count == 16

    def test_seed_determinism(self):
        data = np.random.default_rng(7).standard_normal((300, 5))
        a = forest_to_document(fit_forest(data, tree_count=20, seed=9))
        b = forest_to_document(fit_forest(data, tree_count=20, seed=9))
        c = forest_to_document(fit_forest(data, tree_count=20, seed=10))
        assert a == b
        assert a != c

    def test_split_values_strictly_inside_node_range(self):
        data = np.random.default_rng(11).standard_normal((500, 3))
        forest = fit_forest(data, tree_count=10, subsample_size=64, seed=3)

        def check(node):
            if node.is_leaf:
                return
            assert node.left.count >= 1 and node.right.count >= 1
            assert node.left.count + node.right.count == node.count
            check(node.left)
            check(node.right)

        for tree in forest.trees:
            check(tree.root)

    def test_height_limit_respected(self):
        data = np.random.default_rng(13).standard_normal((256, 2))
        forest = fit_forest(data, tree_count=10, subsample_size=256, seed=4)

        def depth(node):
            if node.is_leaf:
                return 0
            return 1 + max(depth(node.left), depth(node.right))

        for tree in forest.trees:
            assert depth(tree.root) <= tree.height_limit

    def test_too_few_rows(self):
        with pytest.raises(DataError):
            fit_forest(np.ones((1, 3)))

    def test_bad_config(self):
        data = np.ones((10, 2))
        with pytest.raises(ConfigError):
            fit_forest(data, tree_count=0)
        with pytest.raises(ConfigError):
            fit_forest(data, subsample_size=1)


class TestPathLength:
    def test_single_leaf_tree(self):
        forest = fit_forest(np.ones((50, 3)), tree_count=1, subsample_size=16, seed=0)
        tree = forest.trees[0]
        assert tree.root.is_leaf
        assert path_length(tree, np.ones(3)) == c_normalizer(16)

    def test_root_with_two_singletons(self):
        data = np.array([[0.0], [10.0]])
        forest = fit_forest(data, tree_count=1, subsample_size=2, seed=1)
        tree = forest.trees[0]
        assert not tree.root.is_leaf
        for x in [np.array([-5.0]), np.array([3.0]), np.array([20.0])]:
            assert path_length(tree, x) == 1.0

    def test_outlier_has_shorter_mean_path_than_interior(self):
        # 1D two-cluster mass with one extreme point far to the right.
        rng = np.random.default_rng(17)
        data = np.concatenate([rng.normal(0, 1, 150), rng.normal(6, 1, 150), [40.0]])[:, None]
        forest = fit_forest(data, tree_count=100, subsample_size=128, seed=5)
        interior = np.array([3.0])
        outlier = np.array([40.0])
        mean_int = np.mean([path_length(t, interior) for t in forest.trees])
        mean_out = np.mean([path_length(t, outlier) for t in forest.trees])
        assert mean_out < mean_int

    def test_batch_scores_match_scalar_path(self):
        rng = np.random.default_rng(19)
        data = rng.standard_normal((300, 4))
        forest = fit_forest(data, tree_count=25, subsample_size=64, seed=6)
        rows = rng.standard_normal((20, 4))
        batch = score_batch(forest, rows)
        for i in range(20):
            mean_path = np.mean([path_length(t, rows[i]) for t in forest.trees])
            expected = 2.0 ** (-mean_path / c_normalizer(forest.subsample_size))
            assert abs(batch[i] - expected) < 1e-12


class TestScore:
    def test_mean_path_equal_to_normalizer_gives_half(self):
        # Forest whose every tree is a root with two singleton leaves has
        # E(h) = 1 = c(2) for every input, so S = 0.5 exactly.
        data = np.array([[0.0], [10.0]])
        forest = fit_forest(data, tree_count=50, subsample_size=2, seed=7)
        assert all(not t.root.is_leaf for t in forest.trees)
        assert score(forest, np.array([5.0])) == 0.5

    def test_scores_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(23)
        data = rng.standard_normal((400, 3))
        forest = fit_forest(data, tree_count=50, subsample_size=128, seed=8)
        rows = np.concatenate([data[:50], 100 * np.ones((5, 3))])
        s = score_batch(forest, rows)
        assert np.all(s > 0.0) and np.all(s < 1.0)

    def test_monotone_in_path_length(self):
        rng = np.random.default_rng(29)
        data = rng.standard_normal((400, 2))
        forest = fit_forest(data, tree_count=60, subsample_size=128, seed=9)
        rows = rng.standard_normal((50, 2)) * np.array([1.0, 3.0])
        paths = np.zeros(50)
        for t in forest.trees:
            paths += [path_length(t, r) for r in rows]
        paths /= 60
        scores = score_batch(forest, rows)
        order = np.argsort(paths)
        sorted_scores = scores[order]
        assert all(b <= a + 1e-15 for a, b in zip(sorted_scores, sorted_scores[1:]))

    def test_blob_centroid_scores_below_planted_outlier(self):
        rng = np.random.default_rng(31)
        blob = rng.multivariate_normal([0, 0], [[1, 0.3], [0.3, 1]], size=200)
        forest = fit_forest(blob, tree_count=100, subsample_size=128, seed=10)
        assert score(forest, np.array([8.0, -8.0])) > score(forest, np.array([0.0, 0.0]))

    def test_unfitted_forest_rejected(self):
        with pytest.raises(DataError):
            score(IsolationForest(), np.zeros(2))

    def test_dimension_mismatch_rejected(self):
        forest = fit_forest(np.random.default_rng(1).standard_normal((50, 3)), tree_count=5)
        with pytest.raises(DataError):
            score_batch(forest, np.zeros((4, 2)))


class TestPartition:
    def make_forest_and_rows(self):
        rng = np.random.default_rng(37)
        rows = rng.standard_normal((100, 2))
        forest = fit_forest(rows, tree_count=50, subsample_size=64, seed=11)
        return forest, rows

    def test_contamination_ceiling(self):
        forest, rows = self.make_forest_and_rows()
        inliers, outliers = partition_outliers(forest, rows, contamination=0.05)
        assert len(outliers) == 5
        assert len(inliers) == 95
        assert set(inliers.tolist()).isdisjoint(outliers.tolist())
        assert sorted([*inliers.tolist(), *outliers.tolist()]) == list(range(100))

    def test_ceiling_rounds_up(self):
        forest, rows = self.make_forest_and_rows()
        _, outliers = partition_outliers(forest, rows[:30], contamination=0.05)
        assert len(outliers) == 2  # ceil(1.5)

    def test_threshold_one_flags_nothing(self):
        forest, rows = self.make_forest_and_rows()
        inliers, outliers = partition_outliers(forest, rows, score_threshold=1.0)
        assert len(outliers) == 0
        assert len(inliers) == 100

    def test_threshold_mode_matches_scores(self):
        forest, rows = self.make_forest_and_rows()
        scores = score_batch(forest, rows)
        t = float(np.median(scores))
        inliers, outliers = partition_outliers(forest, rows, score_threshold=t)
        assert np.all(scores[outliers] > t)
        assert np.all(scores[inliers] <= t)

    def test_empty_input_two_empty_sets(self):
        forest, _ = self.make_forest_and_rows()
        inliers, outliers = partition_outliers(forest, np.empty((0, 2)), contamination=0.1)
        assert inliers.size == 0 and outliers.size == 0

    def test_requires_exactly_one_mode(self):
        forest, rows = self.make_forest_and_rows()
        with pytest.raises(ConfigError):
            partition_outliers(forest, rows)
        with pytest.raises(ConfigError):
            partition_outliers(forest, rows, contamination=0.1, score_threshold=0.5)

    def test_planted_shift_recovered(self):
        rng = np.random.default_rng(41)
        base = rng.multivariate_normal([0, 0], [[1, 0.2], [0.2, 1]], size=190)
        planted = rng.multivariate_normal([7, 7], 0.05 * np.eye(2), size=10)
        rows = np.concatenate([base, planted])
        forest = fit_forest(rows, tree_count=100, subsample_size=128, seed=12)
        _, outliers = partition_outliers(forest, rows, contamination=0.05)
        hit = len(set(outliers.tolist()) & set(range(190, 200)))
        assert hit >= 8


class TestSerialization:
    def test_round_trip_scores_identically(self):
        rng = np.random.default_rng(43)
        data = rng.standard_normal((200, 3))
        forest = fit_forest(data, tree_count=20, subsample_size=64, seed=13)
        restored = forest_from_document(forest_to_document(forest))
        rows = rng.standard_normal((30, 3))
        np.testing.assert_array_equal(score_batch(forest, rows), score_batch(restored, rows))

    def test_rejects_unknown_format(self):
        with pytest.raises(ConfigError):
            forest_from_document({"format": "bogus"})
