"""Isolation forest scoring and pool outlier filtering."""

import math

import numpy as np
import pytest

from prefdiv.corpus import ResponseRecord
from prefdiv.forest import (
    ForestConfig,
    anomaly_score,
    build_forest,
    expected_path_norm,
    filter_pool,
    score_from_mean_path,
)


def harmonic_oracle(n):
    return math.fsum(1.0 / i for i in range(1, n + 1))


def path_norm_oracle(n):
    return 2.0 * harmonic_oracle(n - 1) - 2.0 * (n - 1) / n


def planted_cluster(n_inliers=50, dim=8, rng_seed=0):
    """A tight cluster plus one far-away point appended last."""
    rng = np.random.default_rng(rng_seed)
    inliers = rng.normal(0.0, 0.1, size=(n_inliers, dim))
    outlier = np.full((1, dim), 5.0)
    return np.vstack([inliers, outlier])


def pool_from_matrix(x):
    return [
        (
            ResponseRecord(
                question_id="q1",
                iteration=1,
                sample_index=i,
                text=f"r{i}",
                correct=True,
            ),
            x[i],
        )
        for i in range(x.shape[0])
    ]


class TestExpectedPathNorm:
    def test_two_points(self):
        assert expected_path_norm(2) == pytest.approx(1.0, abs=1e-12)

    def test_three_points(self):
        assert expected_path_norm(3) == pytest.approx(5.0 / 3.0, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 16, 256, 4096])
    def test_matches_exact_harmonic_oracle(self, n):
        assert expected_path_norm(n) == pytest.approx(path_norm_oracle(n), abs=1e-12)

    @pytest.mark.parametrize("n", [256, 10000])
    def test_log_gamma_approximation_agrees_at_scale(self, n):
        approx = 2.0 * (math.log(n - 1) + 0.5772156649015329) - 2.0 * (n - 1) / n
        assert expected_path_norm(n) == pytest.approx(approx, abs=0.01)

    def test_continuous_across_the_exact_summation_limit(self):
        below = expected_path_norm(10**6)
        above = expected_path_norm(10**6 + 1)
        assert abs(above - below) < 1e-4

    @pytest.mark.parametrize("n", [0, 1])
    def test_needs_at_least_two_points(self, n):
        with pytest.raises(ValueError):
            expected_path_norm(n)


class TestScoreFromMeanPath:
    def test_average_path_scores_one_half(self):
        for psi in (16, 256):
            assert score_from_mean_path(expected_path_norm(psi), psi) == pytest.approx(0.5)

    def test_short_paths_score_high(self):
        assert score_from_mean_path(0.0, 256) == pytest.approx(1.0)
        assert score_from_mean_path(1.0, 256) > 0.9

    def test_long_paths_score_low(self):
        assert score_from_mean_path(50.0, 256) < 0.1


class TestBuildForest:
    def test_deterministic_given_seed(self):
        x = planted_cluster()
        config = ForestConfig(n_trees=20, subsample=32, seed=9)
        a = build_forest(x, config)
        b = build_forest(x, config)
        for field in ("features", "thresholds", "left", "right", "sizes", "roots"):
            assert np.array_equal(getattr(a, field), getattr(b, field))

    def test_subsample_capped_at_pool_size(self):
        x = planted_cluster(n_inliers=19)
        forest = build_forest(x, ForestConfig(n_trees=5, subsample=256, seed=0))
        assert forest.psi == 20

    def test_tree_depth_respects_height_limit(self):
        x = planted_cluster(n_inliers=63)
        config = ForestConfig(n_trees=30, subsample=64, seed=3)
        forest = build_forest(x, config)
        limit = math.ceil(math.log2(forest.psi))
        for root in forest.roots:
            stack = [(int(root), 0)]
            while stack:
                node, depth = stack.pop()
                if forest.features[node] < 0:
                    assert depth <= limit
                else:
                    assert depth < limit
                    stack.append((int(forest.left[node]), depth + 1))
                    stack.append((int(forest.right[node]), depth + 1))

    def test_leaf_sizes_partition_each_subsample(self):
        x = planted_cluster(n_inliers=40)
        config = ForestConfig(n_trees=10, subsample=32, seed=1)
        forest = build_forest(x, config)
        boundaries = list(forest.roots) + [len(forest.features)]
        for t in range(len(forest.roots)):
            seg = slice(boundaries[t], boundaries[t + 1])
            leaf_total = int(forest.sizes[seg][forest.features[seg] < 0].sum())
            assert leaf_total == forest.psi

    def test_single_point_pools_are_rejected(self):
        with pytest.raises(ValueError):
            build_forest(np.ones((1, 4)), ForestConfig(n_trees=2, subsample=8, seed=0))

    def test_planted_outlier_scores_strictly_highest(self):
        x = planted_cluster()
        nn = np.array(
            [
                min(np.linalg.norm(x[i] - x[j]) for j in range(len(x)) if j != i)
                for i in range(len(x))
            ]
        )
        assert nn[-1] > 5 * nn[:-1].max()
        forest = build_forest(x, ForestConfig(seed=42))
        scores = forest.scores(x)
        assert scores.shape == (51,)
        assert np.all((scores > 0.0) & (scores < 1.0))
        assert scores[-1] > scores[:-1].max()

    def test_duplicate_points_share_a_score(self):
        x = planted_cluster(n_inliers=30)
        x[3] = x[7]
        forest = build_forest(x, ForestConfig(n_trees=25, subsample=16, seed=5))
        scores = forest.scores(x)
        assert scores[3] == scores[7]

    def test_single_point_scoring_matches_batch(self):
        x = planted_cluster(n_inliers=20)
        forest = build_forest(x, ForestConfig(n_trees=10, subsample=16, seed=2))
        batch = forest.scores(x)
        assert anomaly_score(x[4], forest) == pytest.approx(batch[4], abs=1e-12)

    def test_dimension_mismatch_is_an_error(self):
        forest = build_forest(planted_cluster(), ForestConfig(n_trees=5, seed=0))
        with pytest.raises(ValueError, match="dimension"):
            forest.scores(np.ones((3, 2)))


class TestForestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_trees": 0},
            {"subsample": 1},
            {"contamination": -0.1},
            {"contamination": 1.5},
        ],
    )
    def test_invalid_hyperparameters(self, kwargs):
        with pytest.raises(ValueError):
            ForestConfig(**kwargs)

    def test_defaults(self):
        config = ForestConfig()
        assert config.n_trees == 100
        assert config.subsample == 256
        assert config.contamination == 0.05


class TestFilterPool:
    def test_removes_exactly_the_planted_outlier(self):
        pool = pool_from_matrix(planted_cluster())
        kept, removed = filter_pool(pool, ForestConfig(contamination=0.02, seed=42))
        assert len(removed) == 1
        assert removed[0][0].sample_index == 50
        assert len(kept) == 50

    def test_removal_count_uses_the_floor(self):
        pool = pool_from_matrix(planted_cluster(n_inliers=48))
        kept, removed = filter_pool(pool, ForestConfig(contamination=0.02, seed=0))
        assert removed == []
        assert len(kept) == 49

    def test_five_percent_of_one_hundred(self):
        pool = pool_from_matrix(planted_cluster(n_inliers=99))
        kept, removed = filter_pool(pool, ForestConfig(contamination=0.05, seed=0))
        assert len(removed) == 5
        assert len(kept) == 95

    def test_zero_contamination_removes_nothing(self):
        pool = pool_from_matrix(planted_cluster())
        kept, removed = filter_pool(pool, ForestConfig(contamination=0.0, seed=0))
        assert removed == []
        assert len(kept) == len(pool)

    def test_small_pools_pass_through_unfiltered(self):
        pool = pool_from_matrix(planted_cluster(n_inliers=3))
        kept, removed = filter_pool(pool, ForestConfig(contamination=0.45, seed=0))
        assert len(kept) == 4
        assert removed == []

    def test_empty_pool(self):
        assert filter_pool([], ForestConfig()) == ([], [])

    def test_partition_is_exact_and_disjoint(self):
        pool = pool_from_matrix(planted_cluster(n_inliers=29))
        kept, removed = filter_pool(pool, ForestConfig(contamination=0.2, seed=3))
        assert len(kept) + len(removed) == len(pool)
        kept_ids = {rec.sample_index for rec, _ in kept}
        removed_ids = {rec.sample_index for rec, _ in removed}
        assert not kept_ids & removed_ids
        assert kept_ids | removed_ids == {rec.sample_index for rec, _ in pool}

    def test_input_order_does_not_matter(self):
        pool = pool_from_matrix(planted_cluster(n_inliers=29))
        config = ForestConfig(contamination=0.2, seed=3)
        kept_a, removed_a = filter_pool(pool, config)
        kept_b, removed_b = filter_pool(pool[::-1], config)
        assert [rec.key for rec, _ in kept_a] == [rec.key for rec, _ in kept_b]
        assert [rec.key for rec, _ in removed_a] == [rec.key for rec, _ in removed_b]

    def test_removed_scores_dominate_kept_scores(self):
        x = planted_cluster(n_inliers=29)
        pool = pool_from_matrix(x)
        config = ForestConfig(contamination=0.2, seed=3)
        kept, removed = filter_pool(pool, config)
        forest = build_forest(x, config)
        scores = forest.scores(x)
        worst_kept = max(scores[rec.sample_index] for rec, _ in kept)
        best_removed = min(scores[rec.sample_index] for rec, _ in removed)
        assert best_removed >= worst_kept - 1e-12
