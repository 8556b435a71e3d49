"""k-means, the robustness landscape, optimum selection, state labeling."""

import numpy as np
import pytest

from marketstates.clustering import (
    best_kmeans,
    embedding_for_epsilon,
    intra_cluster_sigma,
    kmeans,
    label_states,
    landscape_scan,
    select_optimum,
    within_cluster_pairwise_mean,
    LandscapeCell,
)
from marketstates.errors import DataError
from marketstates.synth import Regime, RegimeSpec, generate_returns

from conftest import frames_from_matrices, random_frame_matrix


def make_blobs(centers, n_per, sigma, seed):
    """Synthetic generator oracle: labeled Gaussian blobs."""
    rng = np.random.default_rng(seed)
    points = []
    labels = []
    for i, center in enumerate(centers):
        points.append(rng.normal(0, sigma, size=(n_per, len(center))) + center)
        labels += [i] * n_per
    return np.vstack(points), np.array(labels)


def partitions_equal(a: np.ndarray, b: np.ndarray) -> bool:
    """Same grouping of indices regardless of cluster ids."""
    mapping = {}
    for x, y in zip(a, b):
        if x in mapping and mapping[x] != y:
            return False
        mapping[x] = y
    return len(set(mapping.values())) == len(mapping)


class TestKMeans:
    def test_k_one_is_global_mean(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(40, 3))
        res = kmeans(pts, 1, seed=0)
        assert np.allclose(res.centroids[0], pts.mean(axis=0), atol=1e-12)
        expected = np.linalg.norm(pts - pts.mean(axis=0), axis=1).mean()
        assert res.d_intra == pytest.approx(expected, abs=1e-12)

    def test_recovers_separated_blobs(self):
        centers = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]
        pts, labels = make_blobs(centers, 50, 0.01, seed=1)
        res = kmeans(pts, 3, seed=7)
        assert partitions_equal(res.assignments, labels)

    def test_k_equals_f(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(12, 3))
        res = kmeans(pts, 12, seed=0)
        assert res.inertia == 0.0
        assert res.d_intra == 0.0

    def test_k_larger_than_f(self):
        with pytest.raises(DataError):
            kmeans(np.zeros((3, 2)), 4, seed=0)
        with pytest.raises(DataError):
            kmeans(np.zeros((3, 2)), 0, seed=0)

    def test_no_empty_clusters(self):
        # a far outlier tends to trigger empty-cluster repair
        rng = np.random.default_rng(3)
        pts = np.vstack([rng.normal(size=(30, 3)), [[100.0, 100.0, 100.0]]])
        for seed in range(20):
            res = kmeans(pts, 5, seed=seed)
            assert np.all(np.bincount(res.assignments, minlength=5) > 0)

    def test_rigid_transform_invariance(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(80, 3))
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        moved = pts @ q.T + np.array([5.0, -3.0, 2.0])
        for seed in (0, 1, 2):
            a = kmeans(pts, 4, seed=seed)
            b = kmeans(moved, 4, seed=seed)
            assert partitions_equal(a.assignments, b.assignments)
            assert a.d_intra == pytest.approx(b.d_intra, abs=1e-9)

    def test_same_seed_reproducible(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(50, 3))
        a = kmeans(pts, 4, seed=11)
        b = kmeans(pts, 4, seed=11)
        assert np.array_equal(a.assignments, b.assignments)
        assert a.inertia == b.inertia


class TestIntraClusterSigma:
    def test_identical_convergence_gives_zero_sigma(self):
        centers = [(0.0, 0.0, 0.0), (100.0, 0.0, 0.0)]
        pts, _ = make_blobs(centers, 40, 0.001, seed=6)
        stats = intra_cluster_sigma(pts, 2, n_init=50, seed=0)
        assert stats.sigma_d_intra == 0.0

    def test_ambiguous_blobs_give_positive_sigma(self):
        centers = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]
        pts, _ = make_blobs(centers, 60, 0.6, seed=7)
        a = intra_cluster_sigma(pts, 3, n_init=60, seed=0)
        b = intra_cluster_sigma(pts, 3, n_init=60, seed=5000)
        assert a.sigma_d_intra > 0.0
        assert b.sigma_d_intra > 0.0

    def test_k_equals_f_gives_zero_sigma(self):
        rng = np.random.default_rng(8)
        pts = rng.normal(size=(10, 3))
        stats = intra_cluster_sigma(pts, 10, n_init=20, seed=0)
        assert stats.sigma_d_intra == 0.0
        assert stats.mean_d_intra == 0.0

    def test_needs_two_inits(self):
        with pytest.raises(DataError):
            intra_cluster_sigma(np.zeros((5, 3)), 2, n_init=1, seed=0)

    def test_population_std_oracle(self):
        rng = np.random.default_rng(9)
        pts = rng.normal(size=(30, 3))
        stats = intra_cluster_sigma(pts, 3, n_init=25, seed=17)
        values = [kmeans(pts, 3, seed=17 + i).d_intra for i in range(25)]
        mean = sum(values) / 25
        var = sum((v - mean) ** 2 for v in values) / 25
        assert stats.mean_d_intra == pytest.approx(mean, abs=1e-12)
        assert stats.sigma_d_intra == pytest.approx(var**0.5, abs=1e-12)

    def test_threads_match_serial(self):
        rng = np.random.default_rng(10)
        pts = rng.normal(size=(40, 3))
        a = intra_cluster_sigma(pts, 3, n_init=16, seed=3)
        b = intra_cluster_sigma(pts, 3, n_init=16, seed=3, n_threads=4)
        assert a == b

    def test_alternative_metric_swappable(self):
        rng = np.random.default_rng(11)
        pts = rng.normal(size=(30, 3))
        stats = intra_cluster_sigma(
            pts, 3, n_init=10, seed=0, metric=within_cluster_pairwise_mean
        )
        assert stats.mean_d_intra > 0.0


class TestLandscapeScan:
    def test_single_cell_equals_direct_call(self):
        spec = RegimeSpec(
            n_stocks=8,
            regimes=(Regime(60, 0.1), Regime(60, 0.6)),
            noise_sigma=0.02,
            seed=21,
        )
        returns = generate_returns(spec)
        cells = landscape_scan(
            returns, 20, 2, k_range=[2], epsilon_grid=[0.0], n_init=10, seed=5
        )
        assert len(cells) == 1
        _, embedding = embedding_for_epsilon(returns, 20, 2, 0.0, seed=5)
        direct = intra_cluster_sigma(embedding, 2, 10, 5)
        assert cells[0].sigma_d_intra == direct.sigma_d_intra
        assert cells[0].mean_d_intra == direct.mean_d_intra

    def test_grid_order_and_size(self):
        spec = RegimeSpec(
            n_stocks=6,
            regimes=(Regime(50, 0.1), Regime(50, 0.7)),
            noise_sigma=0.02,
            seed=22,
        )
        returns = generate_returns(spec)
        cells = landscape_scan(
            returns, 20, 5, k_range=[1, 2, 3], epsilon_grid=[0.0, 0.5], n_init=5, seed=0
        )
        assert [(c.k, c.epsilon) for c in cells] == [
            (1, 0.0),
            (2, 0.0),
            (3, 0.0),
            (1, 0.5),
            (2, 0.5),
            (3, 0.5),
        ]

    def test_planted_two_regimes_minimum_at_two(self):
        spec = RegimeSpec(
            n_stocks=12,
            regimes=(Regime(120, 0.1), Regime(120, 0.7)),
            noise_sigma=0.02,
            seed=23,
        )
        returns = generate_returns(spec)
        cells = landscape_scan(
            returns, 20, 2, k_range=[2, 3, 4, 5], epsilon_grid=[0.0, 0.5], n_init=40, seed=1
        )
        k_star, _ = select_optimum(cells, k_min=2)
        assert k_star == 2

    def test_empty_ranges_rejected(self):
        spec = RegimeSpec(
            n_stocks=4,
            regimes=(Regime(30, 0.2),),
            noise_sigma=0.02,
            seed=24,
        )
        returns = generate_returns(spec)
        with pytest.raises(DataError):
            landscape_scan(returns, 20, 1, k_range=[], epsilon_grid=[0.0], n_init=5, seed=0)


class TestSelectOptimum:
    def test_minimum_selected(self):
        cells = [
            LandscapeCell(4, 0.0, 0.5, 1.0, 10),
            LandscapeCell(5, 0.9, 0.1, 1.0, 10),
            LandscapeCell(6, 0.3, 0.2, 1.0, 10),
            LandscapeCell(3, 0.0, 0.01, 1.0, 10),  # below k_min, ignored
        ]
        assert select_optimum(cells, k_min=4) == (5, 0.9)

    def test_tie_break_smaller_k_then_epsilon(self):
        cells = [
            LandscapeCell(k, eps, 0.25, 1.0, 10)
            for eps in (0.2, 0.0, 0.1)
            for k in (6, 4, 5)
        ]
        assert select_optimum(cells, k_min=4) == (4, 0.0)

    def test_no_eligible_cells(self):
        with pytest.raises(DataError):
            select_optimum([LandscapeCell(2, 0.0, 0.1, 1.0, 10)], k_min=4)


class TestLabelStates:
    def _frames_and_result(self, seed=0):
        rng = np.random.default_rng(seed)
        # three groups of frames with distinct mean correlation levels
        mats = []
        for level in (0.6, 0.1, 0.35):
            for _ in range(4):
                m = np.full((5, 5), level) + rng.normal(0, 0.01, size=(5, 5))
                m = 0.5 * (m + m.T)
                np.clip(m, -1, 1, out=m)
                np.fill_diagonal(m, 1.0)
                mats.append(m)
        frames = frames_from_matrices(mats)
        assignments = np.repeat([0, 1, 2], 4)
        from marketstates.clustering import KMeansResult

        centroids = np.array([[2.0, 0, 0], [0.0, 0, 0], [1.0, 0, 0]])
        result = KMeansResult(
            k=3,
            assignments=assignments,
            centroids=centroids,
            inertia=1.0,
            d_intra=0.5,
            seed=0,
        )
        return frames, result

    def test_mu_sorted_and_states_relabeled(self):
        frames, result = self._frames_and_result()
        model = label_states(frames, result, epsilon_star=0.9)
        assert np.all(np.diff(model.mu) >= 0)
        # cluster 1 (level 0.1) -> S1, cluster 2 (0.35) -> S2, cluster 0 (0.6) -> S3
        assert list(model.state_of_frame) == [3] * 4 + [1] * 4 + [2] * 4
        assert model.mu[0] == pytest.approx(0.1, abs=0.02)
        assert model.mu[2] == pytest.approx(0.6, abs=0.02)
        # centroids follow the relabeling
        assert np.array_equal(model.centroids[0], [0.0, 0, 0])
        assert np.array_equal(model.centroids[2], [2.0, 0, 0])
        assert model.epsilon_star == 0.9

    def test_permuted_input_labels_give_identical_model(self):
        frames, result = self._frames_and_result()
        permuted = np.array([2, 0, 1])[result.assignments]
        from marketstates.clustering import KMeansResult

        result_b = KMeansResult(
            k=3,
            assignments=permuted,
            centroids=result.centroids[[1, 2, 0]],
            inertia=result.inertia,
            d_intra=result.d_intra,
            seed=0,
        )
        a = label_states(frames, result)
        b = label_states(frames, result_b)
        assert np.array_equal(a.state_of_frame, b.state_of_frame)
        assert np.array_equal(a.mu, b.mu)
        assert np.array_equal(a.centroids, b.centroids)

    def test_requires_raw_frames(self, rng):
        mats = [random_frame_matrix(4, rng) for _ in range(6)]
        frames = frames_from_matrices(mats, epsilon=0.9)
        res = kmeans(np.random.default_rng(0).normal(size=(6, 3)), 2, seed=0)
        with pytest.raises(DataError, match="raw"):
            label_states(frames, res)

    def test_length_mismatch(self, rng):
        mats = [random_frame_matrix(4, rng) for _ in range(6)]
        frames = frames_from_matrices(mats)
        res = kmeans(np.random.default_rng(0).normal(size=(5, 3)), 2, seed=0)
        with pytest.raises(DataError):
            label_states(frames, res)


def test_best_kmeans_picks_lowest_inertia():
    rng = np.random.default_rng(30)
    pts = rng.normal(size=(60, 3))
    best = best_kmeans(pts, 3, n_init=20, seed=100)
    inertias = [kmeans(pts, 3, seed=100 + i).inertia for i in range(20)]
    assert best.inertia == min(inertias)
    assert best.seed == 100 + int(np.argmin(inertias))
