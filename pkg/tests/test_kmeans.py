import itertools

import numpy as np
import pytest

from puresearch.errors import InvalidInput, InvalidK
from puresearch.kmeans import ClusterModel, assign, default_k, fit, standardize


def brute_force_optimum(points: np.ndarray, k: int) -> tuple[float, set]:
    """Exhaustive search over all assignments; returns (inertia, partition)."""
    n = len(points)
    best = (np.inf, None)
    for labels in itertools.product(range(k), repeat=n):
        inertia = 0.0
        for j in range(k):
            members = points[[i for i in range(n) if labels[i] == j]]
            if len(members):
                centroid = members.mean(axis=0)
                inertia += ((members - centroid) ** 2).sum()
        if inertia < best[0]:
            best = (inertia, labels)
    partition = frozenset(
        frozenset(i for i in range(n) if best[1][i] == j)
        for j in range(k)
        if any(best[1][i] == j for i in range(n))
    )
    return best[0], partition


def partition_of(model: ClusterModel) -> frozenset:
    return frozenset(
        frozenset(np.nonzero(model.assignment == j)[0].tolist())
        for j in range(model.k)
        if (model.assignment == j).any()
    )


def separated_instance(seed: int) -> tuple[np.ndarray, int]:
    """n <= 8, d <= 2, k <= 3 blobs with separation >= 10x intra-blob spread."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 4))
    d = int(rng.integers(1, 3))
    spread = 0.3
    centers = rng.permutation(np.arange(k))[:, None] * 10.0 * np.ones(d)
    counts = [1] * k
    while sum(counts) < int(rng.integers(max(4, k), 9)):
        counts[int(rng.integers(k))] += 1
    points = np.vstack([
        centers[j] + rng.uniform(-spread, spread, size=(counts[j], d))
        for j in range(k)
    ])
    return points, k


class TestFit:
    def test_k_equals_n(self, rng):
        points = rng.normal(size=(5, 2))
        model = fit(points, k=5, seed=0)
        assert model.inertia == pytest.approx(0.0, abs=1e-12)
        assert len(set(model.assignment.tolist())) == 5

    def test_k_one_mean(self, rng):
        points = rng.normal(size=(7, 3))
        model = fit(points, k=1, seed=0)
        assert np.allclose(model.centroids[0], points.mean(axis=0))
        expected = ((points - points.mean(axis=0)) ** 2).sum()
        assert model.inertia == pytest.approx(expected, rel=1e-12)

    def test_two_blob_partition_matches_brute_force(self):
        points = np.array([
            [0.0, 0.0], [0.1, 0.0], [0.0, 0.1],
            [10.0, 10.0], [10.1, 10.0], [10.0, 10.1],
        ])
        model = fit(points, k=2, seed=3)
        optimal_inertia, optimal_partition = brute_force_optimum(points, 2)
        assert partition_of(model) == optimal_partition
        assert model.inertia == pytest.approx(optimal_inertia, abs=1e-9)

    @pytest.mark.parametrize("seed", range(20))
    def test_recovers_optimum_on_separated_instances(self, seed):
        points, k = separated_instance(seed)
        model = fit(points, k=k, seed=seed)
        optimal_inertia, optimal_partition = brute_force_optimum(points, k)
        assert model.inertia == pytest.approx(optimal_inertia, abs=1e-9)
        assert partition_of(model) == optimal_partition

    def test_invalid_k(self, rng):
        points = rng.normal(size=(4, 2))
        with pytest.raises(InvalidK):
            fit(points, k=5, seed=0)
        with pytest.raises(InvalidK):
            fit(points, k=0, seed=0)

    def test_non_finite_points(self):
        with pytest.raises(InvalidInput):
            fit(np.array([[0.0, np.nan]]), k=1, seed=0)

    def test_bit_reproducible(self, rng):
        points = rng.normal(size=(30, 4))
        a = fit(points, k=4, seed=9)
        b = fit(points, k=4, seed=9)
        assert (a.centroids == b.centroids).all()
        assert (a.assignment == b.assignment).all()
        assert a.inertia == b.inertia

    def test_permutation_invariant(self, rng):
        points = rng.normal(size=(20, 3))
        perm = rng.permutation(20)
        a = fit(points, k=3, seed=5)
        b = fit(points[perm], k=3, seed=5)
        assert a.inertia == b.inertia  # exact: same summation order internally
        remapped = frozenset(
            frozenset(int(perm[i]) for i in group) for group in partition_of(b)
        )
        assert partition_of(a) == remapped

    def test_inertia_history_non_increasing(self, rng):
        for seed in range(5):
            points = np.random.default_rng(seed).normal(size=(40, 3))
            model = fit(points, k=5, seed=seed)
            history = np.array(model.inertia_history)
            assert (np.diff(history) <= 1e-9).all()

    def test_duplicate_points_ok(self):
        points = np.zeros((6, 2))
        model = fit(points, k=2, seed=0)
        assert model.inertia == 0.0


class TestAssign:
    def make_model(self):
        points = np.array([[0.0, 0.0], [4.0, 0.0], [8.0, 0.0]])
        return fit(points, k=3, seed=1)

    def test_exact_centroid(self):
        model = self.make_model()
        idx = assign(model, model.centroids[2])
        assert idx == 2

    def test_tie_goes_to_lowest_index(self):
        centroids = np.array([[0.0], [2.0]])
        model = ClusterModel(centroids=centroids, assignment=np.array([0, 1]),
                             inertia=0.0, iterations_run=1, seed=0)
        assert assign(model, np.array([1.0])) == 0

    def test_far_point(self):
        model = self.make_model()
        far_cluster = assign(model, np.array([100.0, 0.0]))
        assert far_cluster == int(np.argmax(model.centroids[:, 0]))

    def test_dimension_mismatch(self):
        model = self.make_model()
        with pytest.raises(InvalidInput):
            assign(model, np.array([1.0, 2.0, 3.0]))


class TestStandardize:
    def test_two_point_dimension(self):
        out, stats = standardize(np.array([[0.0], [2.0]]))
        assert out[:, 0] == pytest.approx([-0.7071067811865475, 0.7071067811865475])
        assert stats.std[0] == pytest.approx(np.sqrt(2.0))

    def test_constant_dimension_passthrough(self):
        points = np.array([[3.0, 1.0], [3.0, 2.0], [3.0, 3.0]])
        out, stats = standardize(points)
        assert (out[:, 0] == 3.0).all()
        assert stats.std[0] == 1.0 and stats.mean[0] == 0.0

    def test_idempotent(self, rng):
        points = rng.normal(size=(5, 3)) * 10 + 4
        once, _ = standardize(points)
        twice, _ = standardize(once)
        assert np.abs(twice - once).max() < 1e-9

    def test_output_moments(self, rng):
        out, _ = standardize(rng.normal(size=(50, 4)))
        assert np.abs(out.mean(axis=0)).max() < 1e-9
        assert np.abs(out.std(axis=0, ddof=1) - 1).max() < 1e-9

    def test_transform_matches(self, rng):
        points = rng.normal(size=(10, 2))
        out, stats = standardize(points)
        assert np.allclose(stats.transform(points), out)

    def test_too_few_points(self):
        with pytest.raises(InvalidInput):
            standardize(np.array([[1.0, 2.0]]))


class TestDefaultK:
    def test_heuristic(self):
        assert default_k(200) == 10
        assert default_k(2) == 2
        assert default_k(1) == 1

    def test_never_exceeds_n(self):
        for n in range(1, 30):
            assert 1 <= default_k(n) <= n
