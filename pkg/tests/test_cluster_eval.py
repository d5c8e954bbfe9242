import itertools

import numpy as np
import pytest
from sklearn import metrics as skmetrics

from maxvne.cluster_eval import (
    ClusterLabels,
    DegenerateAffinity,
    LengthMismatch,
    MetricReport,
    acc,
    ari,
    evaluate,
    nmi,
    spectral_cluster,
)
from maxvne.kernels import KernelMatrix


def block_kernel(sizes, off=0.0):
    n = sum(sizes)
    k = np.full((n, n), off)
    start = 0
    for s in sizes:
        k[start:start + s, start:start + s] = 1.0
        start += s
    return KernelMatrix(k), np.repeat(np.arange(len(sizes)), sizes)


def labels(*vals):
    return ClusterLabels(np.array(vals, dtype=int))


class TestClusterLabels:
    def test_infers_cluster_count(self):
        assert labels(0, 1, 2, 1).c == 3

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            labels(0, -1)

    def test_rejects_labels_outside_c(self):
        with pytest.raises(ValueError):
            ClusterLabels([0, 3], c=2)


class TestSpectralCluster:
    def test_recovers_perfect_blocks(self):
        k, truth = block_kernel([10, 10, 10])
        pred = spectral_cluster(k, 3, seed=0)
        assert acc(pred, ClusterLabels(truth)) == 1.0

    @pytest.mark.parametrize("blocks", [2, 3, 4, 5])
    def test_block_counts(self, blocks):
        k, truth = block_kernel([8] * blocks)
        pred = spectral_cluster(k, blocks, seed=1)
        assert acc(pred, ClusterLabels(truth)) == 1.0

    def test_single_cluster(self):
        k, _ = block_kernel([4, 4])
        pred = spectral_cluster(k, 1, seed=0)
        assert np.all(pred.labels == 0)

    def test_each_point_its_own_cluster(self):
        rng = np.random.default_rng(2)
        g = rng.normal(size=(6, 6))
        k = KernelMatrix(g @ g.T + 6 * np.eye(6))
        pred = spectral_cluster(k, 6, seed=3)
        assert sorted(pred.labels.tolist()) == list(range(6))

    def test_noisy_blocks_still_recovered(self):
        rng = np.random.default_rng(4)
        k, truth = block_kernel([12, 12], off=0.1)
        noisy = k.mat + 0.05 * rng.normal(size=k.mat.shape)
        pred = spectral_cluster(KernelMatrix(noisy), 2, seed=5)
        assert acc(pred, ClusterLabels(truth)) == 1.0

    def test_deterministic_per_seed(self):
        k, _ = block_kernel([6, 6, 6], off=0.3)
        a = spectral_cluster(k, 3, seed=9)
        b = spectral_cluster(k, 3, seed=9)
        assert np.array_equal(a.labels, b.labels)

    def test_degenerate_affinity(self):
        k = KernelMatrix(np.zeros((3, 3)))
        with pytest.raises(DegenerateAffinity):
            spectral_cluster(k, 2, seed=0)

    def test_negative_entries_clipped(self):
        k, truth = block_kernel([8, 8], off=-0.4)
        pred = spectral_cluster(k, 2, seed=0)
        assert acc(pred, ClusterLabels(truth)) == 1.0


class TestNmi:
    def test_identical_partitions(self):
        a = labels(0, 0, 1, 1, 2, 2)
        assert nmi(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_independent_labels_near_zero(self):
        rng = np.random.default_rng(5)
        a = ClusterLabels(rng.integers(0, 4, size=4000))
        b = ClusterLabels(rng.integers(0, 4, size=4000))
        assert nmi(a, b) <= 0.01

    def test_uniform_contingency_is_zero(self):
        assert nmi(labels(0, 0, 1, 1), labels(0, 1, 0, 1)) == pytest.approx(0.0, abs=1e-12)

    def test_both_trivial_convention(self):
        assert nmi(labels(0, 0, 0), labels(0, 0, 0)) == 1.0

    def test_one_trivial_is_zero(self):
        assert nmi(labels(0, 0, 0), labels(0, 1, 2)) == 0.0

    def test_matches_sklearn_geometric(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.integers(5, 40))
            a = rng.integers(0, int(rng.integers(2, 5)), size=n)
            b = rng.integers(0, int(rng.integers(2, 5)), size=n)
            ours = nmi(ClusterLabels(a), ClusterLabels(b))
            ref = skmetrics.normalized_mutual_info_score(
                a, b, average_method="geometric")
            assert ours == pytest.approx(ref, abs=1e-10)


class TestAri:
    def test_identical_partitions(self):
        a = labels(0, 1, 1, 2)
        assert ari(a, a) == 1.0

    def test_hand_derived_fixture(self):
        # contingency of (0,0,1,1) vs (0,1,0,1) is all ones:
        # index 0, expected 2/3, max 2 -> ARI = -(2/3) / (4/3) = -1/2
        assert ari(labels(0, 0, 1, 1), labels(0, 1, 0, 1)) == pytest.approx(-0.5, abs=1e-12)

    def test_single_cluster_degenerate(self):
        assert ari(labels(0, 0, 0), labels(0, 0, 0)) == 1.0

    def test_matches_sklearn(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(5, 40))
            a = rng.integers(0, int(rng.integers(2, 5)), size=n)
            b = rng.integers(0, int(rng.integers(2, 5)), size=n)
            ours = ari(ClusterLabels(a), ClusterLabels(b))
            assert ours == pytest.approx(skmetrics.adjusted_rand_score(a, b), abs=1e-10)

    def test_never_exceeds_one(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            n = int(rng.integers(4, 30))
            a = ClusterLabels(rng.integers(0, 3, size=n))
            b = ClusterLabels(rng.integers(0, 3, size=n))
            assert ari(a, b) <= 1.0 + 1e-12


class TestAcc:
    def test_identical_partitions(self):
        a = labels(0, 1, 2, 0)
        assert acc(a, a) == 1.0

    def test_permutation_invariance(self):
        truth = labels(0, 0, 1, 1, 2, 2)
        permuted = labels(2, 2, 0, 0, 1, 1)
        assert acc(permuted, truth) == 1.0

    def test_partial_match(self):
        assert acc(labels(0, 1, 1, 1), labels(0, 0, 1, 1)) == 0.75

    def test_hungarian_equals_brute_force(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            c = int(rng.integers(2, 7))
            n = int(rng.integers(c, 40))
            a = rng.integers(0, c, size=n)
            b = rng.integers(0, c, size=n)
            ours = acc(ClusterLabels(a, c=c), ClusterLabels(b, c=c))
            confusion = np.zeros((c, c), dtype=int)
            np.add.at(confusion, (a, b), 1)
            brute = max(sum(confusion[i, p[i]] for i in range(c))
                        for p in itertools.permutations(range(c))) / n
            assert ours == pytest.approx(brute, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            acc(labels(0, 1), labels(0, 1, 0))


class TestInvariances:
    def test_relabeling_invariance(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            n = int(rng.integers(4, 25))
            c = int(rng.integers(2, 5))
            a = rng.integers(0, c, size=n)
            b = rng.integers(0, c, size=n)
            perm = rng.permutation(c)
            a2 = perm[a]
            la, lb = ClusterLabels(a, c=c), ClusterLabels(b, c=c)
            la2 = ClusterLabels(a2, c=c)
            assert nmi(la2, lb) == pytest.approx(nmi(la, lb), abs=1e-12)
            assert ari(la2, lb) == pytest.approx(ari(la, lb), abs=1e-12)
            assert acc(la2, lb) == pytest.approx(acc(la, lb), abs=1e-12)

    def test_metric_report_ranges(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(4, 25))
            a = ClusterLabels(rng.integers(0, 3, size=n))
            b = ClusterLabels(rng.integers(0, 3, size=n))
            rep = evaluate(a, b)
            assert 0.0 <= rep.nmi <= 1.0
            assert -1.0 <= rep.ari <= 1.0
            assert 0.0 <= rep.acc <= 1.0

    def test_report_validates_ranges(self):
        with pytest.raises(ValueError):
            MetricReport(nmi=1.5, ari=0.0, acc=0.5)
