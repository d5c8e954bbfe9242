"""Spectral clustering of kernel matrices and the NMI / ARI / ACC metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .kernels import KernelMatrix


class LengthMismatch(ValueError):
    """Label vectors must have equal length."""


class DegenerateAffinity(ValueError):
    """A row of the clipped kernel sums below the degree floor."""


class ClusterLabels:
    """n integer labels in [0, c)."""

    __slots__ = ("labels", "c")

    def __init__(self, labels, c: int | None = None):
        labels = np.array(labels, dtype=int)
        if labels.ndim != 1 or labels.size < 1:
            raise ValueError("labels must be a nonempty 1-D integer array")
        if labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        inferred = int(labels.max()) + 1
        if c is None:
            c = inferred
        elif c < inferred:
            raise ValueError(f"label {inferred - 1} outside [0, {c})")
        if not 1 <= c <= labels.size:
            raise ValueError(f"need n >= c >= 1, got n={labels.size}, c={c}")
        labels.flags.writeable = False
        self.labels = labels
        self.c = int(c)

    @property
    def n(self) -> int:
        return self.labels.size

    def __repr__(self) -> str:
        return f"ClusterLabels(n={self.n}, c={self.c})"


@dataclass(frozen=True)
class MetricReport:
    nmi: float
    ari: float
    acc: float

    def __post_init__(self):
        if not (-1e-12 <= self.nmi <= 1.0 + 1e-12):
            raise ValueError(f"nmi out of [0, 1]: {self.nmi}")
        if not (-1.0 - 1e-12 <= self.ari <= 1.0 + 1e-12):
            raise ValueError(f"ari out of [-1, 1]: {self.ari}")
        if not (-1e-12 <= self.acc <= 1.0 + 1e-12):
            raise ValueError(f"acc out of [0, 1]: {self.acc}")


def _kmeans_pp_init(x: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((c, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for k in range(1, c):
        total = d2.sum()
        if total <= 0.0:  # all remaining points coincide with a center
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[k] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[k]) ** 2, axis=1))
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iters: int):
    n, c = x.shape[0], centers.shape[0]
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iters):
        d2 = (np.sum(x * x, axis=1)[:, None] + np.sum(centers * centers, axis=1)[None, :]
              - 2.0 * x @ centers.T)
        new_labels = np.argmin(d2, axis=1)
        # keep empty clusters alive: give each the point farthest from its center
        counts = np.bincount(new_labels, minlength=c)
        for k in np.nonzero(counts == 0)[0]:
            worst = int(np.argmax(d2[np.arange(n), new_labels]))
            new_labels[worst] = k
            d2[worst, :] = np.inf
            d2[worst, k] = 0.0
        for k in range(c):
            members = x[new_labels == k]
            if members.size:
                centers[k] = members.mean(axis=0)
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    d2 = (np.sum(x * x, axis=1)[:, None] + np.sum(centers * centers, axis=1)[None, :]
          - 2.0 * x @ centers.T)
    inertia = float(np.sum(np.maximum(d2[np.arange(n), labels], 0.0)))
    return labels, inertia


def kmeans(x: np.ndarray, c: int, rng: np.random.Generator,
           restarts: int = 10, max_iters: int = 300) -> np.ndarray:
    """k-means with k-means++ seeding; the best inertia over restarts wins,
    ties broken by restart order (deterministic given the generator)."""
    best_labels, best_inertia = None, math.inf
    for _ in range(restarts):
        centers = _kmeans_pp_init(x, c, rng)
        labels, inertia = _lloyd(x, centers.copy(), max_iters)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels


def spectral_cluster(k: KernelMatrix, c: int, seed: int) -> ClusterLabels:
    """Cluster a kernel matrix: normalized affinity, top-c eigenvectors with
    L2-normalized rows, then k-means (10 restarts, 300 iterations).

    Negative kernel entries are clipped at zero before the degree
    normalization D^(-1/2) K D^(-1/2); rows whose clipped sum underflows
    1e-12 raise DegenerateAffinity.
    """
    n = k.n
    if not 1 <= c <= n:
        raise ValueError(f"need 1 <= c <= n, got c={c}, n={n}")
    a = np.maximum(k.mat, 0.0)
    deg = a.sum(axis=1)
    if np.any(deg < 1e-12):
        raise DegenerateAffinity(
            f"row sums below 1e-12 at {np.nonzero(deg < 1e-12)[0].tolist()}")
    dinv = 1.0 / np.sqrt(deg)
    a = a * dinv[:, None] * dinv[None, :]
    a = (a + a.T) / 2.0
    _, vec = np.linalg.eigh(a)
    emb = vec[:, -c:]
    norms = np.linalg.norm(emb, axis=1)
    norms[norms < 1e-12] = 1.0
    emb = emb / norms[:, None]
    rng = np.random.default_rng(seed)
    labels = kmeans(emb, c, rng)
    return ClusterLabels(labels, c=c)


def _contingency(a: ClusterLabels, b: ClusterLabels) -> np.ndarray:
    if a.n != b.n:
        raise LengthMismatch(f"label lengths differ: {a.n} vs {b.n}")
    table = np.zeros((a.c, b.c), dtype=np.int64)
    np.add.at(table, (a.labels, b.labels), 1)
    return table


def nmi(a: ClusterLabels, b: ClusterLabels) -> float:
    """Normalized mutual information I(a;b)/sqrt(H(a)H(b)), natural logs.

    Both partitions trivial (single cluster) gives 1 by convention; exactly
    one trivial gives 0.
    """
    table = _contingency(a, b)
    n = a.n
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    ha = float(-np.sum(pa[pa > 0] * np.log(pa[pa > 0])))
    hb = float(-np.sum(pb[pb > 0] * np.log(pb[pb > 0])))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    pij = table / n
    mask = pij > 0
    outer = np.outer(pa, pb)
    info = float(np.sum(pij[mask] * np.log(pij[mask] / outer[mask])))
    value = info / math.sqrt(ha * hb)
    return min(max(value, 0.0), 1.0)


def ari(a: ClusterLabels, b: ClusterLabels) -> float:
    """Adjusted Rand index from the pair-count contingency formula.

    A degenerate denominator (both partitions trivial in the same way)
    returns 1.
    """
    table = _contingency(a, b)
    n = a.n
    sum_cells = float(sum(math.comb(int(x), 2) for x in table.reshape(-1)))
    sum_a = float(sum(math.comb(int(x), 2) for x in table.sum(axis=1)))
    sum_b = float(sum(math.comb(int(x), 2) for x in table.sum(axis=0)))
    pairs = float(math.comb(n, 2))
    if pairs == 0.0:
        return 1.0
    expected = sum_a * sum_b / pairs
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def acc(a: ClusterLabels, b: ClusterLabels) -> float:
    """Clustering accuracy: best one-to-one label matching (Hungarian
    assignment on the confusion matrix), matched-correct / n."""
    if a.n != b.n:
        raise LengthMismatch(f"label lengths differ: {a.n} vs {b.n}")
    c = max(a.c, b.c)
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (a.labels, b.labels), 1)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    return float(confusion[rows, cols].sum()) / a.n


def evaluate(predicted: ClusterLabels, truth: ClusterLabels) -> MetricReport:
    """All three metrics of a predicted partition against the ground truth."""
    return MetricReport(nmi=nmi(predicted, truth), ari=ari(predicted, truth),
                        acc=acc(predicted, truth))
