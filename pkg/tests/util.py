"""Shared helpers for the test suite."""

import math

import numpy as np

from maxvne.kernels import EmbeddingMatrix


def entropy_of_matrix(x: np.ndarray) -> float:
    """Spectral entropy -sum(lam*log(lam)) of a PSD matrix, independent of
    the library's DensityMatrix plumbing (finite-difference oracle helper)."""
    lam = np.linalg.eigvalsh(x)
    lam = lam[lam > 0.0]
    return float(-np.sum(lam * np.log(lam)))


def blob_embeddings(n_per: int, d: int, gamma: float, sigma: float, seed: int,
                    n_clusters: int = 3) -> EmbeddingMatrix:
    """Gaussian blobs around unit centers with pairwise inner product gamma.

    Coordinates get sigma/sqrt(d) noise so the cosine-similarity contrast is
    controlled by (gamma, sigma) alone.
    """
    rng = np.random.default_rng(seed)
    basis = np.linalg.qr(rng.normal(size=(d, n_clusters + 1)))[0].T
    shared, axes = basis[0], basis[1:]
    centers = [math.sqrt(gamma) * shared + math.sqrt(1.0 - gamma) * e for e in axes]
    rows, labels = [], []
    for idx, center in enumerate(centers):
        rows.append(center + sigma * rng.normal(size=(n_per, d)) / math.sqrt(d))
        labels += [idx] * n_per
    return EmbeddingMatrix(np.vstack(rows), labels)


def zero_imputed_kernel(mask, n: int) -> np.ndarray:
    """Dense matrix with observed entries filled in and zeros elsewhere."""
    k = np.zeros((n, n))
    k[mask.pairs[:, 0], mask.pairs[:, 1]] = mask.values
    k[mask.pairs[:, 1], mask.pairs[:, 0]] = mask.values
    return k
