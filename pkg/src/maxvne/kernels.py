"""Kernel matrices from embeddings, kernel-induced density matrices, and
RBF bandwidth calibration to a target von Neumann entropy."""

from __future__ import annotations

import math

import numpy as np

from .spectral import DensityMatrix, SymMatrix, vne

# Dense-only storage: eigendecomposition is O(n^3), so refuse matrices
# beyond this size instead of silently crawling. Module-level and mutable on
# purpose for callers that know what they are doing.
DENSE_SIZE_LIMIT = 5000

KERNEL_KINDS = ("linear", "rbf", "cosine", "precomputed")


class ZeroRow(ValueError):
    """Cosine kernel is undefined for an all-zero embedding row."""


class BadBandwidth(ValueError):
    """RBF bandwidth must be strictly positive."""


class ZeroDiagonal(ValueError):
    """Kernel normalization needs strictly positive diagonal entries."""


class ZeroTrace(ValueError):
    """Kernel trace must be positive to induce a density matrix."""


class NotNormalized(ValueError):
    """Operation requires L2-normalized embedding rows."""


class BracketFailure(RuntimeError):
    """Bandwidth bisection bracket does not enclose the target entropy."""


class EmbeddingMatrix:
    """n x d real embedding rows with optional integer cluster labels."""

    __slots__ = ("rows", "labels")

    def __init__(self, rows, labels=None):
        rows = np.array(rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError(f"rows must be 2-D, got shape {rows.shape}")
        n, d = rows.shape
        if n < 2 or d < 1:
            raise ValueError(f"need n >= 2 samples and d >= 1 features, got {n}x{d}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("embedding entries must be finite")
        rows.flags.writeable = False
        self.rows = rows
        if labels is not None:
            labels = np.array(labels, dtype=int)
            if labels.shape != (n,):
                raise ValueError(f"labels must have shape ({n},), got {labels.shape}")
            labels.flags.writeable = False
        self.labels = labels

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def __repr__(self) -> str:
        lab = "with labels" if self.labels is not None else "no labels"
        return f"EmbeddingMatrix(n={self.n}, d={self.d}, {lab})"


class KernelMatrix:
    """Dense kernel (Gram) matrix with kind metadata.

    ``normalized`` means unit diagonal, checked within 1e-10 together with
    |K_ij| <= 1 + 1e-10.
    """

    __slots__ = ("sym", "kind", "bandwidth", "normalized")

    def __init__(self, mat, kind: str = "precomputed", bandwidth: float | None = None,
                 normalized: bool = False):
        sym = mat if isinstance(mat, SymMatrix) else SymMatrix(mat)
        if sym.n > DENSE_SIZE_LIMIT:
            raise ValueError(
                f"kernel of size {sym.n} exceeds DENSE_SIZE_LIMIT={DENSE_SIZE_LIMIT}; "
                "raise maxvne.kernels.DENSE_SIZE_LIMIT explicitly if intended"
            )
        if kind not in KERNEL_KINDS:
            raise ValueError(f"kind must be one of {KERNEL_KINDS}, got {kind!r}")
        if kind == "rbf":
            if bandwidth is None or not bandwidth > 0.0:
                raise BadBandwidth(f"rbf kernel needs bandwidth > 0, got {bandwidth!r}")
        else:
            bandwidth = None
        if normalized:
            diag = np.diagonal(sym.mat)
            if np.max(np.abs(diag - 1.0)) > 1e-10:
                raise ValueError("normalized kernel must have unit diagonal")
            if np.max(np.abs(sym.mat)) > 1.0 + 1e-10:
                raise ValueError("normalized kernel entries must satisfy |K_ij| <= 1")
        self.sym = sym
        self.kind = kind
        self.bandwidth = bandwidth
        self.normalized = bool(normalized)

    @property
    def mat(self) -> np.ndarray:
        return self.sym.mat

    @property
    def n(self) -> int:
        return self.sym.n

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.mat)[0])

    def __repr__(self) -> str:
        return f"KernelMatrix(n={self.n}, kind={self.kind!r}, normalized={self.normalized})"


class KernelBundle:
    """Ordered list of M normalized kernels over the same n samples."""

    __slots__ = ("kernels", "names")

    def __init__(self, kernels, names=None):
        kernels = list(kernels)
        if len(kernels) < 1:
            raise ValueError("bundle needs at least one kernel")
        n = kernels[0].n
        for k in kernels:
            if k.n != n:
                raise ValueError("all bundle kernels must share the sample count")
            if not k.normalized:
                raise ValueError("all bundle kernels must be normalized (unit diagonal)")
        if names is None:
            names = [f"k{i}" for i in range(len(kernels))]
        names = [str(s) for s in names]
        if len(names) != len(kernels):
            raise ValueError("names must match the number of kernels")
        self.kernels = kernels
        self.names = names

    @property
    def m(self) -> int:
        return len(self.kernels)

    @property
    def n(self) -> int:
        return self.kernels[0].n

    def __repr__(self) -> str:
        return f"KernelBundle(m={self.m}, n={self.n}, names={self.names})"


def pairwise_sq_dists(rows: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances with an exactly-zero diagonal."""
    sq = np.sum(rows * rows, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (rows @ rows.T)
    np.clip(d2, 0.0, None, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def build_kernel(emb: EmbeddingMatrix, kind: str, bandwidth: float | None = None) -> KernelMatrix:
    """Build a kernel matrix from embedding rows.

    linear: Gram matrix of the raw rows.
    rbf:    exp(-||x_i - x_j||^2 / (2 sigma^2)), unit diagonal by construction.
    cosine: Gram matrix of the L2-normalized rows, unit diagonal.
    """
    if kind == "linear":
        g = emb.rows @ emb.rows.T
        normalized = bool(np.max(np.abs(np.diagonal(g) - 1.0)) <= 1e-10)
        return KernelMatrix(g, kind="linear", normalized=normalized)
    if kind == "rbf":
        if bandwidth is None or not bandwidth > 0.0:
            raise BadBandwidth(f"rbf kernel needs bandwidth > 0, got {bandwidth!r}")
        d2 = pairwise_sq_dists(emb.rows)
        k = np.exp(-d2 / (2.0 * bandwidth * bandwidth))
        return KernelMatrix(k, kind="rbf", bandwidth=bandwidth, normalized=True)
    if kind == "cosine":
        norms = np.linalg.norm(emb.rows, axis=1)
        if np.any(norms == 0.0):
            raise ZeroRow(f"zero embedding row(s) at {np.nonzero(norms == 0.0)[0].tolist()}")
        x = emb.rows / norms[:, None]
        g = x @ x.T
        np.fill_diagonal(g, 1.0)
        return KernelMatrix(g, kind="cosine", normalized=True)
    raise ValueError(f"unknown kernel kind {kind!r}")


def normalize_kernel(k: KernelMatrix) -> KernelMatrix:
    """Rescale to unit diagonal, K_ij / sqrt(K_ii K_jj). Idempotent."""
    diag = np.diagonal(k.mat)
    if np.any(diag <= 0.0):
        raise ZeroDiagonal("normalization needs strictly positive diagonal entries")
    s = np.sqrt(diag)
    mat = k.mat / np.outer(s, s)
    np.fill_diagonal(mat, 1.0)
    return KernelMatrix(mat, kind=k.kind, bandwidth=k.bandwidth, normalized=True)


def kernel_density(k: KernelMatrix) -> DensityMatrix:
    """Kernel-induced density matrix K / Tr(K)."""
    tr = float(np.trace(k.mat))
    if tr <= 0.0:
        raise ZeroTrace(f"kernel trace must be positive, got {tr!r}")
    return DensityMatrix(k.mat / tr)


def covariance_density(emb: EmbeddingMatrix, norm_tol: float = 1e-8) -> DensityMatrix:
    """Trace-normalized uncentered covariance (1/n) Phi^T Phi as a d x d state.

    Rows must be L2-normalized; the nonzero spectrum (hence the entropy)
    matches the linear-kernel density matrix of the same rows.
    """
    norms = np.linalg.norm(emb.rows, axis=1)
    if np.max(np.abs(norms - 1.0)) > norm_tol:
        raise NotNormalized("embedding rows must be L2-normalized")
    if emb.d > DENSE_SIZE_LIMIT:
        raise ValueError(f"feature dimension {emb.d} exceeds DENSE_SIZE_LIMIT")
    c = (emb.rows.T @ emb.rows) / emb.n
    return DensityMatrix(c / np.trace(c))


def calibrate_bandwidth(emb: EmbeddingMatrix, target_vne: float, tol: float,
                        max_iters: int = 100) -> float:
    """Find an RBF bandwidth whose kernel density has the target entropy.

    Bisection on log-bandwidth over [0.01*median, 100*median] of the pairwise
    distances. The RBF kernel entropy is decreasing in the bandwidth on this
    bracket (checked at the endpoints before bisecting, not assumed).
    """
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    n = emb.n
    if not 0.0 < target_vne < math.log(n):
        raise ValueError(
            f"target_vne must lie in (0, log n) = (0, {math.log(n):.6f}), got {target_vne!r}"
        )
    d2 = pairwise_sq_dists(emb.rows)
    dists = np.sqrt(d2[np.triu_indices(n, k=1)])
    med = float(np.median(dists))
    if med <= 0.0:
        raise BracketFailure("median pairwise distance is zero; all points coincide")
    lo, hi = 0.01 * med, 100.0 * med

    def entropy_at(bw: float) -> float:
        return vne(kernel_density(build_kernel(emb, "rbf", bw)))

    v_lo = entropy_at(lo)
    v_hi = entropy_at(hi)
    if not v_lo > v_hi:
        raise BracketFailure(
            f"entropy not decreasing across the bracket: S({lo:.3g})={v_lo:.6f} "
            f"<= S({hi:.3g})={v_hi:.6f}"
        )
    if not (v_hi <= target_vne <= v_lo):
        raise BracketFailure(
            f"target {target_vne:.6f} outside bracket entropies [{v_hi:.6f}, {v_lo:.6f}]"
        )
    a, b = math.log(lo), math.log(hi)
    for _ in range(max_iters):
        mid = 0.5 * (a + b)
        bw = math.exp(mid)
        v = entropy_at(bw)
        if abs(v - target_vne) <= tol:
            return bw
        if v > target_vne:
            a = mid
        else:
            b = mid
    raise BracketFailure(
        f"bisection did not reach |vne - target| <= {tol:g} in {max_iters} iterations"
    )
