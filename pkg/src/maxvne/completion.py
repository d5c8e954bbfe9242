"""Kernel matrix completion by entropy maximization over a low-rank factor.

The completed kernel is parameterized as K = s(U) U U^T with
s(U) = n / Tr(U U^T), which is PSD by construction and trace-normalized to
match the unit-diagonal scale. Observed entries enter as a quadratic penalty;
the entropy objective is either the purity Tr(rho^2) (minimized) or a
log-determinant surrogate on the r x r factor covariance (maximized).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .kernels import KernelMatrix
from .spectral import DensityMatrix

log = logging.getLogger(__name__)

OBJECTIVES = ("vne_logdet", "renyi2_purity")


class InfeasibleObservation(ValueError):
    """Observed entries violate a PSD necessary condition."""

    def __init__(self, violations):
        self.violations = violations
        super().__init__(
            f"{len(violations)} observed pair(s) violate |K_ij| <= "
            f"sqrt(K_ii K_jj): {violations[:5]}"
        )


class ZeroFactor(ValueError):
    """Factor matrix is identically zero."""


class ObservationMask:
    """Observed kernel entries: upper-triangle pairs (i <= j) with values.

    With include_diagonal (the default) every (i, i) is observed with value 1,
    the normalized-kernel convention; missing diagonal pairs are added.
    """

    __slots__ = ("n", "pairs", "values", "include_diagonal")

    def __init__(self, n: int, pairs, values, include_diagonal: bool = True):
        if n < 1:
            raise ValueError("n must be positive")
        pairs = np.array(pairs, dtype=int).reshape(-1, 2)
        values = np.array(values, dtype=float).reshape(-1)
        if pairs.shape[0] != values.shape[0]:
            raise ValueError("pairs and values must have equal length")
        if not np.all(np.isfinite(values)):
            raise ValueError("observed values must be finite")
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise ValueError("pair indices out of range")
        if pairs.size and np.any(pairs[:, 0] > pairs[:, 1]):
            raise ValueError("pairs must satisfy i <= j")
        keys = pairs[:, 0] * n + pairs[:, 1]
        if np.unique(keys).size != keys.size:
            raise ValueError("duplicate pairs in mask")
        if include_diagonal:
            have = set(pairs[pairs[:, 0] == pairs[:, 1], 0].tolist())
            diag_vals = values[pairs[:, 0] == pairs[:, 1]]
            if diag_vals.size and np.max(np.abs(diag_vals - 1.0)) > 1e-8:
                raise ValueError("diagonal observations must equal 1 (normalized kernel)")
            missing = [i for i in range(n) if i not in have]
            if missing:
                pairs = np.vstack([pairs, np.array([[i, i] for i in missing])])
                values = np.concatenate([values, np.ones(len(missing))])
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        pairs = pairs[order]
        values = values[order]
        pairs.flags.writeable = False
        values.flags.writeable = False
        self.n = n
        self.pairs = pairs
        self.values = values
        self.include_diagonal = bool(include_diagonal)

    @property
    def num_observed(self) -> int:
        return self.pairs.shape[0]

    def __repr__(self) -> str:
        return (f"ObservationMask(n={self.n}, observed={self.num_observed}, "
                f"include_diagonal={self.include_diagonal})")


@dataclass(frozen=True)
class AdamSettings:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    max_iters: int = 5000
    objective_tol: float = 1e-8  # relative change over tol_window iterations
    tol_window: int = 50

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1/beta2 must lie in [0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


class CompletionProblem:
    """Mask, factor rank, objective choice and optimizer settings."""

    __slots__ = ("mask", "rank", "objective", "penalty_weight", "optimizer", "seed")

    def __init__(self, mask: ObservationMask, rank: int = 50,
                 objective: str = "renyi2_purity", penalty_weight: float = 100.0,
                 optimizer: AdamSettings = AdamSettings(), seed: int = 0):
        if not 1 <= rank <= mask.n:
            raise ValueError(f"rank must lie in [1, {mask.n}], got {rank}")
        if objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
        if not penalty_weight > 0.0:
            raise ValueError("penalty_weight must be positive")
        self.mask = mask
        self.rank = int(rank)
        self.objective = objective
        self.penalty_weight = float(penalty_weight)
        self.optimizer = optimizer
        self.seed = int(seed)


@dataclass
class CompletionResult:
    k_hat: KernelMatrix
    rho_hat: DensityMatrix
    objective_trace: np.ndarray  # total loss per iteration
    constraint_residual: float  # max |K_hat_ij - value| over observed pairs
    converged: bool


def feasible_set_check(mask: ObservationMask, strict: bool = False):
    """Check observed values against PSD necessary conditions.

    For every observed pair (i, j) whose two diagonal entries are also
    observed, require |K_ij| <= sqrt(K_ii K_jj). Returns the list of
    violating (i, j, value) triples; with strict=True raises
    InfeasibleObservation when any exist.
    """
    diag = {}
    for (i, j), v in zip(mask.pairs, mask.values):
        if i == j:
            diag[int(i)] = v
    violations = []
    for (i, j), v in zip(mask.pairs, mask.values):
        if i == j:
            if v < 0.0:
                violations.append((int(i), int(j), float(v)))
            continue
        if int(i) in diag and int(j) in diag:
            bound = math.sqrt(max(diag[int(i)], 0.0) * max(diag[int(j)], 0.0))
            if abs(v) > bound + 1e-12:
                violations.append((int(i), int(j), float(v)))
    if strict and violations:
        raise InfeasibleObservation(violations)
    return violations


def purity_objective(u: np.ndarray):
    """Purity Tr(rho^2) of rho = UU^T / Tr(UU^T), with its gradient.

    Works on the r x r factor covariance C = U^T U, so the n x n kernel is
    never formed: P = ||C||_F^2 / (Tr C)^2, grad = (4/T^2)(U C - (||C||_F^2/T) U).
    """
    u = np.asarray(u, dtype=float)
    c = u.T @ u
    t = float(np.trace(c))
    if t <= 0.0:
        raise ZeroFactor("factor matrix is zero")
    c2 = float(np.sum(c * c))
    value = c2 / (t * t)
    grad = (4.0 / (t * t)) * (u @ c - (c2 / t) * u)
    return value, grad


def logdet_surrogate_objective(u: np.ndarray, floor: float = 1e-8):
    """log det(C/Tr(C) + floor*I) on the r x r factor covariance, with gradient.

    Maximizing this pushes the r nonzero eigenvalues of rho toward uniformity
    (it is strictly Schur-concave on the trace-normalized spectrum); the
    floor keeps rank-deficient iterates finite at a bias of order r*floor.
    """
    if not floor > 0.0:
        raise ValueError("floor must be positive")
    u = np.asarray(u, dtype=float)
    r = u.shape[1]
    c = u.T @ u
    t = float(np.trace(c))
    if t <= 0.0:
        raise ZeroFactor("factor matrix is zero")
    m = c / t + floor * np.eye(r)
    sign, logdet = np.linalg.slogdet(m)
    if sign <= 0.0:  # cannot happen for PSD + floor, guard anyway
        raise ZeroFactor("factor covariance is not positive definite")
    minv = np.linalg.inv(m)
    minv = (minv + minv.T) / 2.0
    tr_minv_c = float(np.sum(minv * c))
    grad = (2.0 / t) * (u @ minv) - (2.0 * tr_minv_c / (t * t)) * u
    return float(logdet), grad


class _PenaltyOp:
    """Quadratic penalty lam * sum_(i,j) (s*(UU^T)_ij - K_ij)^2 and gradient.

    The gradient is 2*lam*s*W U - 4*lam*s*q/T * U, where W is the symmetric
    scatter of the residuals (diagonal residuals doubled, since
    d(G_ii)/dU = 2 u_i) and q = sum resid_ij * G_ij. The CSR structure of W
    is fixed by the mask, so it is assembled once and only its data updated.
    """

    def __init__(self, mask: ObservationMask, lam_pen: float):
        self.n = mask.n
        self.lam = lam_pen
        self.idx_i = np.ascontiguousarray(mask.pairs[:, 0])
        self.idx_j = np.ascontiguousarray(mask.pairs[:, 1])
        self.vals = mask.values
        m = self.idx_i.size
        dup = self.idx_i == self.idx_j
        off = ~dup
        rows = np.concatenate([self.idx_i, self.idx_j[off]])
        cols = np.concatenate([self.idx_j, self.idx_i[off]])
        # residual index and weight feeding each scatter slot
        self.source = np.concatenate([np.arange(m), np.nonzero(off)[0]])
        self.scale = np.concatenate([np.where(dup, 2.0, 1.0), np.ones(off.sum())])
        perm = np.lexsort((cols, rows))
        self.perm = perm
        indptr = np.searchsorted(rows[perm], np.arange(self.n + 1))
        self.w = sparse.csr_matrix(
            (np.zeros(rows.size), cols[perm], indptr), shape=(self.n, self.n))
        self._bi = None
        self._bj = None

    def _observed_entries(self, u: np.ndarray) -> np.ndarray:
        # reuse gather buffers; fresh allocations dominate the loop otherwise
        if self._bi is None or self._bi.shape != (self.idx_i.size, u.shape[1]):
            self._bi = np.empty((self.idx_i.size, u.shape[1]))
            self._bj = np.empty_like(self._bi)
        np.take(u, self.idx_i, axis=0, out=self._bi)
        np.take(u, self.idx_j, axis=0, out=self._bj)
        np.multiply(self._bi, self._bj, out=self._bi)
        return np.sum(self._bi, axis=1)

    def __call__(self, u: np.ndarray):
        t = float(np.sum(u * u))
        if t <= 0.0:
            raise ZeroFactor("factor matrix is zero")
        s = self.n / t
        g_obs = self._observed_entries(u)
        resid = s * g_obs - self.vals
        value = self.lam * float(np.sum(resid * resid))
        self.w.data[:] = (resid[self.source] * self.scale)[self.perm]
        wu = self.w @ u
        q = float(np.sum(resid * g_obs))
        grad = self.lam * (2.0 * s * wu - (4.0 * s * q / t) * u)
        max_resid = float(np.max(np.abs(resid))) if resid.size else 0.0
        return value, grad, max_resid


def complete_kernel(problem: CompletionProblem) -> CompletionResult:
    """Recover a PSD completion of the observed entries by Adam on the factor.

    The loss is obj(U) + penalty_weight * sum_observed (s(U)(UU^T)_ij - K_ij)^2
    with obj = +purity for renyi2_purity and -logdet surrogate for vne_logdet.
    U starts as Gaussian entries of standard deviation 1/sqrt(r) (so the
    initial diagonal is near 1 in expectation) drawn from the problem seed.
    Convergence: relative objective change <= objective_tol over a
    tol_window-iteration window, capped at max_iters (soft flag).
    """
    feasible_set_check(problem.mask, strict=True)
    mask = problem.mask
    n, r = mask.n, problem.rank
    opt = problem.optimizer
    rng = np.random.default_rng(problem.seed)
    u = rng.normal(0.0, 1.0 / math.sqrt(r), size=(n, r))
    penalty = _PenaltyOp(mask, problem.penalty_weight)

    if problem.objective == "renyi2_purity":
        def objective(mat):
            return purity_objective(mat)
    else:
        def objective(mat):
            val, grad = logdet_surrogate_objective(mat)
            return -val, -grad

    m1 = np.zeros_like(u)
    m2 = np.zeros_like(u)
    trace = np.empty(opt.max_iters)
    converged = False
    iters_done = 0
    for it in range(opt.max_iters):
        obj_val, obj_grad = objective(u)
        pen_val, pen_grad, _ = penalty(u)
        loss = obj_val + pen_val
        trace[it] = loss
        iters_done = it + 1
        w = opt.tol_window
        if it >= w:
            prev = trace[it - w]
            rel = abs(loss - prev) / max(abs(prev), 1e-30)
            if rel <= opt.objective_tol:
                converged = True
                break
        g = obj_grad + pen_grad
        m1 = opt.beta1 * m1 + (1.0 - opt.beta1) * g
        m2 = opt.beta2 * m2 + (1.0 - opt.beta2) * (g * g)
        m1_hat = m1 / (1.0 - opt.beta1 ** (it + 1))
        m2_hat = m2 / (1.0 - opt.beta2 ** (it + 1))
        u = u - opt.learning_rate * m1_hat / (np.sqrt(m2_hat) + opt.eps_hat)
    if not converged:
        log.warning("complete_kernel: iteration cap %d reached without the "
                    "windowed objective tolerance", opt.max_iters)
    t = float(np.sum(u * u))
    s = n / t
    k_hat = s * (u @ u.T)
    k_hat = (k_hat + k_hat.T) / 2.0
    _, _, residual = penalty(u)
    kernel = KernelMatrix(k_hat, kind="precomputed")
    rho_hat = DensityMatrix(k_hat / n)
    return CompletionResult(k_hat=kernel, rho_hat=rho_hat,
                            objective_trace=trace[:iters_done].copy(),
                            constraint_residual=residual, converged=converged)


def mask_generator(k_true: KernelMatrix, observe_fraction: float,
                   seed: int) -> ObservationMask:
    """Keep the full diagonal and a uniform random fraction of the
    off-diagonal upper triangle, ceil(fraction * n(n-1)/2) pairs, without
    replacement; deterministic per seed."""
    if not 0.0 < observe_fraction <= 1.0:
        raise ValueError(f"observe_fraction must lie in (0, 1], got {observe_fraction!r}")
    n = k_true.n
    iu, ju = np.triu_indices(n, k=1)
    total = iu.size
    count = math.ceil(observe_fraction * total)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=count, replace=False) if total else np.array([], int)
    pairs = [(int(i), int(i)) for i in range(n)]
    values = [float(k_true.mat[i, i]) for i in range(n)]
    for c in np.sort(chosen):
        i, j = int(iu[c]), int(ju[c])
        pairs.append((i, j))
        values.append(float(k_true.mat[i, j]))
    return ObservationMask(n, pairs, values, include_diagonal=True)
