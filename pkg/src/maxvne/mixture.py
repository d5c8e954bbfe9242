"""Kernel mixture selection: maximize the von Neumann entropy of a convex
combination of normalized kernels by projected gradient ascent (PGA)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .kernels import KernelBundle
from .spectral import DensityMatrix, vne

log = logging.getLogger(__name__)

# Mixtures can become singular; log-eigenvalues are clamped here so the
# ascent direction stays finite (the maximizer is never singular unless
# every mixture is).
EIG_FLOOR = 1e-12


class DimensionMismatch(ValueError):
    """Weight vector length does not match the bundle size."""


class InfeasibleBox(ValueError):
    """Box bounds make the boxed simplex empty."""


@dataclass(frozen=True)
class FullSimplex:
    """The full probability simplex {w >= 0, sum w = 1}."""


class BoxedSimplex:
    """Simplex intersected with per-component bounds lower_k <= w_k <= upper_k."""

    __slots__ = ("lower", "upper")

    def __init__(self, lower, upper):
        lower = np.array(lower, dtype=float)
        upper = np.array(upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be 1-D and of equal length")
        if np.any(lower < 0.0) or np.any(upper > 1.0) or np.any(lower > upper):
            raise InfeasibleBox("need 0 <= lower_k <= upper_k <= 1")
        if lower.sum() > 1.0 + 1e-12 or upper.sum() < 1.0 - 1e-12:
            raise InfeasibleBox("need sum(lower) <= 1 <= sum(upper)")
        lower.flags.writeable = False
        upper.flags.writeable = False
        self.lower = lower
        self.upper = upper

    @property
    def m(self) -> int:
        return self.lower.size


def project_simplex(v, feasible=FullSimplex()) -> np.ndarray:
    """Euclidean projection onto the (boxed) probability simplex.

    Full simplex: exact sort-based thresholding. Boxed simplex: bisection on
    the threshold with clamping to [lower, upper]. Idempotent.
    """
    v = np.asarray(v, dtype=float)
    if isinstance(feasible, FullSimplex):
        u = np.sort(v)[::-1]
        css = np.cumsum(u)
        j = np.arange(1, v.size + 1)
        k = int(np.nonzero(u - (css - 1.0) / j > 0.0)[0][-1]) + 1
        theta = (css[k - 1] - 1.0) / k
        return np.maximum(v - theta, 0.0)
    if v.size != feasible.m:
        raise DimensionMismatch(f"vector of size {v.size} vs box of size {feasible.m}")
    lower, upper = feasible.lower, feasible.upper

    def mass(theta: float) -> float:
        return float(np.sum(np.clip(v - theta, lower, upper)))

    lo = float(np.min(v - upper))  # mass(lo) = sum(upper) >= 1
    hi = float(np.max(v - lower))  # mass(hi) = sum(lower) <= 1
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mass(mid) >= 1.0:
            lo = mid
        else:
            hi = mid
    w = np.clip(v - 0.5 * (lo + hi), lower, upper)
    # the bisection gets sum(w) to ~1e-15; close the residual on the free set
    free = (w > lower) & (w < upper)
    if np.any(free):
        w[free] += (1.0 - w.sum()) / np.count_nonzero(free)
    return w


@dataclass(frozen=True)
class PGASettings:
    """Projected gradient ascent settings (defaults: fixed step 0.1, at most
    100 iterations, uniform initialization)."""

    learning_rate: float = 0.1
    max_iters: int = 100
    grad_tol: float = 1e-7
    init: np.ndarray | None = None  # None means uniform weights
    backtracking: bool = False  # optional Armijo halving, off by default

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.grad_tol > 0.0:
            raise ValueError("grad_tol must be positive")


@dataclass
class MixtureAscentResult:
    weights: np.ndarray
    value: float
    trajectory: list  # per-iteration (objective, projected-gradient norm)
    converged: bool
    degenerate: bool  # some iterate had an eigenvalue below EIG_FLOOR


def _entropy_and_gradient(weights, components):
    """Entropy of sum_k w_k C_k and its gradient -Tr(C_k (log rho + I))."""
    rho = np.tensordot(weights, components, axes=1)
    lam, vec = np.linalg.eigh(rho)
    lam = np.clip(lam, 0.0, None)
    degenerate = bool(lam[0] < EIG_FLOOR)
    pos = lam[lam > 0.0]
    obj = float(-np.sum(pos * np.log(pos)))
    loglam = np.log(np.maximum(lam, EIG_FLOOR))
    logrho = (vec * loglam) @ vec.T
    traces = np.einsum("kij,ij->k", components, logrho)
    grad = -(traces + np.einsum("kii->k", components))
    return obj, grad, degenerate


def maximize_mixture_entropy(components, settings: PGASettings,
                             feasible=FullSimplex()) -> MixtureAscentResult:
    """Maximize S(sum_k w_k C_k) over feasible weights by PGA.

    ``components`` is an (M, n, n) stack of unit-trace PSD matrices, so the
    objective is concave: the result is the global maximum within solver
    tolerance. Terminates when the projected-gradient norm
    ||w - P(w + lr*g)|| / lr drops below grad_tol, or at the iteration cap
    (then the best iterate seen is returned and a warning logged).
    """
    c = np.asarray(components, dtype=float)
    m = c.shape[0]
    if settings.init is None:
        w = np.full(m, 1.0 / m)
    else:
        w = project_simplex(np.asarray(settings.init, dtype=float), feasible)
        if w.size != m:
            raise DimensionMismatch(f"init of size {w.size} for {m} components")
    lr = settings.learning_rate
    trajectory = []
    degenerate = False
    converged = False
    best_obj, best_w = -np.inf, w
    prev_obj = None
    step = lr  # adaptive step memory for the backtracking mode
    for it in range(settings.max_iters):
        obj, grad, deg = _entropy_and_gradient(w, c)
        degenerate = degenerate or deg
        if obj > best_obj:
            best_obj, best_w = obj, w
        if prev_obj is not None and obj < prev_obj - 1e-9:
            log.warning("PGA objective decreased by %.3e at iteration %d",
                        prev_obj - obj, it)
        prev_obj = obj
        w_nominal = project_simplex(w + lr * grad, feasible)
        pg_norm = float(np.linalg.norm(w_nominal - w) / lr)
        trajectory.append((obj, pg_norm))
        if pg_norm <= settings.grad_tol:
            converged = True
            break
        if settings.backtracking:
            step = min(2.0 * step, lr)
            w_next = w_nominal
            for _ in range(40):
                cand = (w_nominal if step == lr
                        else project_simplex(w + step * grad, feasible))
                cobj, _, _ = _entropy_and_gradient(cand, c)
                if cobj >= obj + 1e-4 * float(grad @ (cand - w)):
                    w_next = cand
                    break
                step *= 0.5
            w = w_next
        else:
            w = w_nominal
    if converged:
        value, _, deg = _entropy_and_gradient(w, c)
        degenerate = degenerate or deg
        if value > best_obj:
            best_obj, best_w = value, w
    else:
        log.warning("PGA hit the iteration cap (%d) with projected-gradient "
                    "norm above %.1e; returning the best iterate",
                    settings.max_iters, settings.grad_tol)
    return MixtureAscentResult(weights=best_w, value=best_obj,
                               trajectory=trajectory, converged=converged,
                               degenerate=degenerate)


class MixtureProblem:
    """A kernel bundle, a feasible weight set, and PGA settings."""

    __slots__ = ("bundle", "feasible", "pga")

    def __init__(self, bundle: KernelBundle, feasible=FullSimplex(),
                 pga: PGASettings = PGASettings()):
        if isinstance(feasible, BoxedSimplex) and feasible.m != bundle.m:
            raise DimensionMismatch(
                f"box of size {feasible.m} for a bundle of {bundle.m} kernels")
        self.bundle = bundle
        self.feasible = feasible
        self.pga = pga


@dataclass(frozen=True)
class MixtureSolution:
    alpha_star: np.ndarray
    vne_star: float
    trajectory: list
    rho_star: DensityMatrix
    converged: bool
    degenerate: bool


def _check_weights(bundle: KernelBundle, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (bundle.m,):
        raise DimensionMismatch(
            f"weights of shape {alpha.shape} for a bundle of {bundle.m} kernels")
    if abs(alpha.sum() - 1.0) > 1e-10 or np.any(alpha < -1e-10):
        raise ValueError("weights must lie on the probability simplex (1e-10)")
    return alpha


def mixture_density(bundle: KernelBundle, alpha) -> DensityMatrix:
    """Density matrix (1/n) sum_i alpha_i K_i; unit trace by normalization."""
    alpha = _check_weights(bundle, alpha)
    n = bundle.n
    mix = np.zeros((n, n))
    for a, k in zip(alpha, bundle.kernels):
        mix += a * k.mat
    return DensityMatrix(mix / n)


def vne_alpha_gradient(bundle: KernelBundle, alpha) -> np.ndarray:
    """Analytic gradient of alpha -> S(rho(alpha)): -Tr((K_i/n)(log rho + I)).

    On a singular mixture the log-eigenvalues are clamped at log(1e-12) and a
    warning is logged (soft degeneracy flag).
    """
    alpha = _check_weights(bundle, alpha)
    components = np.stack([k.mat / bundle.n for k in bundle.kernels])
    _, grad, degenerate = _entropy_and_gradient(alpha, components)
    if degenerate:
        log.warning("mixture spectrum degenerate below %.0e; gradient clamped",
                    EIG_FLOOR)
    return grad


def select_mixture(problem: MixtureProblem) -> MixtureSolution:
    """Run PGA on the bundle and return the maximizing weights.

    The objective is concave (composition of the concave entropy with the
    affine map alpha -> rho(alpha)), so the result is the global maximum up
    to solver tolerance. Non-convergence at the iteration cap is flagged,
    not fatal.
    """
    bundle = problem.bundle
    components = np.stack([k.mat / bundle.n for k in bundle.kernels])
    result = maximize_mixture_entropy(components, problem.pga, problem.feasible)
    rho = mixture_density(bundle, result.weights)
    return MixtureSolution(alpha_star=result.weights, vne_star=vne(rho),
                           trajectory=result.trajectory, rho_star=rho,
                           converged=result.converged,
                           degenerate=result.degenerate)


def concatenation_recipe(solution: MixtureSolution) -> np.ndarray:
    """Per-kernel feature scale factors sqrt(alpha_i).

    Scaling embedding i by sqrt(alpha_i) and concatenating yields features
    whose Gram matrix is exactly the selected mixture kernel.
    """
    return np.sqrt(np.clip(solution.alpha_star, 0.0, None))
