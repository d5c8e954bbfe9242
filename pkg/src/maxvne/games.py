"""Numerical verification of the entropy minimax theory on small instances:
lower/upper game values over a vertex polytope of states, the Gibbs/equalizer
solution under linear constraints, and conditional entropies of cq states."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .mixture import PGASettings, maximize_mixture_entropy
from .spectral import (
    DensityMatrix,
    EpsilonFloor,
    FloorViolation,
    SymMatrix,
    _cross_entropy,
    random_density,
    vne,
)

log = logging.getLogger(__name__)


class InfeasibleOrUnbounded(RuntimeError):
    """Dual of the constrained entropy problem is unbounded below: the
    targets are not attainable by a full-rank state."""


class MismatchedPrior(ValueError):
    """cq states must share the same classical prior p(x)."""


class PolytopeAmbiguitySet:
    """Convex hull of finitely many density matrices, all >= eps*I."""

    __slots__ = ("vertices", "eps")

    def __init__(self, vertices, eps: EpsilonFloor):
        vertices = list(vertices)
        if len(vertices) < 1:
            raise ValueError("need at least one vertex")
        n = vertices[0].n
        eps.check_dim(n)
        for v in vertices:
            if v.n != n:
                raise ValueError("all vertices must share a dimension")
            if v.min_eigenvalue() < eps.eps - 1e-12:
                raise FloorViolation(
                    f"vertex with smallest eigenvalue {v.min_eigenvalue():.3e} "
                    f"violates the eps={eps.eps:g} floor"
                )
        self.vertices = vertices
        self.eps = eps

    @property
    def n(self) -> int:
        return self.vertices[0].n

    @property
    def m(self) -> int:
        return len(self.vertices)


class ConstraintSet:
    """Linear expectation constraints Tr(rho A_j) = tau_j."""

    __slots__ = ("observables", "targets")

    def __init__(self, observables, targets):
        observables = [a if isinstance(a, SymMatrix) else SymMatrix(a)
                       for a in observables]
        if len(observables) < 1:
            raise ValueError("need at least one observable")
        n = observables[0].n
        for a in observables:
            if a.n != n:
                raise ValueError("all observables must share a dimension")
        targets = np.array(targets, dtype=float)
        if targets.shape != (len(observables),):
            raise ValueError("targets must match the number of observables")
        targets.flags.writeable = False
        self.observables = observables
        self.targets = targets

    @property
    def n(self) -> int:
        return self.observables[0].n

    @property
    def m(self) -> int:
        return len(self.observables)


@dataclass(frozen=True)
class GibbsSolution:
    beta: np.ndarray
    c: float
    rho_tau: DensityMatrix
    equalizer_value: float  # = -(c + sum_j beta_j tau_j)


class CqState:
    """Classical-quantum state: prior p(x) and one density matrix per symbol."""

    __slots__ = ("px", "states")

    def __init__(self, px, states, eps: EpsilonFloor | None = None):
        px = np.array(px, dtype=float)
        states = list(states)
        if px.ndim != 1 or px.size != len(states) or px.size < 1:
            raise ValueError("px and states must have equal positive length")
        if np.any(px < 0.0) or abs(px.sum() - 1.0) > 1e-10:
            raise ValueError("px must be a probability vector (1e-10)")
        n = states[0].n
        for s in states:
            if s.n != n:
                raise ValueError("all conditional states must share a dimension")
            if eps is not None and s.min_eigenvalue() < eps.eps - 1e-12:
                raise ValueError("conditional state violates the eps floor")
        px.flags.writeable = False
        self.px = px
        self.states = states

    @property
    def alphabet_size(self) -> int:
        return self.px.size

    @property
    def n(self) -> int:
        return self.states[0].n


# ---------------------------------------------------------------------------
# Game values over a vertex polytope
# ---------------------------------------------------------------------------

# Robust defaults for the polytope solvers; small instances converge in a
# few hundred iterations, and 1e-7 on the projected gradient is comfortably
# above the floating-point stall floor of the ascent.
GAME_PGA = PGASettings(learning_rate=0.1, max_iters=2000, grad_tol=1e-7,
                       backtracking=True)


def lower_value(gamma: PolytopeAmbiguitySet, pga: PGASettings = GAME_PGA):
    """sup over the polytope of S(rho), via PGA on the mixture weights.

    Returns (value, weights); the value is a certified lower bound on the
    supremum since it is the entropy of a feasible mixture.
    """
    components = np.stack([v.mat for v in gamma.vertices])
    result = maximize_mixture_entropy(components, pga)
    if not result.converged:
        log.warning("lower_value: PGA did not meet grad_tol; value is the "
                    "best iterate (still a valid lower bound)")
    return result.value, result.weights


def _mix(gamma: PolytopeAmbiguitySet, weights: np.ndarray) -> DensityMatrix:
    mat = np.tensordot(weights, [v.mat for v in gamma.vertices], axes=1)
    return DensityMatrix(mat / np.trace(mat))


def _floor_state(lam: np.ndarray, vec: np.ndarray, eps: float):
    """Mix diag-state (lam, vec) with I/n just enough to reach the eps floor."""
    n = lam.size
    smin = float(lam.min())
    if smin >= eps:
        return lam, vec
    delta = (eps - smin) / (1.0 / n - smin)
    return (1.0 - delta) * lam + delta / n, vec


def upper_value(gamma: PolytopeAmbiguitySet, eps: EpsilonFloor,
                iters: int = 400, step0: float = 0.05):
    """inf over sigma >= eps*I of max_k L_log(vertex_k, sigma).

    The sup over the polytope of the (rho-affine) log loss is attained at a
    vertex, so the objective is a max over finitely many terms. With the
    parameterization sigma = exp(H)/Tr(exp(H)) each term is
    -Tr(rho_k H) + log Tr exp(H), convex in H with subgradient sigma - rho_k
    at the active vertex. Subgradient descent is warm-started at the log of
    the optimal mixture (the saddle has sigma* = rho*), every iterate is
    floored by mixing with I/n, and the best feasible value is kept. The
    returned value is a certified upper bound: it is the exact polytope
    maximum of the loss at a feasible action.

    Returns (value, sigma).
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    eps.check_dim(gamma.n)
    n = gamma.n
    verts = np.stack([v.mat for v in gamma.vertices])
    _, w0 = lower_value(gamma)
    rho0 = _mix(gamma, w0)
    lam0, vec0 = np.linalg.eigh(rho0.mat)
    lam0 = np.clip(lam0, eps.eps * 1e-3, None)  # warm start only; floored below
    h = (vec0 * np.log(lam0)) @ vec0.T

    best_val = math.inf
    best_sigma = None
    for t in range(iters):
        lam, vec = np.linalg.eigh(h)
        shifted = np.exp(lam - lam.max())
        s_eig = shifted / shifted.sum()
        # feasible candidate and its exact objective
        f_eig, f_vec = _floor_state(s_eig, vec, eps.eps)
        log_sigma_f = (f_vec * np.log(f_eig)) @ f_vec.T
        losses = -np.einsum("kij,ij->k", verts, log_sigma_f)
        val = float(losses.max())
        if val < best_val:
            best_val = val
            best_sigma = (f_vec * f_eig) @ f_vec.T
        # subgradient step in H at the active vertex (unfloored sigma)
        sigma = (vec * s_eig) @ vec.T
        log_z = lam.max() + math.log(shifted.sum())
        raw_losses = -np.einsum("kij,ij->k", verts, h) + log_z
        k_star = int(np.argmax(raw_losses))
        h = h - (step0 / math.sqrt(t + 1.0)) * (sigma - verts[k_star])
    return best_val, DensityMatrix(best_sigma / np.trace(best_sigma))


@dataclass(frozen=True)
class MinimaxReport:
    lower: float
    upper: float
    gap: float
    weights: np.ndarray
    rho_star: DensityMatrix
    sigma_star: DensityMatrix
    vertex_margins: np.ndarray  # L(rho*, rho*) - L(vertex_k, rho*), want >= -tol
    sigma_margins: np.ndarray  # L(rho*, sigma) - L(rho*, rho*), want >= -tol
    tol: float
    passed: bool


def verify_minimax(gamma: PolytopeAmbiguitySet, eps: EpsilonFloor, tol: float,
                   seed: int = 0, n_sigma: int = 100) -> MinimaxReport:
    """Witness the minimax equality and the saddle inequalities numerically.

    PASS requires gap = upper - lower <= tol, and the saddle inequalities at
    (rho*, sigma* := rho*): every vertex loss at sigma* at most the saddle
    value, and the saddle value at most the loss against each of ``n_sigma``
    random feasible actions, all within tol.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    low, weights = lower_value(gamma)
    up, sigma_up = upper_value(gamma, eps)
    gap = up - low
    rho_star = _mix(gamma, weights)
    saddle_value = _cross_entropy(rho_star, rho_star)  # = S(rho*)
    vertex_losses = np.array(
        [_cross_entropy(v, rho_star) for v in gamma.vertices])
    vertex_margins = saddle_value - vertex_losses
    rng = np.random.default_rng(seed)
    sigma_margins = np.empty(n_sigma)
    for i in range(n_sigma):
        sig = random_density(gamma.n, rng, floor=eps.eps)
        sigma_margins[i] = _cross_entropy(rho_star, sig) - saddle_value
    passed = (gap <= tol
              and bool(np.all(vertex_margins >= -tol))
              and bool(np.all(sigma_margins >= -tol)))
    return MinimaxReport(lower=low, upper=up, gap=gap, weights=weights,
                         rho_star=rho_star, sigma_star=sigma_up,
                         vertex_margins=vertex_margins,
                         sigma_margins=sigma_margins, tol=tol, passed=passed)


# ---------------------------------------------------------------------------
# Gibbs states under linear constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NewtonSettings:
    tol: float = 1e-10  # on the dual gradient norm
    max_iters: int = 100
    armijo: float = 1e-4
    beta_bound: float = 1e6  # blowup threshold: dual deemed unbounded


def _exp_state(b: np.ndarray):
    """exp(B)/Tr(exp(B)) with a stable shifted exponential; returns
    (sigma, logZ, lam, vec, shifted_exp, shifted_Z)."""
    lam, vec = np.linalg.eigh(b)
    shift = lam.max()
    e = np.exp(lam - shift)
    z = e.sum()
    sigma = (vec * (e / z)) @ vec.T
    return sigma, shift + math.log(z), lam, vec, e, z


def _dual_hessian(a_tilde: np.ndarray, lam: np.ndarray, e: np.ndarray,
                  z: float, moments: np.ndarray) -> np.ndarray:
    # Divided-difference (Daleckii-Krein) form of the Frechet derivative of
    # exp at B; e is the shifted exponential so no overflow occurs.
    diff = lam[:, None] - lam[None, :]
    near = np.abs(diff) < 1e-8
    safe = np.where(near, 1.0, diff)
    phi = (e[:, None] - e[None, :]) / safe
    mid = np.exp((lam[:, None] + lam[None, :]) / 2.0 - lam.max())
    x = diff / 2.0
    phi = np.where(near, mid * (1.0 + x * x / 6.0), phi)
    h = np.einsum("jpq,kpq,pq->jk", a_tilde, a_tilde, phi) / z
    return h - np.outer(moments, moments)


def solve_gibbs(constraints: ConstraintSet,
                newton: NewtonSettings = NewtonSettings()) -> GibbsSolution:
    """Max-entropy state under Tr(rho A_j) = tau_j via the convex dual.

    Minimizes F(beta) = log Tr exp(sum_j beta_j A_j) - beta.tau by Newton's
    method with Armijo backtracking; the gradient is the moment mismatch
    Tr(rho_beta A_j) - tau_j. A singular Hessian falls back to a gradient
    step. Unbounded descent (targets unattainable by a full-rank state)
    raises InfeasibleOrUnbounded.
    """
    mats = np.stack([a.mat for a in constraints.observables])
    tau = constraints.targets
    m = mats.shape[0]
    beta = np.zeros(m)

    def dual(bvec):
        b = np.tensordot(bvec, mats, axes=1)
        sigma, log_z, lam, vec, e, z = _exp_state(b)
        f = log_z - float(bvec @ tau)
        moments = np.einsum("kij,ij->k", mats, sigma)
        return f, moments - tau, (sigma, log_z, lam, vec, e, z, moments)

    f, grad, ctx = dual(beta)
    for _ in range(newton.max_iters):
        if np.linalg.norm(grad) <= newton.tol:
            break
        sigma, log_z, lam, vec, e, z, moments = ctx
        a_tilde = np.einsum("pi,kpq,qj->kij", vec, mats, vec)
        hess = _dual_hessian(a_tilde, lam, e, z, moments)
        try:
            step = np.linalg.solve(hess, -grad)
            if not np.all(np.isfinite(step)) or float(grad @ step) >= 0.0:
                raise np.linalg.LinAlgError("not a descent direction")
        except np.linalg.LinAlgError:
            log.warning("solve_gibbs: singular Hessian, gradient fallback")
            step = -grad
        t = 1.0
        slope = float(grad @ step)
        accepted = False
        while t >= 1e-14:
            f_new, grad_new, ctx_new = dual(beta + t * step)
            if f_new <= f + newton.armijo * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break  # no progress possible; gradient check below decides
        beta = beta + t * step
        f, grad, ctx = f_new, grad_new, ctx_new
        if np.linalg.norm(beta) > newton.beta_bound:
            raise InfeasibleOrUnbounded(
                f"dual variable norm exceeded {newton.beta_bound:g}; targets "
                "are not attainable by a full-rank state")
    if np.linalg.norm(grad) > newton.tol:
        raise InfeasibleOrUnbounded(
            f"dual gradient norm {np.linalg.norm(grad):.3e} above tolerance "
            f"{newton.tol:g} after {newton.max_iters} iterations")
    sigma, log_z, *_ = ctx
    c = -log_z
    rho_tau = DensityMatrix(sigma / np.trace(sigma))
    equalizer = -(c + float(beta @ tau))
    return GibbsSolution(beta=beta, c=c, rho_tau=rho_tau,
                         equalizer_value=equalizer)


@dataclass(frozen=True)
class EqualizerReport:
    trials: int
    max_deviation: float  # of L_log(rho, rho_tau) from the equalizer value
    max_entropy_excess: float  # of S(rho) over S(rho_tau)
    degenerate: bool  # feasible set is a single point
    passed: bool


def verify_equalizer(sol: GibbsSolution, constraints: ConstraintSet,
                     trials: int, seed: int = 0,
                     tol: float = 1e-8) -> EqualizerReport:
    """Sample feasible states around rho_tau and check the equalizer property.

    Each sample is rho_tau + t*V with V a random symmetric direction
    projected onto {Tr V = 0, Tr(V A_j) = 0} and t the largest step in
    (0, t_max] keeping the state PSD (t_max = 0.5 * lambda_min / ||V||_2,
    confirmed or bisected). PASS requires the log loss against rho_tau to
    deviate at most tol from the equalizer value and the entropy never to
    exceed S(rho_tau) + tol.
    """
    n = sol.rho_tau.n
    basis = [np.eye(n)] + [a.mat for a in constraints.observables]
    g = np.stack([b.reshape(-1) for b in basis])
    null_dim = n * (n + 1) // 2 - np.linalg.matrix_rank(g)
    if null_dim == 0:
        return EqualizerReport(trials=0, max_deviation=0.0,
                               max_entropy_excess=0.0, degenerate=True,
                               passed=True)
    gram = g @ g.T
    lam_tau, vec_tau = np.linalg.eigh(sol.rho_tau.mat)
    log_rho_tau = (vec_tau * np.log(np.clip(lam_tau, 1e-300, None))) @ vec_tau.T
    s_tau = vne(sol.rho_tau)
    wmin = float(lam_tau[0])
    rng = np.random.default_rng(seed)
    max_dev = 0.0
    max_excess = -math.inf
    done = 0
    while done < trials:
        x = rng.normal(size=(n, n))
        v0 = (x + x.T) / 2.0
        coef, *_ = np.linalg.lstsq(gram, g @ v0.reshape(-1), rcond=None)
        v = v0 - np.tensordot(coef, basis, axes=1)
        vnorm = np.linalg.norm(v, 2)
        if vnorm < 1e-12:
            continue  # direction annihilated; resample (null_dim > 0)
        t_max = 0.5 * wmin / vnorm
        if np.linalg.eigvalsh(sol.rho_tau.mat + t_max * v)[0] >= -1e-12:
            t = t_max
        else:  # safety net; t_max is PSD by construction
            lo, hi = 0.0, t_max
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if np.linalg.eigvalsh(sol.rho_tau.mat + mid * v)[0] >= -1e-12:
                    lo = mid
                else:
                    hi = mid
            t = lo
        rho = DensityMatrix(sol.rho_tau.mat + t * v)
        loss = float(-np.sum(rho.mat * log_rho_tau))
        max_dev = max(max_dev, abs(loss - sol.equalizer_value))
        max_excess = max(max_excess, vne(rho) - s_tau)
        done += 1
    passed = max_dev <= tol and max_excess <= tol
    return EqualizerReport(trials=trials, max_deviation=max_dev,
                           max_entropy_excess=max_excess, degenerate=False,
                           passed=passed)


# ---------------------------------------------------------------------------
# Conditional (cq) entropies
# ---------------------------------------------------------------------------


def conditional_vne(state: CqState) -> float:
    """Conditional entropy sum_x p(x) S(rho_x)."""
    return float(sum(p * vne(r) for p, r in zip(state.px, state.states)))


def conditional_log_loss(rho: CqState, sigma: CqState) -> float:
    """sum_x p(x) (-Tr(rho_x log sigma_x)); minimized at sigma = rho where it
    equals the conditional entropy."""
    if rho.alphabet_size != sigma.alphabet_size:
        raise MismatchedPrior("alphabets differ")
    if np.max(np.abs(rho.px - sigma.px)) > 1e-12:
        raise MismatchedPrior("priors differ beyond 1e-12")
    total = 0.0
    for p, rx, sx in zip(rho.px, rho.states, sigma.states):
        if p == 0.0:
            continue
        total += p * _cross_entropy(rx, sx)
    return float(total)


def conditional_quadratic_bayes(rho: CqState) -> float:
    """Bayes risk of the quadratic loss, -sum_x p(x) Tr(rho_x^2)."""
    return float(-sum(p * np.sum(r.mat * r.mat)
                      for p, r in zip(rho.px, rho.states)))
