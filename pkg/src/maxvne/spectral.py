"""Density matrices and spectral entropy/divergence functionals.

All entropies are in nats (natural logarithm), with the convention
0 * log(0) = 0 whenever eigenvalue sums are taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TOL_PSD",
    "SUPPORT_TOL",
    "EigenFailure",
    "IndefiniteMatrix",
    "InvalidAlpha",
    "FloorViolation",
    "DomainError",
    "SymMatrix",
    "DensityMatrix",
    "EpsilonFloor",
    "FGenerator",
    "vne",
    "renyi_entropy",
    "renyi2",
    "purity",
    "quantum_relative_entropy",
    "log_loss",
    "trace_entropy",
    "bregman_divergence",
    "f_loss",
    "matrix_function",
    "random_density",
]

# Eigenvalues in [-TOL_PSD, 0] are treated as PSD drift and clamped to zero;
# anything below is rejected as genuinely indefinite.
TOL_PSD = 1e-10
# Eigenvalues of sigma below this threshold span its kernel for support
# checks in the relative entropy (one order below TOL_PSD).
SUPPORT_TOL = 1e-12


class EigenFailure(RuntimeError):
    """Symmetric eigendecomposition did not converge."""


class IndefiniteMatrix(ValueError):
    """Matrix has an eigenvalue below -TOL_PSD; not PSD even up to drift."""


class InvalidAlpha(ValueError):
    """Renyi order must be positive and different from 1."""


class FloorViolation(ValueError):
    """State does not satisfy its eps*I positivity floor."""


class DomainError(ValueError):
    """An eigenvalue lies outside the domain of f or f'."""


def _eigh(mat: np.ndarray):
    # LAPACK symmetric solver (tridiagonalization based), ascending eigenvalues
    try:
        return np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc


class SymMatrix:
    """Dense real symmetric matrix, symmetrized on construction."""

    __slots__ = ("mat",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        a = (a + a.T) / 2.0
        a.flags.writeable = False
        self.mat = a

    @property
    def n(self) -> int:
        return self.mat.shape[0]

    def eigh(self):
        """Eigenvalues (ascending) and orthonormal eigenvectors of the matrix."""
        return _eigh(self.mat)

    def __repr__(self) -> str:
        return f"SymMatrix(n={self.n})"


class DensityMatrix:
    """Symmetric PSD matrix with unit trace.

    The eigendecomposition is computed lazily and cached write-once, so
    instances are immutable and safe to share across threads. Eigenvalues in
    [-1e-10, 0] are clamped to zero and the spectrum renormalized to sum to
    one; an eigenvalue below -1e-10 raises IndefiniteMatrix.
    """

    __slots__ = ("_sym", "_eig", "_min_raw")

    def __init__(self, mat):
        sym = mat if isinstance(mat, SymMatrix) else SymMatrix(mat)
        tr = float(np.trace(sym.mat))
        if abs(tr - 1.0) > 1e-10:
            raise ValueError(f"trace must equal 1 within 1e-10, got {tr!r}")
        self._sym = sym
        self._eig = None
        self._min_raw = None

    @property
    def sym(self) -> SymMatrix:
        return self._sym

    @property
    def mat(self) -> np.ndarray:
        return self._sym.mat

    @property
    def n(self) -> int:
        return self._sym.n

    def _spectrum(self):
        if self._eig is None:
            w, v = _eigh(self.mat)
            self._min_raw = float(w[0])
            if w[0] < -TOL_PSD:
                raise IndefiniteMatrix(
                    f"smallest eigenvalue {w[0]:.3e} below -{TOL_PSD:g}"
                )
            w = np.clip(w, 0.0, None)
            w = w / w.sum()
            w.flags.writeable = False
            v.flags.writeable = False
            self._eig = (w, v)
        return self._eig

    @property
    def eigenvalues(self) -> np.ndarray:
        """Clamped, renormalized spectrum (ascending); a probability vector."""
        return self._spectrum()[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        """Orthonormal eigenvectors as columns, matching `eigenvalues`."""
        return self._spectrum()[1]

    def min_eigenvalue(self) -> float:
        """Smallest raw eigenvalue, before clamping."""
        self._spectrum()
        return self._min_raw

    def __repr__(self) -> str:
        return f"DensityMatrix(n={self.n})"


@dataclass(frozen=True)
class EpsilonFloor:
    """Positivity floor eps for density matrices, rho >= eps*I."""

    eps: float

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0):
            raise ValueError(f"eps must lie in (0, 1), got {self.eps!r}")

    def check_dim(self, n: int) -> None:
        """The floor is only feasible for unit-trace states when eps*n < 1."""
        if self.eps * n >= 1.0:
            raise ValueError(
                f"eps={self.eps} infeasible in dimension {n} (need eps*n < 1)"
            )


class FGenerator:
    """Pointwise convex generator f for trace entropies H_f = -Tr f(rho).

    Supported kinds:
      xlogx     f(t) = t*log(t), extended by f(0) = 0; f' diverges at 0
      square    f(t) = t^2
      power(a)  f(t) = t^a for a > 1 and f(t) = -t^a for 0 < a < 1
                (the sign flip keeps f convex on (0, inf); the induced
                 selection rule is the same after the monotone transform)

    ``fprime_needs_positive`` marks kinds whose derivative is unbounded at 0;
    Bregman divergences / f-losses then require strictly positive sigma.
    """

    __slots__ = ("kind", "alpha", "_sign")

    def __init__(self, kind: str, alpha: float | None = None):
        if kind not in ("xlogx", "square", "power"):
            raise ValueError(f"unknown generator kind {kind!r}")
        if kind == "power":
            if alpha is None or alpha <= 0.0 or alpha == 1.0:
                raise ValueError("power generator requires alpha > 0, alpha != 1")
            self._sign = 1.0 if alpha > 1.0 else -1.0
        else:
            alpha = None
            self._sign = 1.0
        self.kind = kind
        self.alpha = alpha

    @classmethod
    def xlogx(cls) -> "FGenerator":
        return cls("xlogx")

    @classmethod
    def square(cls) -> "FGenerator":
        return cls("square")

    @classmethod
    def power(cls, alpha: float) -> "FGenerator":
        return cls("power", alpha)

    @property
    def fprime_needs_positive(self) -> bool:
        return self.kind == "xlogx" or (self.kind == "power" and self.alpha < 1.0)

    def f(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise DomainError(f"{self.kind}: eigenvalue below 0 outside domain of f")
        if self.kind == "xlogx":
            out = np.zeros_like(t)
            pos = t > 0.0
            out[pos] = t[pos] * np.log(t[pos])
            return out
        if self.kind == "square":
            return t * t
        return self._sign * t**self.alpha

    def fprime(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise DomainError(f"{self.kind}: eigenvalue below 0 outside domain of f'")
        if self.fprime_needs_positive and np.any(t <= 0.0):
            raise DomainError(
                f"{self.kind}: f' unbounded at 0, needs a strictly positive spectrum"
            )
        if self.kind == "xlogx":
            return np.log(t) + 1.0
        if self.kind == "square":
            return 2.0 * t
        return self._sign * self.alpha * t ** (self.alpha - 1.0)

    def __repr__(self) -> str:
        if self.kind == "power":
            return f"FGenerator.power({self.alpha})"
        return f"FGenerator.{self.kind}()"


def vne(rho: DensityMatrix) -> float:
    """Von Neumann entropy -sum(w*log(w)) in nats, 0*log(0) = 0."""
    w = rho.eigenvalues
    pos = w[w > 0.0]
    return float(-np.sum(pos * np.log(pos))) + 0.0


def renyi_entropy(rho: DensityMatrix, alpha: float) -> float:
    """Order-alpha Renyi entropy log(sum(w^alpha)) / (1 - alpha)."""
    if not alpha > 0.0 or alpha == 1.0:
        raise InvalidAlpha(f"alpha must be positive and != 1, got {alpha!r}")
    w = rho.eigenvalues
    return float(np.log(np.sum(w**alpha)) / (1.0 - alpha))


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2), from the squared Frobenius norm (no eigendecomposition)."""
    return float(np.sum(rho.mat * rho.mat))


def renyi2(rho: DensityMatrix) -> float:
    """Quadratic Renyi entropy -log Tr(rho^2)."""
    return -math.log(purity(rho))


def _weights_in_basis(rho: DensityMatrix, v: np.ndarray) -> np.ndarray:
    # diag(V^T rho V): mass of rho along each eigenvector column of V
    w = np.einsum("ji,jk,ki->i", v, rho.mat, v)
    return np.clip(w, 0.0, None)


def quantum_relative_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Tr(rho(log rho - log sigma)), or +inf if supp(rho) is not in supp(sigma).

    Eigenvalues of sigma below SUPPORT_TOL span its kernel; if rho carries
    more than 1e-10 mass there the divergence is infinite, which is returned
    as ``math.inf`` rather than raised.
    """
    if rho.n != sigma.n:
        raise ValueError("rho and sigma must share a dimension")
    ws = sigma.eigenvalues
    vs = sigma.eigenvectors
    w_rho = _weights_in_basis(rho, vs)
    kernel = ws < SUPPORT_TOL
    if float(np.sum(w_rho[kernel])) > 1e-10:
        return math.inf
    wr = rho.eigenvalues
    pos = wr[wr > 0.0]
    tr_rho_log_rho = float(np.sum(pos * np.log(pos)))
    support = ~kernel
    tr_rho_log_sigma = float(np.sum(w_rho[support] * np.log(ws[support])))
    return tr_rho_log_rho - tr_rho_log_sigma


def _cross_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    # -Tr(rho log sigma) for strictly positive sigma
    ws = sigma.eigenvalues
    vs = sigma.eigenvectors
    w_rho = _weights_in_basis(rho, vs)
    return float(-np.sum(w_rho * np.log(ws)))


def log_loss(rho: DensityMatrix, sigma: DensityMatrix, eps: EpsilonFloor) -> float:
    """Quantum log loss -Tr(rho log sigma) for sigma >= eps*I."""
    if rho.n != sigma.n:
        raise ValueError("rho and sigma must share a dimension")
    eps.check_dim(sigma.n)
    smin = sigma.min_eigenvalue()
    if smin < eps.eps - 1e-12:
        raise FloorViolation(
            f"sigma's smallest eigenvalue {smin:.3e} is below the floor {eps.eps:g}"
        )
    return _cross_entropy(rho, sigma)


def trace_entropy(rho: DensityMatrix, f: FGenerator) -> float:
    """Trace entropy -Tr f(rho) = -sum f(eigenvalues)."""
    return float(-np.sum(f.f(rho.eigenvalues)))


def bregman_divergence(rho: DensityMatrix, sigma: DensityMatrix, f: FGenerator) -> float:
    """Matrix Bregman divergence Tr(f(rho) - f(sigma) - f'(sigma)(rho - sigma))."""
    if rho.n != sigma.n:
        raise ValueError("rho and sigma must share a dimension")
    ws = sigma.eigenvalues
    vs = sigma.eigenvectors
    fp = f.fprime(ws)
    w_rho = _weights_in_basis(rho, vs)
    tr_f_rho = np.sum(f.f(rho.eigenvalues))
    tr_f_sigma = np.sum(f.f(ws))
    tr_fp_rho = np.sum(fp * w_rho)
    tr_fp_sigma = np.sum(fp * ws)
    return float(tr_f_rho - tr_f_sigma - (tr_fp_rho - tr_fp_sigma))


def f_loss(rho: DensityMatrix, sigma: DensityMatrix, f: FGenerator) -> float:
    """f-loss -Tr(f(sigma) + f'(sigma)(rho - sigma)).

    Decomposes exactly as trace_entropy(rho, f) + bregman_divergence(rho,
    sigma, f) and is minimized over sigma at sigma = rho.
    """
    if rho.n != sigma.n:
        raise ValueError("rho and sigma must share a dimension")
    ws = sigma.eigenvalues
    vs = sigma.eigenvectors
    fp = f.fprime(ws)
    w_rho = _weights_in_basis(rho, vs)
    tr_f_sigma = np.sum(f.f(ws))
    tr_fp_rho = np.sum(fp * w_rho)
    tr_fp_sigma = np.sum(fp * ws)
    return float(-(tr_f_sigma + tr_fp_rho - tr_fp_sigma))


def matrix_function(m: SymMatrix, scalar_fn) -> SymMatrix:
    """Apply scalar_fn to m through its eigendecomposition, V f(L) V^T."""
    w, v = m.eigh()
    with np.errstate(invalid="ignore", divide="ignore"):
        fw = np.asarray(scalar_fn(w), dtype=float)
    if fw.shape != w.shape or not np.all(np.isfinite(fw)):
        raise DomainError("scalar_fn must map the spectrum to finite values")
    return SymMatrix((v * fw) @ v.T)


def random_density(n: int, rng: np.random.Generator, floor: float = 0.0) -> DensityMatrix:
    """Random density matrix: Haar eigenvectors, Dirichlet(1) eigenvalues.

    With floor > 0 the state is mixed with I/n just enough to satisfy
    rho >= floor*I (requires floor < 1/n).
    """
    x = rng.normal(size=(n, n))
    q, r = np.linalg.qr(x)
    q = q * np.where(np.diag(r) >= 0.0, 1.0, -1.0)
    w = rng.dirichlet(np.ones(n))
    mat = (q * w) @ q.T
    if floor > 0.0:
        if floor >= 1.0 / n:
            raise ValueError("floor must be below 1/n")
        wmin = float(w.min())
        if wmin < floor:
            delta = (floor - wmin) / (1.0 / n - wmin)
            mat = (1.0 - delta) * mat + delta * np.eye(n) / n
    mat = mat / np.trace(mat)
    return DensityMatrix(mat)
