"""Torsion solves and low eigenpairs of the mixed Laplacian.

Everything runs through a preconditioned conjugate gradient written here.
Eigenpairs come from inverse iteration (one vector) or block inverse
iteration with Rayleigh-Ritz (a few vectors); coarse grids can ask for the
complete decomposition instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .mesh import Mesh
from .operators import SparseOperator

log = logging.getLogger(__name__)

FULL_LIMIT = 4000
AMG_THRESHOLD = 150_000


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


@dataclass
class CGInfo:
    iterations: int
    residual: float  # max relative residual over columns
    converged: bool


def _preconditioner(A, kind: str):
    """Return a callable applying M^{-1} to a vector or a block."""
    if kind == "auto":
        kind = "amg" if A.shape[0] > AMG_THRESHOLD else "jacobi"
    if kind == "none":
        return lambda r: r
    if kind == "jacobi":
        inv = 1.0 / A.diagonal()
        return lambda r: r * (inv if r.ndim == 1 else inv[:, None])
    if kind == "amg":
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(A.tocsr(), symmetry="hermitian")
        M = ml.aspreconditioner(cycle="V")

        def apply(r):
            if r.ndim == 1:
                return M @ r
            return np.column_stack([M @ r[:, j] for j in range(r.shape[1])])

        return apply
    raise ValueError(f"unknown preconditioner {kind!r}")


def pcg(A, b, x0=None, tol=1e-10, maxiter=None, precond="jacobi"):
    """Preconditioned CG for symmetric positive (semi)definite A.

    ``b`` may be a vector or an (n, k) block; columns are iterated
    independently but share the matvecs.  ``precond`` is a name or a
    callable returned by a previous call to the preconditioner factory.
    Returns (x, CGInfo).  Stops when ||b - Ax|| <= tol ||b|| for every column.
    """
    b = np.asarray(b, dtype=float)
    block = b.ndim == 2
    B = b if block else b[:, None]
    n, k = B.shape
    M = precond if callable(precond) else _preconditioner(A, precond)
    if maxiter is None:
        maxiter = 10 * n
    X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=float).reshape(n, k)
    R = B - A @ X if x0 is not None else B.copy()
    bnorm = np.linalg.norm(B, axis=0)
    bnorm[bnorm == 0] = 1.0
    active = np.linalg.norm(R, axis=0) > tol * bnorm
    Z = M(R)
    P = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    it = 0
    while active.any() and it < maxiter:
        it += 1
        AP = A @ P
        pAp = np.einsum("ij,ij->j", P, AP)
        alpha = np.where(active & (pAp > 0), rz / np.where(pAp > 0, pAp, 1.0), 0.0)
        X += P * alpha
        R -= AP * alpha
        rnorm = np.linalg.norm(R, axis=0)
        active &= rnorm > tol * bnorm
        if not active.any():
            break
        Z = M(R)
        rz_new = np.einsum("ij,ij->j", R, Z)
        beta = np.where(active, rz_new / np.where(rz != 0, rz, 1.0), 0.0)
        P = Z + P * beta
        rz = rz_new
    res = float(np.max(np.linalg.norm(B - A @ X, axis=0) / bnorm))
    info = CGInfo(iterations=it, residual=res, converged=not active.any())
    return (X if block else X[:, 0]), info


def _iteration_cap(A: SparseOperator) -> int:
    """50 sqrt(kappa) with a crude condition estimate (diameter/h)^2 * log."""
    per_axis = max(A.n ** (1.0 / A.dimension), 2.0)
    kappa = 4.0 * A.dimension * per_axis**2 * max(1.0, math.log(per_axis))
    return max(200, int(50 * math.sqrt(kappa)))


@dataclass(eq=False)
class Field:
    values: np.ndarray
    mesh: Mesh | None = None
    iterations: int = 0
    residual: float = 0.0

    @cached_property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def min(self) -> float:
        return float(np.min(self.values))


def solve_torsion(A: SparseOperator, mesh: Mesh | None = None, tol: float = 1e-10, precond="auto") -> Field:
    """Solve S u = W 1, i.e. -Laplace u = 1 with the mixed boundary data."""
    if not A.has_dirichlet:
        raise SolverError("torsion problem is singular without Dirichlet nodes")
    if not tol > 0:
        raise ValueError("tol must be positive")
    cap = _iteration_cap(A)
    u, info = pcg(A.matrix, A.weights.copy(), tol=tol, maxiter=cap, precond=precond)
    if not info.converged:
        raise ConvergenceError(
            f"CG did not reach {tol:g} within {cap} iterations (residual {info.residual:.3g})",
            info.iterations,
            info.residual,
        )
    return Field(values=u, mesh=mesh, iterations=info.iterations, residual=info.residual)


@dataclass(eq=False)
class EigenPair:
    value: float
    vector: np.ndarray  # normalised in the discrete L2 norm, sum positive
    residual: float
    iterations: int

    def __iter__(self):
        return iter((self.value, self.vector))


def _wnorm(A: SparseOperator, v):
    return math.sqrt(A.cell_volume * float(v @ (A.weights * v)))


def _residual_norm(A: SparseOperator, lam, v):
    """||W^{-1}(S v - lam W v)|| in the discrete L2 norm, v normalised."""
    r = A.matrix @ v - lam * (A.weights * v)
    return float(np.sqrt(A.cell_volume * np.sum(r * r / A.weights)))


def smallest_eigenpair(
    A: SparseOperator,
    mesh: Mesh | None = None,
    tol: float = 1e-8,
    x0: np.ndarray | None = None,
    cg_tol: float = 1e-10,
    maxiter: int = 200,
    precond="auto",
) -> EigenPair:
    """Smallest eigenvalue of W^{-1} S by inverse iteration (shift 0)."""
    if not A.has_dirichlet:
        raise SolverError("smallest_eigenpair needs Dirichlet nodes; use neumann_spectrum")
    M = _preconditioner(A.matrix, precond)
    cap = _iteration_cap(A)
    x = np.ones(A.n) if x0 is None else np.array(x0, dtype=float)
    x /= _wnorm(A, x)
    lam = A.rayleigh_quotient(x)
    res = _residual_norm(A, lam, x)
    for it in range(1, maxiter + 1):
        y, info = pcg(A.matrix, A.weights * x, x0=x / lam, tol=min(cg_tol, 0.01 * tol), maxiter=cap, precond=M)
        if not info.converged and info.residual > 1e3 * cg_tol:
            raise ConvergenceError(f"inner CG stalled at residual {info.residual:.3g}", it, info.residual)
        x = y / _wnorm(A, y)
        lam = A.rayleigh_quotient(x)
        if lam < 0:
            raise SolverError(f"negative eigenvalue {lam}: operator is not positive definite")
        res = _residual_norm(A, lam, x)
        if res <= tol * max(1.0, lam):
            break
    else:
        raise ConvergenceError(f"inverse iteration did not converge (residual {res:.3g})", maxiter, res)
    if np.sum(A.weights * x) < 0:
        x = -x
    return EigenPair(value=float(lam), vector=x, residual=res, iterations=it)


@dataclass(eq=False)
class EigenDecomposition:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # (n, k), orthonormal in the discrete L2 product
    residuals: np.ndarray
    weights: np.ndarray
    cell_volume: float
    full: bool = False
    mesh: Mesh | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return int(self.values.size)

    @property
    def mass(self) -> np.ndarray:
        return self.weights * self.cell_volume

    def orthogonality_error(self) -> float:
        G = self.vectors.T @ (self.mass[:, None] * self.vectors)
        return float(np.max(np.abs(G - np.eye(self.k))))

    def clusters(self, rtol: float = 1e-6) -> list[list[int]]:
        """Group indices of eigenvalues within ``rtol`` (relative) of each other.

        Values below rtol * max|lambda| count as zero, so a zero eigenvalue
        carrying round-off still forms a single cluster with its partners.
        """
        lam = self.values
        floor = rtol * max(1.0, float(np.max(np.abs(lam))))
        groups = [[0]]
        for i in range(1, lam.size):
            a, b = lam[i - 1], lam[i]
            if abs(b - a) <= max(rtol * max(abs(a), abs(b)), floor):
                groups[-1].append(i)
            else:
                groups.append([i])
        return groups

    def zero_cluster_size(self, rtol: float = 1e-6) -> int:
        floor = rtol * max(1.0, float(np.max(np.abs(self.values))))
        return int(np.sum(np.abs(self.values) <= floor))

    def first_nonzero(self, rtol: float = 1e-6) -> float:
        z = self.zero_cluster_size(rtol)
        if z >= self.k:
            raise SolverError("no non-zero eigenvalue among the computed pairs")
        return float(self.values[z])


def full_spectrum(A: SparseOperator, mesh: Mesh | None = None) -> EigenDecomposition:
    """Complete decomposition by a dense symmetric eigensolver (n <= 4000)."""
    if A.n > FULL_LIMIT:
        raise SolverError(f"full decomposition is limited to n <= {FULL_LIMIT}, got {A.n}")
    s = 1.0 / np.sqrt(A.weights)
    C = A.matrix.toarray() * s[:, None] * s[None, :]
    lam, V = sla.eigh(C)
    psi = V * s[:, None] / math.sqrt(A.cell_volume)
    # constant-sign convention: positive weighted sum
    signs = np.sign(np.sum(A.weights[:, None] * psi, axis=0))
    signs[signs == 0] = 1.0
    psi *= signs
    res = np.array([_residual_norm(A, lam[j], psi[:, j]) for j in range(min(A.n, 64))])
    res = np.concatenate([res, np.full(A.n - res.size, np.nan)])
    return EigenDecomposition(lam, psi, res, A.weights.copy(), A.cell_volume, full=True, mesh=mesh)


def lowest_eigenpairs(
    A: SparseOperator,
    k: int,
    mesh: Mesh | None = None,
    tol: float = 1e-8,
    guard: int | None = None,
    shift: float | None = None,
    cg_tol: float = 1e-10,
    maxiter: int = 500,
    seed: int = 0,
    precond="auto",
) -> EigenDecomposition:
    """k lowest pairs by block inverse iteration on S + shift*W.

    Rayleigh-Ritz on the whole block each sweep.  Leading pairs that have
    converged are locked: they are no longer iterated, and the remaining
    block is kept W-orthogonal to them.
    """
    n = A.n
    if k > n:
        raise SolverError(f"asked for {k} eigenpairs of a {n}-dimensional operator")
    p = min(n, k + (guard if guard is not None else max(4, k)))
    if shift is None:
        # singular S needs a positive shift; keep it at the scale of the low spectrum
        shift = 0.0 if A.has_dirichlet else 1.0 / (A.h * A.n ** (1.0 / A.dimension)) ** 2
    Ash = (A.matrix + shift * _diag(A.weights)).tocsr()
    M = _preconditioner(Ash, precond)
    cap = _iteration_cap(A)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    X[:, 0] = 1.0
    X = _w_orthonormalize(A, X)
    lam = np.zeros(p)
    res = np.full(p, np.inf)
    locked = 0
    for it in range(1, maxiter + 1):
        free = X[:, locked:]
        guess = free / (lam[locked:] + shift)[None, :] if it > 1 else None
        Y, info = pcg(Ash, A.weights[:, None] * free, x0=guess, tol=min(cg_tol, 0.01 * tol), maxiter=cap, precond=M)
        # deflation: locked vectors stay first, the new block is orthogonalised against them
        Y = _w_orthonormalize(A, np.column_stack([X[:, :locked], Y]))
        Sy = A.cell_volume * (Y.T @ (A.matrix @ Y))
        lam, V = sla.eigh(0.5 * (Sy + Sy.T))
        X = Y @ V
        R = A.matrix @ X - (A.weights[:, None] * X) * lam[None, :]
        res = np.sqrt(A.cell_volume * np.sum(R * R / A.weights[:, None], axis=0))
        ok = res <= tol * np.maximum(1.0, np.abs(lam))
        if ok[:k].all():
            break
        locked = int(np.argmin(ok)) if not ok.all() else p
        locked = min(locked, k - 1)
    else:
        raise ConvergenceError(f"block inverse iteration did not converge (residuals {res[:k]})", maxiter)
    X = X[:, :k]
    signs = np.sign(np.sum(A.weights[:, None] * X, axis=0))
    signs[signs == 0] = 1.0
    X = X * signs
    log.debug("block inverse iteration: %d sweeps", it)
    return EigenDecomposition(lam[:k].copy(), X, res[:k].copy(), A.weights.copy(), A.cell_volume, mesh=mesh)


def neumann_spectrum(
    A: SparseOperator, mesh: Mesh | None = None, k: int = 4, tol: float = 1e-8, full: bool = False, **kw
) -> EigenDecomposition:
    """Lowest k eigenpairs of the pure Neumann operator (or all of them with ``full``)."""
    if A.has_dirichlet:
        raise SolverError("neumann_spectrum expects an operator without Dirichlet nodes")
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > A.n:
        raise SolverError(f"k={k} exceeds operator size {A.n}")
    if full:
        return full_spectrum(A, mesh)
    return lowest_eigenpairs(A, k, mesh=mesh, tol=tol, **kw)


def _diag(w):
    return sp.diags(w)


def _w_orthonormalize(A: SparseOperator, X):
    """Orthonormalise columns in the discrete L2 product via weighted QR."""
    s = np.sqrt(A.weights * A.cell_volume)
    Q, _ = np.linalg.qr(X * s[:, None])
    return Q / s[:, None]
