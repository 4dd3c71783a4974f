"""Heat kernels built from a complete eigen-decomposition.

    pi(x, y; t) = sum_k exp(-lambda_k t) psi_k(x) psi_k(y)

with psi_k orthonormal for <u, v> = sum_i m_i u_i v_i, m_i = h^m W_i the
node measures.  For a full decomposition this is exactly the kernel of
exp(-t W^{-1} S) with respect to the node measures, so semigroup, mass and
trace identities hold to round-off.  Modes with exp(-lambda t) below 1e-20
are dropped from sums; they cannot change any entry by more than 1e-15.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .operators import SparseOperator
from .solvers import EigenDecomposition, full_spectrum

log = logging.getLogger(__name__)

_NEGLIGIBLE = 1e-20
_BLOCK = 512  # rows per block in pair scans


class HeatKernelError(ValueError):
    pass


@dataclass(frozen=True)
class PHPConstants:
    t1: float
    c1: float
    c2: float


@dataclass(frozen=True, eq=False)
class HeatKernel:
    decomposition: EigenDecomposition
    mixed: bool  # Dirichlet obstacle present (lambda_0 > 0)

    @classmethod
    def from_operator(cls, A: SparseOperator, mesh: Mesh | None = None) -> "HeatKernel":
        return cls(full_spectrum(A, mesh), mixed=A.has_dirichlet)

    @property
    def values(self) -> np.ndarray:
        return self.decomposition.values

    @property
    def vectors(self) -> np.ndarray:
        return self.decomposition.vectors

    @property
    def mass(self) -> np.ndarray:
        return self.decomposition.mass

    @property
    def volume(self) -> float:
        """|D_h|, the total node measure."""
        return float(self.mass.sum())

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def spectral_gap(self) -> float:
        """mu: first non-zero eigenvalue (Neumann kernels only)."""
        if self.mixed:
            raise HeatKernelError("spectral gap is defined for Neumann kernels")
        return self.decomposition.first_nonzero()

    def _modes(self, t: float):
        if not t > 0:
            raise HeatKernelError(f"time must be positive, got {t}")
        decay = np.exp(-self.values * t)
        keep = decay >= _NEGLIGIBLE
        return decay[keep], self.vectors[:, keep]

    def matrix(self, t: float, rows=None) -> np.ndarray:
        """pi(x, y; t) for x in ``rows`` (all nodes by default) and all y."""
        decay, V = self._modes(t)
        Vr = V if rows is None else V[rows]
        return (Vr * decay) @ V.T

    def diagonal(self, t: float) -> np.ndarray:
        decay, V = self._modes(t)
        return (V * V) @ decay

    def evolve(self, f: np.ndarray, t: float) -> np.ndarray:
        """(P_t f)(x) = sum_y pi(x, y; t) f(y) m_y."""
        decay, V = self._modes(t)
        return V @ (decay * (V.T @ (self.mass * f)))

    def trace(self, t: float) -> float:
        if not t > 0:
            raise HeatKernelError(f"time must be positive, got {t}")
        return float(np.sum(np.exp(-self.values * t)))


def kernel_eval(hk: HeatKernel, x: int, y: int, t: float) -> float:
    decay, V = hk._modes(t)
    return float(np.sum(decay * V[x] * V[y]))


def php_deficit(hk: HeatKernel, t: float) -> float:
    """max over node pairs of |pi(x, y; t) - 1/|D||."""
    if hk.mixed:
        raise HeatKernelError("the PHP deficit is defined for Neumann kernels only")
    if not hk.decomposition.full:
        raise HeatKernelError("the pair scan needs a full decomposition")
    decay, V = hk._modes(t)
    inv_vol = 1.0 / hk.volume
    worst = 0.0
    for start in range(0, hk.n, _BLOCK):
        block = (V[start : start + _BLOCK] * decay) @ V.T
        worst = max(worst, float(np.max(np.abs(block - inv_vol))))
    return worst


def deficit_floor(hk: HeatKernel, labels: np.ndarray) -> float:
    """Large-time limit of the deficit for a domain split into components.

    The kernel tends to 1/|C| on C x C and to 0 across components, so the
    limit is max(max_C |1/|C| - 1/|D||, 1/|D| if there are two or more).
    """
    vol = hk.volume
    comps = np.unique(labels)
    sizes = [float(hk.mass[labels == c].sum()) for c in comps]
    floor = max(abs(1.0 / s - 1.0 / vol) for s in sizes)
    if comps.size > 1:
        floor = max(floor, 1.0 / vol)
    return floor


@dataclass(frozen=True)
class InequalityReport:
    checked: int
    max_violation: float  # largest lhs - rhs; <= slack means the inequality holds
    slack: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.slack


def _slack(hk: HeatKernel, t: float) -> float:
    return 1e-12 * max(1.0, float(np.max(np.abs(hk.diagonal(t)))))


def check_cauchy_schwarz(hk: HeatKernel, samples: int, t: float, rng=None) -> InequalityReport:
    """pi(x, y; t) <= sqrt(pi(x, x; t) pi(y, y; t)) on random node pairs."""
    rng = np.random.default_rng(rng)
    x = rng.integers(0, hk.n, samples)
    y = rng.integers(0, hk.n, samples)
    decay, V = hk._modes(t)
    off = np.einsum("ik,ik,k->i", V[x], V[y], decay)
    diag = hk.diagonal(t)
    viol = off - np.sqrt(np.maximum(diag[x] * diag[y], 0.0))
    return InequalityReport(samples, float(viol.max(initial=-np.inf)), _slack(hk, t))


def check_spectral_decay(hk: HeatKernel, x: int, t: float, delta: float) -> InequalityReport:
    """pi(x, x; t) <= exp(-delta t lambda_0) pi(x, x; (1 - delta) t)."""
    if not hk.mixed:
        raise HeatKernelError("spectral decay needs a mixed kernel (lambda_0 > 0)")
    if not 0 < delta < 1:
        raise HeatKernelError(f"delta must lie in (0, 1), got {delta}")
    lhs = kernel_eval(hk, x, x, t)
    rhs = math.exp(-delta * t * hk.values[0]) * kernel_eval(hk, x, x, (1 - delta) * t)
    return InequalityReport(1, lhs - rhs, _slack(hk, (1 - delta) * t))


def fit_php_constants(hk: HeatKernel, t_grid, rel_tol: float = 0.05) -> PHPConstants:
    """Fit deficit(t) ~ c1 exp(-c2 t) over ``t_grid``.

    c2 and a first c1 come from least squares on log deficit.  t1 is the
    smallest grid time whose relative fit residual is below ``rel_tol``.
    c1 is then raised, if needed, so that c1 exp(-c2 t) bounds the deficit
    at every grid time t >= t1.
    """
    if hk.mixed:
        raise HeatKernelError("PHP constants are defined for Neumann kernels")
    if hk.decomposition.zero_cluster_size() > 1:
        raise HeatKernelError("disconnected domain: the deficit does not decay, no PHP fit")
    t = np.sort(np.asarray(t_grid, dtype=float))
    if t.size < 3 or t[0] <= 0:
        raise HeatKernelError("need at least three positive times")
    d = np.array([php_deficit(hk, s) for s in t])
    slope, intercept = np.polyfit(t, np.log(d), 1)
    c2 = -slope
    if not c2 > 0:
        raise HeatKernelError("the deficit does not decay on this time grid")
    fit = np.exp(intercept - c2 * t)
    good = np.abs(d / fit - 1.0) < rel_tol
    if not good.any():
        raise HeatKernelError("fit residual stays above tolerance on the whole grid")
    first = int(np.argmax(good))
    c1 = max(math.exp(intercept), float(np.max(d[first:] * np.exp(c2 * t[first:]))))
    return PHPConstants(t1=float(t[first]), c1=c1, c2=float(c2))


@dataclass(frozen=True)
class TraceBracket:
    trace: float
    lower: float
    upper: float

    @property
    def passed(self) -> bool:
        return self.lower <= self.trace <= self.upper

    def __iter__(self):
        return iter((self.trace, self.lower, self.upper))


def trace_bound(hk: HeatKernel, t: float, constants: PHPConstants) -> TraceBracket:
    """1 + exp(-t mu) <= sum_k exp(-lambda_k t) <= 1 + c1 |D| exp(-c2 t)."""
    if hk.mixed:
        raise HeatKernelError("the trace bracket is stated for Neumann kernels")
    if t < constants.t1 * (1 - 1e-12):
        raise HeatKernelError(f"t={t} is below the fitted t1={constants.t1}")
    mu = hk.spectral_gap
    return TraceBracket(
        trace=hk.trace(t),
        lower=1.0 + math.exp(-t * mu),
        upper=1.0 + constants.c1 * hk.volume * math.exp(-constants.c2 * t),
    )


def semigroup_defect(hk: HeatKernel, s: float, t: float) -> float:
    """max |sum_z pi(x, z; s) pi(z, y; t) m_z - pi(x, y; s + t)|."""
    Ps, Pt = hk.matrix(s), hk.matrix(t)
    return float(np.max(np.abs((Ps * hk.mass) @ Pt - hk.matrix(s + t))))


def mass_defect(hk: HeatKernel, t: float) -> float:
    """max_x |sum_y pi(x, y; t) m_y - 1|."""
    return float(np.max(np.abs(hk.evolve(np.ones(hk.n), t) - 1.0)))


def integrated_mass(hk: HeatKernel, t: float) -> np.ndarray:
    """sum_y pi(x, y; t) m_y for every x; at most 1 for a mixed kernel."""
    return hk.evolve(np.ones(hk.n), t)


def indicator_defect(hk: HeatKernel, labels: np.ndarray, component: int, t: float) -> float:
    """max |P_t 1_C - 1_C| for the component C with the given label."""
    ind = (labels == component).astype(float)
    return float(np.max(np.abs(hk.evolve(ind, t) - ind)))


def pointwise_comparison(mixed: HeatKernel, neumann: HeatKernel, t: float) -> float:
    """min over shared node pairs of pi_D - pi_{K,D}; logged, not asserted.

    Both kernels must carry their meshes, built with the same D and h.
    """
    mm, mn = mixed.decomposition.mesh, neumann.decomposition.mesh
    if mm is None or mn is None:
        raise HeatKernelError("pointwise comparison needs kernels built with meshes")
    index = {tuple(k): i for i, k in enumerate(np.rint(mn.coordinates() / mn.h).astype(int))}
    shared = np.array([index[tuple(k)] for k in np.rint(mm.coordinates() / mm.h).astype(int)])
    gap = np.inf
    for start in range(0, mixed.n, _BLOCK):
        rows = np.arange(start, min(start + _BLOCK, mixed.n))
        pd = neumann.matrix(t, rows=shared[rows])[:, shared]
        gap = min(gap, float(np.min(pd - mixed.matrix(t, rows=rows))))
    log.info("pointwise kernel comparison at t=%g: min(pi_D - pi_KD) = %.3e", t, gap)
    return gap
