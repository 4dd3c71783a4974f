"""Newtonian capacity in R^m, m >= 3, normalised as the Dirichlet energy

    cap(K) = integral over R^m \\ K of |grad phi_K|^2,

where phi_K is the equilibrium potential (1 on K, harmonic outside, 0 at
infinity).  For a ball this gives (m-2) |S^{m-1}| R^{m-2}, e.g. 4 pi R in
R^3.  The planar case has no Newtonian capacity; it is handled by the
cylinder (method of descent) check at the bottom of this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import (
    DomainSpec,
    GeometryError,
    ObstacleSpec,
    circumradius,
    contains,
    crossing_fraction,
    measure,
)
from .mesh import build_mesh
from .operators import MIN_FRACTION, assemble, tensor_cylinder
from .solvers import ConvergenceError, pcg, smallest_eigenpair


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class CapacityResult:
    value: float
    method: str  # analytic-ball | ellipsoid-asymptotic | prolate-spheroid | variational
    box_radius: float | None = None
    h: float | None = None
    extrapolated: float | None = None
    runs: tuple = field(default=(), repr=False)  # (box_radius, value) per truncation


def sphere_area(m: int) -> float:
    """Surface area of the unit sphere in R^m."""
    return 2.0 * math.pi ** (m / 2) / math.gamma(m / 2)


def capacity_ball(R: float, m: int) -> CapacityResult:
    if m < 3:
        raise CapacityError("Newtonian capacity needs m >= 3; use the descent check for m = 2")
    if not R > 0:
        raise CapacityError("radius must be positive")
    return CapacityResult((m - 2) * sphere_area(m) * R ** (m - 2), "analytic-ball")


def equilibrium_potential_ball(x, R: float, m: int):
    """min{1, (R/|x|)^{m-2}} for a point or an array of points (last axis = coordinates)."""
    if m < 3:
        raise CapacityError("equilibrium potential of this form needs m >= 3")
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    with np.errstate(divide="ignore"):
        out = np.where(r <= R, 1.0, (R / np.where(r > 0, r, 1.0)) ** (m - 2))
    return float(out) if np.ndim(out) == 0 else out


def capacity_ellipsoid_asymptotic(Rp: float, hp: float) -> CapacityResult:
    """Slender prolate spheroid, cross-section radius Rp and axis length hp:
    2 pi hp / log(hp / Rp), leading order only."""
    if not (Rp > 0 and hp > 0):
        raise CapacityError("lengths must be positive")
    if hp / Rp < 10:
        raise CapacityError(f"not slender: hp/Rp = {hp / Rp:.3g} < 10")
    return CapacityResult(2.0 * math.pi * hp / math.log(hp / Rp), "ellipsoid-asymptotic")


def capacity_prolate_spheroid(Rp: float, hp: float) -> CapacityResult:
    """Exact capacity of the prolate spheroid with semi-axes hp/2 > Rp."""
    a, b = hp / 2.0, Rp
    if not a > b > 0:
        raise CapacityError("need hp/2 > Rp > 0")
    c = math.sqrt(a * a - b * b)
    return CapacityResult(4.0 * math.pi * c / math.acosh(a / b), "prolate-spheroid")


def ellipsoid_enclosure(eps: float, alpha: float, R: float, h: float):
    """Axes chosen to enclose B(0; eps R) x (0, h) and the enclosure quantity.

    Returns (R', h', q) with R' = eps^{-alpha} eps R, h' = (1 - eps^{2 alpha})^{-1/2} h
    and q = h^2/h'^2 + (eps R)^2/R'^2, which must not exceed 1.
    """
    if not (0 < eps < 1 and 0 < alpha < 1):
        raise CapacityError("need eps and alpha in (0, 1)")
    Rp = eps ** (-alpha) * eps * R
    hp = h / math.sqrt(1.0 - eps ** (2 * alpha))
    return Rp, hp, h**2 / hp**2 + (eps * R) ** 2 / Rp**2


def _graded_axis(inner: float, h: float, box_radius: float, growth: float) -> np.ndarray:
    """Nodes 0 = x_0 < ... with spacing h up to ``inner``, then geometric growth.

    The sequence does not depend on ``box_radius`` except through where it
    stops, so grids for different truncations are nested.
    """
    n_uniform = int(math.ceil(inner / h - 1e-9))
    xs = list(h * np.arange(n_uniform + 1))
    dx = h
    while xs[-1] < box_radius * (1 - 1e-12):
        dx *= growth
        xs.append(xs[-1] + dx)
    return np.asarray(xs)


def _solve_truncated(K: ObstacleSpec, box_radius: float, h: float, growth: float, octant: bool, tol: float):
    m = K.dimension
    half_axis = _graded_axis(circumradius(K) + 4 * h, h, box_radius, growth)
    B = float(half_axis[-1])
    axis = half_axis if octant else np.concatenate([-half_axis[:0:-1], half_axis])
    n1 = axis.size
    dx = np.diff(axis)
    dual = np.zeros(n1)
    dual[:-1] += dx / 2
    dual[1:] += dx / 2  # at x = 0 in the octant this is the half cell of the mirror plane

    shape = (n1,) * m
    grids = np.meshgrid(*([axis] * m), indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, m)
    in_k = np.asarray(contains(K, pts, atol=1e-9 * h))
    outer = np.zeros(shape, dtype=bool)
    for a in range(m):
        sl = [slice(None)] * m
        sl[a] = -1
        outer[tuple(sl)] = True
        if not octant:
            sl[a] = 0
            outer[tuple(sl)] = True
    outer = outer.ravel() & ~in_k
    free = ~in_k & ~outer
    idx = np.full(pts.shape[0], -1)
    idx[free] = np.arange(int(free.sum()))
    flat = np.arange(pts.shape[0]).reshape(shape)

    edges = []  # (p, q, conductance)
    for a in range(m):
        lo = np.take(flat, np.arange(n1 - 1), axis=a).ravel()
        hi = np.take(flat, np.arange(1, n1), axis=a).ravel()
        cond = np.ones(lo.size)
        for b in range(m):
            coord = np.unravel_index(lo, shape)[b]
            cond *= (1.0 / dx[coord]) if b == a else dual[coord]
        # shorten edges that cross the obstacle boundary
        cut = in_k[lo] ^ in_k[hi]
        if cut.any():
            out_pt = np.where(in_k[lo[cut]], hi[cut], lo[cut])
            in_pt = np.where(in_k[lo[cut]], lo[cut], hi[cut])
            t = crossing_fraction(K, pts[out_pt], pts[in_pt])
            cond[cut] /= np.maximum(t, MIN_FRACTION)
        edges.append((lo, hi, cond))
    p = np.concatenate([e[0] for e in edges])
    q = np.concatenate([e[1] for e in edges])
    c = np.concatenate([e[2] for e in edges])

    nf = int(free.sum())
    fp, fq = free[p], free[q]
    both = fp & fq
    diag = np.zeros(nf)
    np.add.at(diag, idx[p[fp]], c[fp])
    np.add.at(diag, idx[q[fq]], c[fq])
    rhs = np.zeros(nf)
    # phi = 1 on obstacle nodes, 0 on the truncation faces
    sel = fp & in_k[q]
    np.add.at(rhs, idx[p[sel]], c[sel])
    sel = fq & in_k[p]
    np.add.at(rhs, idx[q[sel]], c[sel])
    S = sp.csr_matrix(
        (
            np.concatenate([-c[both], -c[both], diag]),
            (
                np.concatenate([idx[p[both]], idx[q[both]], np.arange(nf)]),
                np.concatenate([idx[q[both]], idx[p[both]], np.arange(nf)]),
            ),
        ),
        shape=(nf, nf),
    )
    phi_f, info = pcg(S, rhs, tol=tol, maxiter=50_000, precond="amg" if nf > 50_000 else "jacobi")
    if not info.converged:
        raise ConvergenceError(f"capacity solve stalled at residual {info.residual:.3g}")
    phi = in_k.astype(float)
    phi[free] = phi_f
    energy = float(np.sum(c * (phi[p] - phi[q]) ** 2))
    return energy * (2**m if octant else 1), B


def capacity_variational(
    K: ObstacleSpec,
    box_radius: float,
    h: float,
    growth: float = 1.1,
    tol: float = 1e-10,
) -> CapacityResult:
    """Discrete Dirichlet energy of the truncated equilibrium potential.

    phi = 1 on obstacle nodes, 0 on the faces of the cube [-B, B]^m, discrete
    harmonic in between, on a tensor grid with spacing h near K and
    geometrically growing spacing further out.  The problem is solved for B
    and 2B; since the truncation error falls off like 1/B the two values are
    combined into the extrapolated estimate.  Obstacles centred at the origin
    use the octant with mirror planes.
    """
    m = K.dimension
    if m < 3:
        raise CapacityError("variational capacity needs m >= 3")
    rk = circumradius(K)
    if rk > box_radius / 2:
        raise CapacityError(f"box too small: need K inside B(0; {box_radius / 2}), R_K = {rk}")
    if h > rk / 4:
        raise CapacityError(f"obstacle under-resolved: h={h} > R_K/4={rk / 4}")
    octant = not any(K.center)
    v1, b1 = _solve_truncated(K, box_radius, h, growth, octant, tol)
    v2, b2 = _solve_truncated(K, 2 * box_radius, h, growth, octant, tol)
    extrapolated = (b2 * v2 - b1 * v1) / (b2 - b1)
    return CapacityResult(v1, "variational", b1, h, extrapolated, ((b1, v1), (b2, v2)))


def rayleigh_trial_bound(K: ObstacleSpec, D: DomainSpec, R: float | None = None) -> float:
    """Upper bound for lambda(K, D) from the trial function 1 - phi_K.

    cap(K)/|D| * (1 - (|B(0;R)|/|D|)^{(m-2)/(2(m-1))})^{-3}, for a ball K
    inside B(0; R).  R defaults to the circumradius of K.
    """
    m = K.dimension
    if m < 3:
        raise CapacityError("the trial bound needs m >= 3")
    if K.kind != "ball":
        raise CapacityError("the trial bound is implemented for ball obstacles")
    if D.dimension != m:
        raise GeometryError("domain and obstacle dimensions differ")
    rk = circumradius(K)
    R = rk if R is None else float(R)
    if rk > R * (1 + 1e-12):
        raise CapacityError(f"K is not inside B(0; {R})")
    ratio = (sphere_area(m) / m) * R**m / measure(D)
    if ratio >= 1:
        raise CapacityError("|B(0;R)| >= |D|: the bound is vacuous")
    alpha = ratio ** ((m - 2) / (2 * (m - 1)))
    cap = capacity_ball(K.lengths[0], m).value
    return cap / measure(D) * (1.0 - alpha) ** -3


def trial_alpha(ratio: float, m: int) -> float:
    """Closed-form root of alpha = alpha^{-m/(m-2)} * ratio."""
    return ratio ** ((m - 2) / (2 * (m - 1)))


@dataclass
class DescentReport:
    lam_2d: float
    lam_3d: float
    height: float
    n_2d: int
    n_3d: int

    @property
    def difference(self) -> float:
        return abs(self.lam_2d - self.lam_3d)

    @property
    def passed(self) -> bool:
        return self.difference <= 1e-10


def descent_check(
    D2: DomainSpec, K2: ObstacleSpec, h_cyl: float, mesh_h: float, tol: float = 1e-9
) -> DescentReport:
    """Compare the planar mixed eigenvalue with that of the cylinder over it.

    The cylinder (D2 minus K2) x (0, h_cyl) has Neumann top and bottom, so its
    lowest eigenvalue equals the planar one.
    """
    if K2 is None:
        raise CapacityError("descent check needs an obstacle (both eigenvalues vanish otherwise)")
    if D2.dimension != 2 or K2.dimension != 2:
        raise CapacityError("descent check takes planar D and K")
    steps = h_cyl / mesh_h
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise CapacityError(f"cylinder height {h_cyl} is not resolved by h = {mesh_h}")
    mesh = build_mesh(D2, K2, mesh_h)
    A2 = assemble(mesh)
    A3 = tensor_cylinder(A2, h_cyl)
    lam2 = smallest_eigenpair(A2, mesh, tol=tol).value
    lam3 = smallest_eigenpair(A3, tol=tol).value
    return DescentReport(lam2, lam3, h_cyl, A2.n, A3.n)
