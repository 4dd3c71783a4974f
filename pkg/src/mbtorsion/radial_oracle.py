"""Reference solutions for a ball obstacle centred in a ball domain.

Torsion functions are closed form.  The principal mixed eigenvalue is the
lowest eigenvalue of

    -(r^{m-1} u')' / r^{m-1} = lambda u   on (a, R),  u(a) = 0,  u'(R) = 0,

discretised in the log-radius s = ln r, where the problem becomes

    -(e^{(m-2)s} u_s)_s = lambda e^{ms} u.

A uniform grid in s resolves the boundary layer at tiny inner radii (a down
to 1e-8 works).  The symmetric tridiagonal pencil is solved by inverse
iteration with a banded Cholesky factorisation, which keeps relative
accuracy in the small eigenvalue although the matrix entries span many
orders of magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class RadialConfig:
    m: int
    inner: float  # Dirichlet radius eps * R_K
    outer: float  # Neumann radius R
    N: int = 4000

    def __post_init__(self):
        if self.m < 2:
            raise OracleError("dimension must be at least 2")
        if not 0 < self.inner < self.outer:
            raise OracleError(f"need 0 < inner < outer, got {self.inner}, {self.outer}")
        if self.N < 1000:
            raise OracleError(f"N={self.N} is too small for eigenvalue runs (need >= 1000)")


def _check_radii(eps_r, R):
    if not 0 < eps_r < R:
        raise OracleError(f"need 0 < eps_r < R, got {eps_r}, {R}")


def torsion_annulus_2d(eps_r: float, R: float = 1.0):
    """Closed-form torsion function of the annulus and its sup (attained at r = R)."""
    _check_radii(eps_r, R)

    def u(r):
        r = np.asarray(r, dtype=float)
        return 0.5 * R**2 * np.log(r / eps_r) - (r**2 - eps_r**2) / 4.0

    return u, float(u(R))


def torsion_shell_3d(eps_r: float, R: float = 1.0):
    """Closed-form torsion function of the spherical shell and its sup."""
    _check_radii(eps_r, R)

    def u(r):
        r = np.asarray(r, dtype=float)
        return R**3 / (3 * eps_r) + eps_r**2 / 6 - R**3 / (3 * r) - r**2 / 6

    return u, float(u(R))


def torsion_sup(m: int, eps_r: float, R: float = 1.0) -> float:
    if m == 2:
        return torsion_annulus_2d(eps_r, R)[1]
    if m == 3:
        return torsion_shell_3d(eps_r, R)[1]
    raise OracleError(f"closed-form torsion only for m = 2, 3 (got {m})")


def _smallest_pencil(cond, mass, pot=None, tol=1e-15, maxiter=100):
    """Smallest eigenvalue of a radial pencil with a Dirichlet node at index 0.

    ``cond[i]`` couples nodes i and i+1 (node 0 is the Dirichlet node, so the
    unknowns are nodes 1..len(cond)); ``mass`` and ``pot`` live on the
    unknowns.  The Rayleigh quotient is evaluated in energy form, sum of
    cond * (jump)^2, which avoids cancellation between large stencil entries.
    """
    pot = np.zeros_like(mass) if pot is None else pot
    diag = cond.copy()
    diag[:-1] += cond[1:]
    diag += pot
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = -cond[1:]
    ab[1] = diag
    x = np.ones(diag.size)
    lam = np.inf
    for _ in range(maxiter):
        y = solveh_banded(ab, mass * x, lower=False)
        y /= math.sqrt(float(y @ (mass * y)))
        jumps = np.diff(y, prepend=0.0)
        new = float(cond @ (jumps * jumps) + pot @ (y * y))
        x = y
        if abs(new - lam) <= tol * new:
            return new
        lam = new
    return lam


def _log_grid_eigen(m: int, a: float, R: float, N: int) -> float:
    s0, s1 = math.log(a), math.log(R)
    ds = (s1 - s0) / N
    s = s0 + ds * np.arange(N + 1)
    cond = np.exp((m - 2) * (s[:-1] + 0.5 * ds)) / ds
    mass = np.exp(m * s) * ds
    mass[-1] *= 0.5
    return _smallest_pencil(cond, mass[1:])


def radial_eigen(cfg: RadialConfig, extrapolate: bool = True) -> float:
    """Principal mixed eigenvalue of the concentric configuration.

    With ``extrapolate`` the N and 2N values are combined by Richardson's
    rule (4 lam_2N - lam_N) / 3.
    """
    lam_n = _log_grid_eigen(cfg.m, cfg.inner, cfg.outer, cfg.N)
    if not extrapolate:
        return lam_n
    lam_2n = _log_grid_eigen(cfg.m, cfg.inner, cfg.outer, 2 * cfg.N)
    return (4.0 * lam_2n - lam_n) / 3.0


def ball_neumann_mode(m: int, R: float = 1.0, ell: int = 1, N: int = 4000, extrapolate: bool = True) -> float:
    """Lowest Neumann eigenvalue of the ball B(0;R) in angular sector ``ell`` >= 1.

    For ell = 1 this is the first non-zero Neumann eigenvalue of the ball
    (3.3900 for the unit disk, 4.3330 for the unit ball in R^3).
    """
    if ell < 1:
        raise OracleError("ell must be >= 1 (ell = 0 starts with the constant mode)")

    def solve(n):
        dr = R / n
        r = dr * np.arange(n + 1)
        edges = np.concatenate([[0.0], r[:-1] + 0.5 * dr, [R]])  # dual cell of node i
        cond = (r[:-1] + 0.5 * dr) ** (m - 1) / dr
        mass = (edges[1:] ** m - edges[:-1] ** m) / m
        # exact dual-cell integral of ell(ell+m-2) r^(m-3)
        lo, hi = edges[1:-1], edges[2:]
        if m == 2:
            pot = ell**2 * np.log(hi / lo)
        else:
            pot = ell * (ell + m - 2) * (hi ** (m - 2) - lo ** (m - 2)) / (m - 2)
        return _smallest_pencil(cond, mass[1:], pot)

    lam_n = solve(N)
    if not extrapolate:
        return lam_n
    return (4.0 * solve(2 * N) - lam_n) / 3.0


def oracle_point(m: int, eps_r: float, R: float = 1.0, N: int = 4000) -> tuple[float, float, float]:
    """(lambda, sup u, lambda * sup u) for inner radius eps_r and outer radius R."""
    lam = radial_eigen(RadialConfig(m, eps_r, R, N))
    sup = torsion_sup(m, eps_r, R)
    return lam, sup, lam * sup
