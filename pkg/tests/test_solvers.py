import math

import numpy as np
import pytest

from mbtorsion.geometry import DomainSpec, ObstacleSpec, scale_obstacle
from mbtorsion.mesh import build_mesh
from mbtorsion.operators import assemble
from mbtorsion.radial_oracle import RadialConfig, radial_eigen, torsion_annulus_2d
from mbtorsion.solvers import (
    SolverError,
    full_spectrum,
    neumann_spectrum,
    pcg,
    smallest_eigenpair,
    solve_torsion,
)

DISK = DomainSpec("disk", (1.0,))
UNIT = ObstacleSpec("disk", (1.0,))


def annulus(eps, h):
    mesh = build_mesh(DISK, scale_obstacle(UNIT, eps), h)
    return mesh, assemble(mesh)


@pytest.fixture(scope="module")
def annulus_01():
    mesh, A = annulus(0.1, 0.1 / 8)
    u = solve_torsion(A, mesh)
    pair = smallest_eigenpair(A, mesh, x0=u.values)
    return mesh, A, u, pair


def test_torsion_matches_closed_form(annulus_01):
    _, _, u, _ = annulus_01
    exact = torsion_annulus_2d(0.1, 1.0)[1]
    assert exact == pytest.approx(0.5 * math.log(10) - 0.2475, rel=1e-12)
    assert u.sup_norm == pytest.approx(exact, rel=5e-3)


def test_torsion_positive(annulus_01):
    _, _, u, _ = annulus_01
    assert u.min > 0


def test_torsion_residual(annulus_01):
    _, A, u, _ = annulus_01
    r = A.weights - A.matrix @ u.values
    assert np.linalg.norm(r) <= 1e-9 * np.linalg.norm(A.weights)


def test_torsion_needs_dirichlet():
    mesh = build_mesh(DISK, None, 0.1)
    with pytest.raises(SolverError):
        solve_torsion(assemble(mesh), mesh)


def test_torsion_decreases_when_obstacle_grows():
    h = 0.02
    small_mesh, small = annulus(0.2, h)
    big_mesh, big = annulus(0.3, h)
    us, ub = solve_torsion(small).values, solve_torsion(big).values
    # compare on nodes active in both meshes
    key = lambda mesh: {tuple(k): i for i, k in enumerate(np.rint(mesh.coordinates() / h).astype(int))}
    ks, kb = key(small_mesh), key(big_mesh)
    shared = [(ks[k], i) for k, i in kb.items()]
    s_idx, b_idx = map(np.array, zip(*shared))
    assert np.all(ub[b_idx] <= us[s_idx])


def test_eigen_matches_oracle(annulus_01):
    _, _, _, pair = annulus_01
    ref = radial_eigen(RadialConfig(2, 0.1, 1.0))
    assert pair.value == pytest.approx(ref, rel=5e-3)


def test_eigen_certificates(annulus_01):
    _, A, u, pair = annulus_01
    assert pair.residual <= 1e-8 * max(1.0, pair.value)
    assert A.rayleigh_quotient(pair.vector) == pytest.approx(pair.value, rel=1e-12)
    assert np.sum(A.weights * pair.vector) > 0
    assert np.all(pair.vector > 0)  # Perron vector of an M-matrix pencil


def test_green_identity(annulus_01):
    _, A, u, pair = annulus_01
    lhs = u.values @ (A.matrix @ pair.vector)
    rhs = pair.vector @ (A.matrix @ u.values)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_product_lower_bound(annulus_01):
    mesh, _, u, pair = annulus_01
    h, eps = mesh.h, 0.1
    assert pair.value * u.sup_norm >= 1 - 5 * (h / eps) ** 2
    # the discrete operator is an M-matrix, so the bound holds without slack
    assert pair.value * u.sup_norm >= 1


def test_eigen_monotone_in_obstacle():
    h = 0.02
    lam = [smallest_eigenpair(annulus(e, h)[1]).value for e in (0.15, 0.3)]
    assert lam[0] < lam[1]


def test_eigen_rejects_pure_neumann():
    with pytest.raises(SolverError):
        smallest_eigenpair(assemble(build_mesh(DISK, None, 0.1)))


def test_unit_square_neumann_spectrum():
    mesh = build_mesh(DomainSpec("square", (1.0,)), None, 1 / 32)
    ed = neumann_spectrum(assemble(mesh), mesh, k=4)
    ref = np.array([0, 1, 1, 2]) * math.pi**2
    assert abs(ed.values[0]) < 1e-8
    assert np.allclose(ed.values[1:], ref[1:], rtol=1e-2)
    assert ed.orthogonality_error() <= 1e-10
    assert np.all(ed.residuals <= 1e-8 * np.maximum(1, ed.values))
    # constant eigenvector
    assert np.ptp(ed.vectors[:, 0]) < 1e-8 * np.abs(ed.vectors[0, 0])
    assert [len(c) for c in ed.clusters()] == [1, 2, 1]


def test_connected_domain_has_simple_zero():
    mesh = build_mesh(DISK, None, 1 / 16)
    ed = neumann_spectrum(assemble(mesh), mesh, k=3)
    assert ed.zero_cluster_size() == 1
    assert ed.values[1] >= 0.5 * 3.39


def test_twosquares_double_zero():
    mesh = build_mesh(DomainSpec("twosquares", (1.0, 0.5)), None, 1 / 16)
    ed = neumann_spectrum(assemble(mesh), mesh, k=3)
    assert abs(ed.values[1]) <= 1e-10
    assert ed.zero_cluster_size() == 2


def test_full_spectrum_agrees_with_iterative():
    mesh = build_mesh(DomainSpec("rect", (2.0, 0.5)), None, 1 / 16)
    A = assemble(mesh)
    full = full_spectrum(A, mesh)
    it = neumann_spectrum(A, mesh, k=4)
    assert np.allclose(full.values[:4], it.values, rtol=1e-8, atol=1e-10)
    assert full.orthogonality_error() <= 1e-10


def test_neumann_spectrum_guards():
    mesh = build_mesh(DomainSpec("square", (1.0,)), None, 0.25)
    A = assemble(mesh)
    with pytest.raises(SolverError):
        neumann_spectrum(A, mesh, k=A.n + 1)
    with pytest.raises(ValueError):
        neumann_spectrum(A, mesh, k=1)
    with pytest.raises(SolverError):
        neumann_spectrum(annulus(0.5, 0.1)[1])
    with pytest.raises(SolverError):
        full_spectrum(assemble(build_mesh(DISK, None, 1 / 64)))


def test_pcg_block_rhs():
    _, A = annulus(0.3, 0.05)
    B = np.column_stack([A.weights, np.ones(A.n)])
    X, info = pcg(A.matrix, B, tol=1e-12)
    assert info.converged
    assert np.allclose(A.matrix @ X, B, atol=1e-9)
