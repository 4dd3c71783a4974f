import math

import numpy as np
import pytest
import sympy as sym

from mbtorsion.capacity import (
    CapacityError,
    _graded_axis,
    capacity_ball,
    capacity_ellipsoid_asymptotic,
    capacity_prolate_spheroid,
    capacity_variational,
    descent_check,
    ellipsoid_enclosure,
    equilibrium_potential_ball,
    rayleigh_trial_bound,
)
from mbtorsion.geometry import DomainSpec, ObstacleSpec, scale_obstacle
from mbtorsion.radial_oracle import RadialConfig, radial_eigen


def test_ball_capacity_examples():
    assert capacity_ball(1.0, 3).value == pytest.approx(4 * math.pi, rel=1e-15)
    assert capacity_ball(2.0, 3).value == pytest.approx(8 * math.pi, rel=1e-15)
    assert capacity_ball(1.0, 4).value == pytest.approx(4 * math.pi**2, rel=1e-15)
    with pytest.raises(CapacityError):
        capacity_ball(1.0, 2)


def test_ball_capacity_is_dirichlet_energy():
    r, R = sym.symbols("r R", positive=True)
    phi = R / r
    energy = sym.integrate(sym.diff(phi, r) ** 2 * 4 * sym.pi * r**2, (r, R, sym.oo))
    assert sym.simplify(energy - 4 * sym.pi * R) == 0


def test_equilibrium_potential():
    assert equilibrium_potential_ball([0.3, 0.0, 0.0], 1.0, 3) == 1.0
    assert equilibrium_potential_ball([2.0, 0.0, 0.0], 1.0, 3) == 0.5
    assert equilibrium_potential_ball([1e9, 0.0, 0.0], 1.0, 3) < 1e-8
    assert equilibrium_potential_ball([0.0, 0.0, 0.0], 1.0, 3) == 1.0


def test_ellipsoid_examples():
    assert capacity_ellipsoid_asymptotic(0.01, 1.0).value == pytest.approx(1.36438, abs=1e-5)
    assert capacity_ellipsoid_asymptotic(0.005, 1.0).value == pytest.approx(2 * math.pi / math.log(200), rel=1e-15)
    assert capacity_ellipsoid_asymptotic(0.005, 1.0).value == pytest.approx(1.18590, abs=5e-5)
    a = capacity_ellipsoid_asymptotic(0.01, 1.0).value
    assert capacity_ellipsoid_asymptotic(0.02, 2.0).value == pytest.approx(2 * a, rel=1e-15)
    with pytest.raises(CapacityError):
        capacity_ellipsoid_asymptotic(0.2, 1.0)


def test_ellipsoid_asymptotic_matches_exact_spheroid():
    ratios = []
    for hp in (1e2, 1e4, 1e8):
        ratios.append(capacity_ellipsoid_asymptotic(1.0, hp).value / capacity_prolate_spheroid(1.0, hp).value)
    gaps = np.abs(np.array(ratios) - 1)
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] < 0.05


def test_ellipsoid_enclosure_symbolic():
    eps, alpha, R, h = sym.symbols("epsilon alpha R h", positive=True)
    Rp = eps ** (1 - alpha) * R
    hp = h / sym.sqrt(1 - eps ** (2 * alpha))
    q = h**2 / hp**2 + (eps * R) ** 2 / Rp**2
    for point in ({eps: sym.Rational(1, 10), alpha: sym.Rational(1, 2)},
                  {eps: sym.Rational(1, 100), alpha: sym.Rational(1, 3)},
                  {eps: sym.Rational(1, 2), alpha: sym.Rational(3, 4)}):
        assert sym.simplify(q.subs(point) - 1) == 0
    assert sym.simplify(sym.powsimp(sym.expand(q), force=True) - 1) == 0
    for e, a in ((0.1, 0.5), (0.01, 1 / 3), (0.5, 0.75)):
        _, _, qn = ellipsoid_enclosure(e, a, 1.3, 0.7)
        assert qn == pytest.approx(1.0, rel=1e-12)


def test_graded_axis_nested():
    a = _graded_axis(1.2, 0.05, 8.0, 1.1)
    b = _graded_axis(1.2, 0.05, 16.0, 1.1)
    assert np.array_equal(a, b[: a.size])
    assert a[-1] >= 8.0 and np.allclose(np.diff(a)[:24], 0.05)


@pytest.fixture(scope="module")
def unit_ball_capacity():
    return capacity_variational(ObstacleSpec("ball", (1.0,)), 8.0, 0.05)


def test_variational_normalisation(unit_ball_capacity):
    r = unit_ball_capacity
    assert r.extrapolated == pytest.approx(4 * math.pi, rel=0.03)
    # truncation over-estimates, less so for the larger box
    (b1, v1), (b2, v2) = r.runs
    assert b2 > b1 and v2 < v1
    assert v2 > r.extrapolated


def test_variational_monotone_in_obstacle(unit_ball_capacity):
    half = capacity_variational(ObstacleSpec("ball", (0.5,)), 8.0, 0.05)
    assert half.extrapolated < unit_ball_capacity.extrapolated
    assert half.extrapolated / unit_ball_capacity.extrapolated == pytest.approx(0.5, rel=0.02)


def test_variational_guards():
    with pytest.raises(CapacityError):
        capacity_variational(ObstacleSpec("ball", (1.0,)), 1.5, 0.05)
    with pytest.raises(CapacityError):
        capacity_variational(ObstacleSpec("ball", (1.0,)), 8.0, 0.5)
    with pytest.raises(CapacityError):
        capacity_variational(ObstacleSpec("disk", (1.0,)), 8.0, 0.05)


def test_variational_off_centre_box():
    # no mirror symmetry: the full box path
    K = ObstacleSpec("box", (0.5, 0.5, 0.5), (0.1, 0.0, 0.0))
    r = capacity_variational(K, 4.0, 0.0625, growth=1.25)
    # cube of side a: cap ~ 4 pi * 0.6607 a
    assert r.extrapolated == pytest.approx(4 * math.pi * 0.6607 * 0.5, rel=0.05)


def test_trial_bound_example():
    K = scale_obstacle(ObstacleSpec("ball", (1.0,)), 0.01)
    D = DomainSpec("ball", (2.0,))
    # independent evaluation of the closed form with R = 1
    cap = 4 * math.pi * 0.01
    vol = 4 * math.pi * 8 / 3
    alpha = (1 / 8) ** (1 / 4)
    assert rayleigh_trial_bound(K, D, R=1.0) == pytest.approx(cap / vol * (1 - alpha) ** -3, rel=1e-14)
    with pytest.raises(CapacityError):
        rayleigh_trial_bound(K, DomainSpec("ball", (1.0,)), R=1.0)


@pytest.mark.parametrize("eps", [0.01, 0.05, 0.1, 0.2])
def test_trial_bound_dominates_eigenvalue(eps):
    K = scale_obstacle(ObstacleSpec("ball", (1.0,)), eps)
    D = DomainSpec("ball", (2.0,))
    assert radial_eigen(RadialConfig(3, eps, 2.0)) <= rayleigh_trial_bound(K, D)


def test_trial_bound_scaling():
    D = DomainSpec("ball", (2.0,))
    K = ObstacleSpec("ball", (1.0,))
    # bound / eps tends to cap(K) / |D| as the obstacle shrinks
    limit = 4 * math.pi / (4 * math.pi * 8 / 3)
    gaps = [rayleigh_trial_bound(scale_obstacle(K, e), D) / e / limit - 1 for e in (1e-2, 1e-4, 1e-6)]
    assert gaps[0] > gaps[1] > gaps[2] > 0
    assert gaps[2] < 1e-4


def test_descent_identity():
    D2, K2 = DomainSpec("disk", (1.0,)), ObstacleSpec("disk", (0.2,))
    r = descent_check(D2, K2, 0.5, 0.05)
    assert r.passed and r.difference <= 1e-10
    with pytest.raises(CapacityError):
        descent_check(D2, K2, 0.52, 0.05)
    with pytest.raises(CapacityError):
        descent_check(D2, None, 0.5, 0.05)
