import math

import numpy as np
import pytest

from mbtorsion.geometry import DomainSpec, ObstacleSpec, scale_obstacle
from mbtorsion.mesh import INTERIOR, NEUMANN, OBSTACLE, OUTSIDE, MeshError, active_measure, build_mesh

UNIT_SQUARE = DomainSpec("square", (1.0,), (0.5, 0.5))


def test_three_by_three_square():
    m = build_mesh(UNIT_SQUARE, None, 0.5)
    assert m.shape == (3, 3)
    c = m.counts()
    assert c["obstacle"] == 0 and c["outside"] == 0
    assert m.n_active == 9
    # half-cell volumes: 4 corners x 1/4, 4 edges x 1/2, centre 1
    assert active_measure(m) == pytest.approx(1.0)


def test_disk_obstacle_counts_by_integer_enumeration():
    h = 1 / 32
    K = ObstacleSpec("disk", (0.25,), (0.5, 0.5))
    m = build_mesh(UNIT_SQUARE, K, h)
    # |(i, j)/32 - (16, 16)/32| <= 8/32  <=>  (i-16)^2 + (j-16)^2 <= 64
    expected = sum(1 for i in range(33) for j in range(33) if (i - 16) ** 2 + (j - 16) ** 2 <= 64)
    c = m.counts()
    assert c["obstacle"] == expected
    assert m.n_active == 33 * 33 - expected


def test_summary_text():
    m = build_mesh(UNIT_SQUARE, None, 0.5)
    assert m.summary().splitlines() == [
        "dimension 2",
        "h 0.5",
        "grid 3x3",
        "interior 1",
        "neumann 8",
        "obstacle 0",
        "outside 0",
        "active 9",
    ]


def test_interior_nodes_have_full_neighbourhoods():
    D = DomainSpec("disk", (1.0,))
    m = build_mesh(D, ObstacleSpec("disk", (0.2,)), 0.05)
    cls = m.node_class
    for idx in np.argwhere(cls == INTERIOR):
        for a in range(2):
            for s in (-1, 1):
                j = idx.copy()
                j[a] += s
                assert cls[tuple(j)] != OUTSIDE
    assert np.any(cls == NEUMANN)


def test_obstacle_nodes_cover_closed_obstacle():
    K = ObstacleSpec("disk", (0.25,))
    m = build_mesh(DomainSpec("disk", (1.0,)), K, 1 / 16)
    x = m.coordinates("all")
    inside = np.linalg.norm(x, axis=1) <= 0.25 + 1e-12
    assert np.all(m.node_class.ravel()[inside] == OBSTACLE)


def test_determinism():
    args = (DomainSpec("disk", (1.0,)), ObstacleSpec("disk", (0.3,)), 0.04)
    a, b = build_mesh(*args), build_mesh(*args)
    assert np.array_equal(a.node_class, b.node_class)
    assert np.array_equal(a.weights, b.weights)


def test_obstacle_monotone_on_fixed_grid():
    D = DomainSpec("disk", (1.0,))
    K = ObstacleSpec("disk", (1.0,))
    small = build_mesh(D, scale_obstacle(K, 0.2), 0.02).obstacle_set()
    large = build_mesh(D, scale_obstacle(K, 0.3), 0.02).obstacle_set()
    assert small < large


def test_connectivity():
    assert build_mesh(DomainSpec("disk", (1.0,)), None, 0.1).components() == 1
    assert build_mesh(DomainSpec("ball", (1.0,)), None, 0.25).components() == 1
    assert build_mesh(DomainSpec("twosquares", (1.0, 0.5)), None, 0.125).components() == 2


@pytest.mark.parametrize("h", [1 / 16, 1 / 32])
def test_measure_close_to_disk_area(h):
    # cut cells are integrated, so the error is at the level of the cell sub-sampling
    D = DomainSpec("disk", (1.0,))
    assert abs(active_measure(build_mesh(D, None, h)) - math.pi) <= 1e-3 * math.pi


def test_measure_ball():
    D = DomainSpec("ball", (1.0,))
    assert active_measure(build_mesh(D, None, 1 / 16)) == pytest.approx(4 * math.pi / 3, rel=1e-3)


def test_measure_bookkeeping_with_obstacle():
    D = DomainSpec("disk", (1.0,))
    h = 0.02
    empty = build_mesh(D, None, h)
    with_k = build_mesh(D, ObstacleSpec("disk", (0.08,)), h)
    n_obs = with_k.counts()["obstacle"]
    assert active_measure(empty) - active_measure(with_k) == pytest.approx(n_obs * h**2, rel=1e-12)


def test_errors():
    D = DomainSpec("disk", (1.0,))
    with pytest.raises(MeshError):
        build_mesh(D, None, 0.0)
    with pytest.raises(MeshError):
        build_mesh(D, ObstacleSpec("disk", (0.1,)), 0.05)  # h > R_K/4
    with pytest.raises(MeshError):
        build_mesh(D, ObstacleSpec("disk", (0.5,), (0.8, 0.0)), 0.05)  # sticks out of D


def test_node_at():
    m = build_mesh(UNIT_SQUARE, None, 0.25)
    i = m.node_at((0.5, 0.5))
    assert np.allclose(m.coordinates()[i], (0.5, 0.5))
