"""Node-centred regular grids on D minus an obstacle.

Nodes sit on the lattice h*Z^m.  Every lattice node in the closed set D is
classified as

* ``INTERIOR``   all 2m neighbours lie in D,
* ``NEUMANN``    at least one neighbour lies outside D; the missing
  directions are stored as a bit mask (bit 2a for -e_a, bit 2a+1 for +e_a),
* ``OBSTACLE``   the node lies in the closed obstacle (Dirichlet value 0),
* ``OUTSIDE``    everything else.

Nodes that would have both neighbours along some axis outside D cannot carry
a reflected stencil; they are pruned to ``OUTSIDE`` until none remain.

Each active node carries two kinds of volume factor.  ``axis_factor`` is 1/2
along every axis with a missing neighbour; products of these give the
half-cell weights that make the mirror reflected Neumann stencil symmetric,
and the operator builds its edge weights from them.  ``weights`` are the
node measures divided by h^m: the part of the node's cell [x - h/2, x + h/2]^m
that lies in D, plus an equal share of the cells of neighbouring nodes that
were classified outside D but still overlap it.  Their sum times h^m thus
tracks |D| minus the obstacle cells closely on curved boundaries; for boxes
whose faces lie on the lattice they coincide with the half-cell products.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import csgraph, coo_matrix

from .geometry import (
    DomainSpec,
    ObstacleSpec,
    boundary_samples,
    circumradius,
    contains,
)

OUTSIDE, INTERIOR, NEUMANN, OBSTACLE = 0, 1, 2, 3
CLASS_NAMES = {OUTSIDE: "outside", INTERIOR: "interior", NEUMANN: "neumann", OBSTACLE: "obstacle"}


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    dimension: int
    h: float
    shape: tuple[int, ...]  # nodes per axis
    lower: tuple[int, ...]  # lattice index of the first node on each axis
    node_class: np.ndarray  # int8, grid-shaped
    faces: np.ndarray  # uint8 bit mask of missing neighbour directions, grid-shaped
    axis_factor: np.ndarray  # (m, *shape) per-axis volume factor in {1, 1/2}
    active_index: np.ndarray  # grid-shaped, -1 where not active
    weights: np.ndarray  # per active node measure / h^m
    domain: DomainSpec | None = None
    obstacle: ObstacleSpec | None = None

    @property
    def n_active(self) -> int:
        return int(self.weights.size)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dimension

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float) * self.h

    @cached_property
    def active_flat(self) -> np.ndarray:
        """Flat grid indices of active nodes, in active-index order."""
        return np.flatnonzero(self.active_index.ravel() >= 0)

    def coordinates(self, which: str = "active") -> np.ndarray:
        """Coordinates of active nodes (or of all grid nodes with ``which='all'``)."""
        flat = self.active_flat if which == "active" else np.arange(self.node_class.size)
        idx = np.unravel_index(flat, self.shape)
        return np.column_stack([(np.asarray(i) + lo) * self.h for i, lo in zip(idx, self.lower)])

    def counts(self) -> dict[str, int]:
        values, counts = np.unique(self.node_class, return_counts=True)
        out = {name: 0 for name in CLASS_NAMES.values()}
        out.update({CLASS_NAMES[int(v)]: int(c) for v, c in zip(values, counts)})
        return out

    def summary(self) -> str:
        c = self.counts()
        lines = [
            f"dimension {self.dimension}",
            f"h {self.h!r}",
            f"grid {'x'.join(map(str, self.shape))}",
            *(f"{k} {c[k]}" for k in ("interior", "neumann", "obstacle", "outside")),
            f"active {self.n_active}",
        ]
        return "\n".join(lines)

    @property
    def has_obstacle(self) -> bool:
        return bool(np.any(self.node_class == OBSTACLE))

    def obstacle_set(self) -> set[tuple[int, ...]]:
        """Lattice indices of obstacle nodes (grid-independent labelling)."""
        idx = np.argwhere(self.node_class == OBSTACLE) + np.asarray(self.lower)
        return set(map(tuple, idx.tolist()))

    def adjacency(self):
        """Sparse adjacency between active nodes (nearest lattice neighbours)."""
        rows, cols = [], []
        for a in range(self.dimension):
            p, q = _neighbour_pairs(self.active_index, a)
            keep = (p >= 0) & (q >= 0)
            rows.append(p[keep])
            cols.append(q[keep])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        n = self.n_active
        return coo_matrix((np.ones(r.size), (r, c)), shape=(n, n)).tocsr()

    def components(self) -> int:
        """Number of connected components of the active-node graph."""
        n, _ = csgraph.connected_components(self.adjacency(), directed=False)
        return int(n)

    def node_at(self, point) -> int:
        """Active index of the lattice node nearest to ``point``."""
        k = np.rint(np.asarray(point, dtype=float) / self.h).astype(int) - np.asarray(self.lower)
        if np.any(k < 0) or np.any(k >= np.asarray(self.shape)):
            raise MeshError(f"point {point} is off the grid")
        i = int(self.active_index[tuple(k)])
        if i < 0:
            raise MeshError(f"node nearest to {point} is not active")
        return i


def _neighbour_pairs(grid: np.ndarray, axis: int):
    """Values of ``grid`` at (node, node + e_axis) for all lattice edges."""
    n = grid.shape[axis]
    lo = np.take(grid, np.arange(n - 1), axis=axis).ravel()
    hi = np.take(grid, np.arange(1, n), axis=axis).ravel()
    return lo, hi


def _shift(mask: np.ndarray, axis: int, step: int) -> np.ndarray:
    """out[i] = mask[i + step*e_axis], False past the grid edge."""
    out = np.zeros_like(mask)
    n = mask.shape[axis]
    src = [slice(None)] * mask.ndim
    dst = [slice(None)] * mask.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, n), slice(0, n - step)
    else:
        src[axis], dst[axis] = slice(0, n + step), slice(-step, n)
    out[tuple(dst)] = mask[tuple(src)]
    return out


_SUBSAMPLES = {2: 16, 3: 8}  # per axis, for cells cut by a curved boundary


def _overlap(x, lo, hi, h):
    """Length fraction of [x - h/2, x + h/2] inside [lo, hi]."""
    return np.clip(np.minimum(x + h / 2, hi) - np.maximum(x - h / 2, lo), 0.0, h) / h


def _cell_fractions(D: DomainSpec, pts: np.ndarray, h: float) -> np.ndarray:
    """Fraction of each node's cell that lies in D."""
    m = D.dimension
    c = np.asarray(D.center)
    if D.kind in ("square", "rect", "box"):
        lo, hi = D.bounds()
        return np.prod([_overlap(pts[:, a], lo[a], hi[a], h) for a in range(m)], axis=0)
    if D.kind == "twosquares":
        side, gap = D.lengths
        d = pts - c
        fy = _overlap(d[:, 1], -side / 2, side / 2, h)
        fx = _overlap(d[:, 0], gap / 2, gap / 2 + side, h) + _overlap(d[:, 0], -gap / 2 - side, -gap / 2, h)
        return fx * fy
    R = D.lengths[0]
    dist = np.linalg.norm(pts - c, axis=1) - R
    frac = (dist <= 0).astype(float)
    cut = np.flatnonzero(np.abs(dist) <= h * np.sqrt(m) / 2)
    s = _SUBSAMPLES[m]
    off = (np.arange(s) + 0.5) / s - 0.5
    sub = np.stack(np.meshgrid(*([off] * m), indexing="ij"), axis=-1).reshape(-1, m) * h
    for start in range(0, cut.size, 2048):
        idx = cut[start : start + 2048]
        y = pts[idx, None, :] - c + sub[None, :, :]
        frac[idx] = np.mean(np.einsum("ijk,ijk->ij", y, y) <= R * R, axis=1)
    return frac


def _offset(arr: np.ndarray, step) -> np.ndarray:
    """out[i] = arr[i + step], zero past the grid edge."""
    for a, s in enumerate(step):
        if s:
            arr = _shift(arr, a, s)
    return arr


def _lumped_weights(frac: np.ndarray, active: np.ndarray, outside: np.ndarray) -> np.ndarray:
    """Cell fractions of active nodes plus shares of overlapping outside cells."""
    m = frac.ndim
    area = np.where(active, frac, 0.0)
    spill = np.where(outside, frac, 0.0)
    axis_steps = [tuple(s if b == a else 0 for b in range(m)) for a in range(m) for s in (-1, 1)]
    all_steps = [s for s in np.ndindex(*(3,) * m) if any(v != 1 for v in s)]
    all_steps = [tuple(v - 1 for v in s) for s in all_steps]
    for steps in (axis_steps, all_steps):
        count = sum(_offset(active, st).astype(float) for st in steps)
        send = (spill > 0) & (count > 0)
        if not send.any():
            continue
        share = np.where(send, spill / np.maximum(count, 1.0), 0.0)
        for st in steps:
            area += _offset(share, tuple(-v for v in st)) * active
        spill = np.where(send, 0.0, spill)
    return area


def _lattice(D: DomainSpec, h: float):
    lo, hi = D.bounds()
    tol = 1e-9
    k_lo = np.ceil(lo / h - tol).astype(int)
    k_hi = np.floor(hi / h + tol).astype(int)
    shape = tuple(int(v) for v in k_hi - k_lo + 1)
    axes = [(np.arange(n) + k) * h for n, k in zip(shape, k_lo)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, D.dimension)
    return tuple(int(v) for v in k_lo), shape, pts


def build_mesh(D: DomainSpec, K: ObstacleSpec | None, h: float) -> Mesh:
    """Classify the lattice h*Z^m against D and the (already scaled) obstacle K."""
    if not h > 0:
        raise MeshError(f"grid spacing must be positive, got {h}")
    m = D.dimension
    if K is not None:
        if K.dimension != m:
            raise MeshError("domain and obstacle dimensions differ")
        rk = circumradius(K)
        if h > rk / 4 * (1 + 1e-12):
            raise MeshError(f"obstacle under-resolved: h={h} > R_K/4={rk / 4}")
        if not np.all(contains(D, boundary_samples(K), atol=1e-12 * max(1.0, rk))):
            raise MeshError("obstacle is not contained in the domain")

    lower, shape, pts = _lattice(D, h)
    atol = 1e-9 * h
    in_d = np.asarray(contains(D, pts, atol=atol)).reshape(shape)

    # prune nodes that have no neighbour at all along some axis
    while True:
        bad = np.zeros(shape, dtype=bool)
        for a in range(m):
            bad |= ~_shift(in_d, a, -1) & ~_shift(in_d, a, +1)
        bad &= in_d
        if not bad.any():
            break
        in_d &= ~bad

    faces = np.zeros(shape, dtype=np.uint8)
    axis_factor = np.ones((m, *shape))
    for a in range(m):
        miss_lo = in_d & ~_shift(in_d, a, -1)
        miss_hi = in_d & ~_shift(in_d, a, +1)
        faces |= (miss_lo.astype(np.uint8) << (2 * a)) | (miss_hi.astype(np.uint8) << (2 * a + 1))
        axis_factor[a][miss_lo | miss_hi] = 0.5

    node_class = np.full(shape, OUTSIDE, dtype=np.int8)
    node_class[in_d] = INTERIOR
    node_class[in_d & (faces > 0)] = NEUMANN
    if K is not None:
        in_k = np.asarray(contains(K, pts, atol=atol)).reshape(shape) & in_d
        if not in_k.any():
            raise MeshError("obstacle contains no grid node")
        node_class[in_k] = OBSTACLE

    active = (node_class == INTERIOR) | (node_class == NEUMANN)
    if not active.any():
        raise MeshError("empty active set")
    active_index = np.full(shape, -1, dtype=np.int64)
    active_index[active] = np.arange(int(active.sum()))
    frac = _cell_fractions(D, pts, h).reshape(shape)
    weights = _lumped_weights(frac, active, node_class == OUTSIDE)[active]
    # a node of the closed set D always owns part of its cell; guard round-off
    weights = np.maximum(weights, 1e-6)
    return Mesh(
        dimension=m,
        h=float(h),
        shape=shape,
        lower=lower,
        node_class=node_class,
        faces=faces,
        axis_factor=axis_factor,
        active_index=active_index,
        weights=weights,
        domain=D,
        obstacle=K,
    )


def active_measure(mesh: Mesh) -> float:
    """Sum of node measures over active nodes, approximating |D minus K|."""
    return float(mesh.weights.sum() * mesh.cell_volume)
