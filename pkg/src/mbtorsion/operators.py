"""Symmetric discrete Laplacian with Neumann outer and Dirichlet obstacle data.

The matrix S acts on active nodes only.  Row i of W^{-1} S, with W the node
volume fractions, is the usual (2m+1)-point stencil of -Laplacian in which a
missing neighbour across a Neumann face is replaced by its mirror image.
Obstacle neighbours hold the value 0 and only add to the diagonal.  With the
default ``dirichlet="fraction"`` that diagonal term is w/(t h^2), where t h
is the distance from the active node to the obstacle boundary along the
edge; ``dirichlet="staircase"`` uses t = 1, i.e. the boundary sits on the
obstacle node.  Both keep S symmetric and leave the node sets unchanged.

The generalized problems solved downstream are

    S u = W 1            (torsion)
    S psi = lambda W psi (eigenpairs)

and the discrete L2 inner product is <u, v> = h^m sum_i W_i u_i v_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import crossing_fraction
from .mesh import OBSTACLE, Mesh, _neighbour_pairs


@dataclass(frozen=True, eq=False)
class SparseOperator:
    matrix: sp.csr_matrix  # S, units length^-2
    weights: np.ndarray  # node volume fractions W
    h: float
    dimension: int
    has_dirichlet: bool

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def cell_volume(self) -> float:
        return self.h**self.dimension

    @property
    def mass(self) -> np.ndarray:
        """Node measures h^m W."""
        return self.weights * self.cell_volume

    @property
    def indptr(self):
        return self.matrix.indptr

    @property
    def indices(self):
        return self.matrix.indices

    @property
    def data(self):
        return self.matrix.data

    def stencil_row(self, i: int) -> dict[int, float]:
        """Row i of the mirror-reflected stencil W^{-1} S."""
        row = self.matrix.getrow(i)
        return {int(j): float(v) / self.weights[i] for j, v in zip(row.indices, row.data)}

    def quadratic_form(self, v: np.ndarray) -> float:
        return float(v @ (self.matrix @ v))

    def rayleigh_quotient(self, v: np.ndarray) -> float:
        return self.quadratic_form(v) / float(v @ (self.weights * v))

    def to_triplets(self) -> str:
        """Coordinate triplets ``i j value``, one per line (n <= 200)."""
        if self.n > 200:
            raise ValueError(f"triplet dump is limited to n <= 200, got {self.n}")
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return "\n".join(
            f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}" for k in order
        )


def _coords(mesh: Mesh, flat: np.ndarray) -> np.ndarray:
    idx = np.unravel_index(flat, mesh.shape)
    return np.column_stack([(np.asarray(i) + lo) * mesh.h for i, lo in zip(idx, mesh.lower)])


def _edge_weights(mesh: Mesh, axis: int):
    """Endpoints and cross-section weights of lattice edges along ``axis``.

    The cross-section weight is the product, over the other axes, of the
    smaller of the two endpoint volume factors; on box faces it reproduces
    the symmetrised mirror stencil exactly.
    """
    flat = np.arange(mesh.node_class.size).reshape(mesh.shape)
    p, q = _neighbour_pairs(flat, axis)
    w = np.ones(p.size)
    for b in range(mesh.dimension):
        if b == axis:
            continue
        f = mesh.axis_factor[b].ravel()
        w *= np.minimum(f[p], f[q])
    return p, q, w


MIN_FRACTION = 1e-3


def assemble(mesh: Mesh, dirichlet: str = "fraction") -> SparseOperator:
    """Assemble S on the active nodes of ``mesh``."""
    if dirichlet not in ("fraction", "staircase"):
        raise ValueError(f"unknown Dirichlet treatment {dirichlet!r}")
    cls = mesh.node_class.ravel()
    act = mesh.active_index.ravel()
    n = mesh.n_active
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for a in range(mesh.dimension):
        p, q, w = _edge_weights(mesh, a)
        ip, iq = act[p], act[q]
        both = (ip >= 0) & (iq >= 0)
        rows += [ip[both], iq[both]]
        cols += [iq[both], ip[both]]
        vals += [-w[both], -w[both]]
        np.add.at(diag, ip[both], w[both])
        np.add.at(diag, iq[both], w[both])
        # Dirichlet neighbours: value 0, diagonal contribution only
        for src, dst, isrc in ((p, q, ip), (q, p, iq)):
            sel = (isrc >= 0) & (cls[dst] == OBSTACLE)
            if not sel.any():
                continue
            ws = w[sel]
            if dirichlet == "fraction":
                t = crossing_fraction(mesh.obstacle, _coords(mesh, src[sel]), _coords(mesh, dst[sel]))
                ws = ws / np.maximum(t, MIN_FRACTION)
            np.add.at(diag, isrc[sel], ws)
    idx = np.arange(n)
    r = np.concatenate(rows + [idx])
    c = np.concatenate(cols + [idx])
    v = np.concatenate(vals + [diag]) / mesh.h**2
    S = sp.csr_matrix((v, (r, c)), shape=(n, n))
    S.sort_indices()
    return SparseOperator(
        matrix=S,
        weights=mesh.weights.copy(),
        h=mesh.h,
        dimension=mesh.dimension,
        has_dirichlet=mesh.has_obstacle,
    )


def apply(A: SparseOperator, v: np.ndarray) -> np.ndarray:
    """The product S v."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != A.n:
        raise ValueError(f"vector length {v.shape[0]} != operator size {A.n}")
    return A.matrix @ v


def tensor_cylinder(A2: SparseOperator, height: float) -> SparseOperator:
    """Operator on (D minus K) x (0, height) with Neumann top and bottom.

    Built as S2 (x) W1 + W2 (x) S1 from the planar operator and a 1D Neumann
    segment discretised with the same spacing.
    """
    h = A2.h
    steps = height / h
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps) or round(steps) < 1:
        raise ValueError(f"height {height} is not a multiple of the grid spacing {h}")
    k = int(round(steps)) + 1
    w1 = np.ones(k)
    w1[[0, -1]] = 0.5
    off = -np.ones(k - 1)
    d1 = np.full(k, 2.0)
    d1[[0, -1]] = 1.0
    S1 = sp.diags([off, d1, off], [-1, 0, 1]) / h**2
    W1 = sp.diags(w1)
    W2 = sp.diags(A2.weights)
    S3 = (sp.kron(A2.matrix, W1) + sp.kron(W2, S1)).tocsr()
    S3.sort_indices()
    return SparseOperator(
        matrix=S3,
        weights=np.kron(A2.weights, w1),
        h=h,
        dimension=A2.dimension + 1,
        has_dirichlet=A2.has_dirichlet,
    )
