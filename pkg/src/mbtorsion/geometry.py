"""Parametric outer domains D and obstacles K.

Shapes are closed sets: boundary points count as inside.  All lengths are
dimensionless.  Shapes are described by a tag, a tuple of lengths and a
center offset::

    disk        (r,)
    square      (side,)
    rect        (lx, ly)
    ball        (r,)
    box         (lx, ly, lz)
    twosquares  (side, gap)     two disjoint squares, D only

The text grammar accepted by :func:`parse_shape` is ``tag:key=value,...``,
e.g. ``disk:r=1.0`` or ``box:lx=1,ly=2,lz=1,cx=0.5``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

DIMENSION = {
    "disk": 2,
    "square": 2,
    "rect": 2,
    "twosquares": 2,
    "ball": 3,
    "box": 3,
}
DOMAIN_SHAPES = frozenset(DIMENSION)
OBSTACLE_SHAPES = frozenset({"disk", "ball", "square", "box"})

_ALIASES = {"rectangle": "rect", "circle": "disk", "sphere": "ball", "cube": "box"}
_PARAM_NAMES = {
    "disk": ("r",),
    "ball": ("r",),
    "square": ("side",),
    "rect": ("lx", "ly"),
    "box": ("lx", "ly", "lz"),
    "twosquares": ("side", "gap"),
}


class GeometryError(ValueError):
    """Invalid shape description or geometric configuration."""


@dataclass(frozen=True)
class Shape:
    kind: str
    lengths: tuple[float, ...]
    center: tuple[float, ...] = ()

    allowed = DOMAIN_SHAPES

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in self.allowed:
            raise GeometryError(f"unsupported shape tag {self.kind!r} for {type(self).__name__}")
        object.__setattr__(self, "kind", kind)
        lengths = tuple(float(v) for v in self.lengths)
        if len(lengths) != len(_PARAM_NAMES[kind]):
            raise GeometryError(f"{kind} expects parameters {_PARAM_NAMES[kind]}, got {lengths}")
        if any(not math.isfinite(v) or v <= 0 for v in lengths):
            raise GeometryError(f"{kind} lengths must be positive and finite, got {lengths}")
        object.__setattr__(self, "lengths", lengths)
        m = DIMENSION[kind]
        center = tuple(float(c) for c in self.center) if self.center else (0.0,) * m
        if len(center) != m:
            raise GeometryError(f"center {center} does not match dimension {m}")
        object.__setattr__(self, "center", center)

    @property
    def dimension(self) -> int:
        return DIMENSION[self.kind]

    @property
    def params(self) -> dict[str, float]:
        return dict(zip(_PARAM_NAMES[self.kind], self.lengths))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box (lo, hi)."""
        c = np.asarray(self.center)
        if self.kind in ("disk", "ball"):
            half = np.full(self.dimension, self.lengths[0])
        elif self.kind == "square":
            half = np.full(2, self.lengths[0] / 2)
        elif self.kind in ("rect", "box"):
            half = np.asarray(self.lengths) / 2
        else:
            side, gap = self.lengths
            half = np.array([gap / 2 + side, side / 2])
        return c - half, c + half

    def spec_string(self) -> str:
        items = [f"{k}={v!r}" for k, v in self.params.items()]
        if any(self.center):
            items += [f"c{'xyz'[i]}={v!r}" for i, v in enumerate(self.center)]
        return f"{self.kind}:{','.join(items)}"


@dataclass(frozen=True)
class DomainSpec(Shape):
    """Outer domain D (Neumann boundary)."""

    allowed = DOMAIN_SHAPES

    @property
    def components(self) -> int:
        return 2 if self.kind == "twosquares" else 1


@dataclass(frozen=True)
class ObstacleSpec(Shape):
    """Compact obstacle K (Dirichlet boundary)."""

    allowed = OBSTACLE_SHAPES


@dataclass(frozen=True)
class GeometryConstants:
    R: float  # distance from the origin to the boundary of D
    R_K: float  # largest |x| over the obstacle
    eps1: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "eps1", min(1.0, self.R / self.R_K))


def parse_shape(text: str, obstacle: bool = False) -> Shape:
    """Parse ``tag:key=value,...`` into a DomainSpec or ObstacleSpec."""
    tag, _, rest = text.strip().partition(":")
    tag = _ALIASES.get(tag.strip(), tag.strip())
    if tag not in _PARAM_NAMES:
        raise GeometryError(f"unsupported shape tag {tag!r}")
    values = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            raise GeometryError(f"malformed parameter {item!r} in {text!r}")
        values[key.strip()] = float(val)
    names = _PARAM_NAMES[tag]
    missing = [n for n in names if n not in values]
    if missing:
        raise GeometryError(f"{tag} is missing parameters {missing}")
    m = DIMENSION[tag]
    center = tuple(values.pop(f"c{'xyz'[i]}", 0.0) for i in range(m))
    unknown = set(values) - set(names)
    if unknown:
        raise GeometryError(f"unknown parameters {sorted(unknown)} for {tag}")
    cls = ObstacleSpec if obstacle else DomainSpec
    return cls(tag, tuple(values[n] for n in names), center)


def measure(spec: Shape) -> float:
    """Lebesgue measure of the shape."""
    kind, L = spec.kind, spec.lengths
    if kind == "disk":
        return math.pi * L[0] ** 2
    if kind == "ball":
        return 4.0 * math.pi * L[0] ** 3 / 3.0
    if kind == "square":
        return L[0] ** 2
    if kind in ("rect", "box"):
        return math.prod(L)
    if kind == "twosquares":
        return 2.0 * L[0] ** 2
    raise GeometryError(f"unsupported shape tag {kind!r}")


def scale_obstacle(K: ObstacleSpec, eps: float) -> ObstacleSpec:
    """The set eps*K: lengths and center offset multiplied by eps."""
    if not eps > 0:
        raise GeometryError(f"scale factor must be positive, got {eps}")
    return replace(K, lengths=tuple(eps * v for v in K.lengths), center=tuple(eps * c for c in K.center))


def contains(spec: Shape, x, atol: float = 1e-12) -> np.ndarray | bool:
    """Closed-set membership for a point or an (n, m) array of points."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != spec.dimension:
        raise GeometryError(f"point dimension {pts.shape[1]} != shape dimension {spec.dimension}")
    d = pts - np.asarray(spec.center)
    kind, L = spec.kind, spec.lengths
    if kind in ("disk", "ball"):
        inside = np.einsum("ij,ij->i", d, d) <= (L[0] + atol) ** 2
    elif kind == "square":
        inside = np.all(np.abs(d) <= L[0] / 2 + atol, axis=1)
    elif kind in ("rect", "box"):
        inside = np.all(np.abs(d) <= np.asarray(L) / 2 + atol, axis=1)
    else:
        side, gap = L
        ax = np.abs(d[:, 0])
        inside = (ax >= gap / 2 - atol) & (ax <= gap / 2 + side + atol) & (np.abs(d[:, 1]) <= side / 2 + atol)
    return bool(inside[0]) if single else inside


def boundary_distance_from_origin(D: DomainSpec) -> float:
    """R = min{|y| : y on the boundary of D}; requires 0 strictly inside D."""
    c = np.asarray(D.center)
    if D.kind in ("disk", "ball"):
        R = D.lengths[0] - float(np.linalg.norm(c))
    elif D.kind in ("square", "rect", "box"):
        lo, hi = D.bounds()
        R = float(min(np.min(-lo), np.min(hi)))
    else:
        raise GeometryError("twosquares does not contain the origin")
    if R <= 0:
        raise GeometryError(f"origin is not interior to {D.spec_string()}")
    return R


def circumradius(K: Shape) -> float:
    """R_K = max{|x| : x in K}."""
    c = np.asarray(K.center)
    if K.kind in ("disk", "ball"):
        return float(np.linalg.norm(c)) + K.lengths[0]
    lo, hi = K.bounds()
    # farthest corner, coordinate by coordinate
    return float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))


def geometry_constants(D: DomainSpec, K: ObstacleSpec) -> GeometryConstants:
    if D.dimension != K.dimension:
        raise GeometryError("domain and obstacle dimensions differ")
    return GeometryConstants(R=boundary_distance_from_origin(D), R_K=circumradius(K))


def boundary_samples(K: Shape, n: int = 64) -> np.ndarray:
    """Points on the boundary of an obstacle, used for containment checks."""
    c = np.asarray(K.center)
    if K.kind == "disk":
        th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return c + K.lengths[0] * np.column_stack([np.cos(th), np.sin(th)])
    if K.kind == "ball":
        # Fibonacci sphere
        k = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * k / n)
        th = np.pi * (1 + 5**0.5) * k
        return c + K.lengths[0] * np.column_stack(
            [np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)]
        )
    lo, hi = K.bounds()
    corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(K.dimension, -1).T
    return corners


def crossing_fraction(K: Shape, x_out, x_in) -> np.ndarray:
    """Fraction t in (0, 1] at which the segment x_out -> x_in enters K.

    ``x_out`` lies outside the closed obstacle and ``x_in`` inside; the
    segments are lattice edges, so for boxes they are axis aligned.
    """
    xo = np.atleast_2d(np.asarray(x_out, dtype=float)) - np.asarray(K.center)
    d = np.atleast_2d(np.asarray(x_in, dtype=float)) - np.asarray(K.center) - xo
    if K.kind in ("disk", "ball"):
        a = np.einsum("ij,ij->i", d, d)
        b = 2.0 * np.einsum("ij,ij->i", xo, d)
        c = np.einsum("ij,ij->i", xo, xo) - K.lengths[0] ** 2
        # smaller root; a tangent edge may give a slightly negative discriminant
        t = (-b - np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))) / (2 * a)
    else:
        lo, hi = K.bounds()
        half = (hi - lo) / 2
        axis = np.argmax(np.abs(d), axis=1)
        rows = np.arange(xo.shape[0])
        t = (np.abs(xo[rows, axis]) - half[axis]) / np.abs(d[rows, axis])
    return np.clip(t, 0.0, 1.0)
