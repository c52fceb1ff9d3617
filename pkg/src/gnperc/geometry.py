"""Poisson samples on finite windows, metrics and exact kNN tables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .rng import stream

METRICS = ("euclidean", "torus")

# points per RNG block; blocks are generated from independent keyed streams
_BLOCK = 1 << 16
# extra candidates pulled from the tree so near-ties can be re-ranked exactly
_SLACK = 2


def _check_dim(d):
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    return int(d)


def unit_ball_volume(d):
    """Volume ``c(d) = pi^(d/2) / Gamma(d/2 + 1)`` of the unit ball in R^d.

    Underflows to subnormals past d of about 440; use
    :func:`log_unit_ball_volume` there.
    """
    d = _check_dim(d)
    if d <= 100:
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    return math.exp(log_unit_ball_volume(d))


def log_unit_ball_volume(d):
    """``log c(d)``, finite for every dimension."""
    d = _check_dim(d)
    return 0.5 * d * math.log(math.pi) - math.lgamma(d / 2 + 1)


@dataclass(frozen=True)
class BoxRegion:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape or lower.size == 0:
            raise ValueError("lower and upper must be non-empty vectors of equal length")
        if not np.all(upper > lower):
            raise ValueError(f"degenerate box: upper {upper} must exceed lower {lower}")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, side, dim, origin=0.0):
        return cls(np.full(dim, float(origin)), np.full(dim, float(origin) + side))

    @property
    def dim(self):
        return self.lower.size

    @property
    def sides(self):
        return self.upper - self.lower

    @property
    def volume(self):
        return float(np.prod(self.sides))

    def inflate(self, margin):
        return BoxRegion(self.lower - margin, self.upper + margin)

    def scaled(self, s):
        return BoxRegion(self.lower * s, self.upper * s)

    def contains(self, coords):
        coords = np.atleast_2d(coords)
        return np.all((coords >= self.lower) & (coords <= self.upper), axis=1)

    def contains_box(self, other):
        return bool(np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper))

    def __eq__(self, other):
        if not isinstance(other, BoxRegion):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))


@dataclass(frozen=True, eq=False)
class PointSet:
    """A finite-window realization of a homogeneous Poisson process.

    ``metric="torus"`` identifies opposite faces of ``box`` so every point
    sees an unbiased neighbourhood; ``"euclidean"`` is the free window.
    """

    coords: np.ndarray
    box: BoxRegion
    density: float
    metric: str = "euclidean"
    seed: int | None = None

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords.reshape(-1, 1) if self.box.dim == 1 else coords.reshape(1, -1)
        if coords.ndim != 2 or (coords.shape[0] and coords.shape[1] != self.box.dim):
            raise ValueError(f"coords of shape {coords.shape} do not match a {self.box.dim}-d box")
        coords = coords.reshape(-1, self.box.dim)
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if not self.density > 0:
            raise ValueError("density must be positive")
        if coords.size and not np.all(self.box.contains(coords)):
            raise ValueError("all coordinates must lie inside the box")
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    def __len__(self):
        return self.coords.shape[0]

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def dim(self):
        return self.box.dim

    @property
    def period(self):
        return self.box.sides if self.metric == "torus" else None

    @cached_property
    def tree(self):
        if self.metric == "torus":
            data = np.mod(self.coords - self.box.lower, self.box.sides)
            # mod can round up to exactly the period for values just below it
            data[data >= self.box.sides] = 0.0
            return cKDTree(data, boxsize=self.box.sides)
        return cKDTree(self.coords)

    def tree_coords(self, coords=None):
        """Map coordinates into the frame used by :attr:`tree`."""
        coords = self.coords if coords is None else np.atleast_2d(coords)
        if self.metric == "torus":
            data = np.mod(coords - self.box.lower, self.box.sides)
            data[data >= self.box.sides] = 0.0
            return data
        return coords

    def interior(self, margin):
        """Mask of points at least ``margin`` away from every face.

        Under the torus metric there is no boundary and every point counts.
        """
        if self.metric == "torus":
            return np.ones(self.n, dtype=bool)
        lo = self.coords - self.box.lower
        hi = self.box.upper - self.coords
        return np.all((lo >= margin) & (hi >= margin), axis=1)

    def with_metric(self, metric):
        return PointSet(self.coords, self.box, self.density, metric, self.seed)

    def scaled(self, s):
        """The same configuration with all coordinates multiplied by ``s``."""
        return PointSet(self.coords * s, self.box.scaled(s), self.density / s**self.dim,
                        self.metric, self.seed)

    def subset(self, mask):
        return PointSet(self.coords[mask], self.box, self.density, self.metric, self.seed)


def default_margin(k_eff, density, dim):
    """Edge buffer ``3 (k_eff / (lambda c(d)))^(1/d)`` covering the kNN search radius."""
    k_eff = max(int(k_eff), 1)
    return 3.0 * (k_eff / (density * unit_ball_volume(dim))) ** (1.0 / dim)


def sample_poisson(dim, density, box, seed, metric="euclidean"):
    """Sample a homogeneous Poisson process of intensity ``density`` on ``box``.

    The count comes from stream ``(seed, 0)`` and points are generated in
    blocks from streams ``(seed, 1, b)``, so the result does not depend on
    how the blocks are scheduled.
    """
    if not isinstance(box, BoxRegion):
        box = BoxRegion(*box)
    if box.dim != dim:
        raise ValueError(f"box has dimension {box.dim}, expected {dim}")
    if not density > 0:
        raise ValueError("density must be positive")
    count = int(stream(seed, 0).poisson(density * box.volume))
    blocks = []
    for b, start in enumerate(range(0, count, _BLOCK)):
        size = min(_BLOCK, count - start)
        u = stream(seed, 1, b).random((size, dim))
        blocks.append(box.lower + u * box.sides)
    coords = np.concatenate(blocks) if blocks else np.empty((0, dim))
    return PointSet(coords, box, float(density), metric, int(seed))


def displacement(p, q, period=None):
    """Per-coordinate |p - q|, wrapped to the nearest image when ``period`` is set."""
    diff = np.abs(np.asarray(q, dtype=float) - np.asarray(p, dtype=float))
    if period is not None:
        diff = np.minimum(diff, period - diff)
    return diff


def norm(diff):
    return np.sqrt(np.sum(diff * diff, axis=-1))


def pair_distance(p, q, box, metric="euclidean"):
    """Distance between two points of ``box`` under the chosen metric."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    period = box.sides if metric == "torus" else None
    return float(norm(displacement(p, q, period)))


def distances_to(points, i, idx):
    """Distances from point ``i`` to the points ``idx`` (broadcasts over rows)."""
    coords = points.coords
    return norm(displacement(coords[i], coords[idx], points.period))


@dataclass(frozen=True, eq=False)
class NeighborTable:
    """Sorted nearest-neighbour distances, one row per point.

    ``distances[i, j]`` is the (j+1)-th nearest-neighbour distance of point
    ``i``; ties are broken by neighbour index. ``truncated`` is set when the
    requested ``kmax`` exceeded ``n - 1`` and only ``n - 1`` columns exist.
    """

    distances: np.ndarray
    indices: np.ndarray
    kmax: int
    truncated: bool
    density: float
    dim: int
    metric: str

    @property
    def n(self):
        return self.distances.shape[0]

    @property
    def columns(self):
        return self.distances.shape[1]


def knn_table(points, kmax):
    """Exact kNN distances and indices for every point of ``points``.

    Candidates come from a kd-tree query; their distances are recomputed with
    the same arithmetic as :func:`pair_distance` and re-ranked by
    ``(distance, index)``, so the table equals an all-pairs sort.
    """
    n = points.n
    if n < 2:
        raise ValueError("need at least two points for a neighbour table")
    if kmax < 1:
        raise ValueError("kmax must be at least 1")
    k = min(int(kmax), n - 1)
    kq = min(k + 1 + _SLACK, n)
    _, idx = points.tree.query(points.tree_coords(), k=kq)
    idx = np.asarray(idx, dtype=np.int64).reshape(n, kq)
    rows = np.arange(n)[:, None]
    dist = distances_to(points, rows, idx)
    dist[idx == rows] = np.inf
    order = np.lexsort((idx, dist), axis=-1)[:, :k]
    dist = np.take_along_axis(dist, order, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)
    dist.flags.writeable = False
    idx.flags.writeable = False
    return NeighborTable(dist, idx, int(kmax), kmax > n - 1, points.density, points.dim,
                         points.metric)
