"""Block renormalization: banana boxes, subsquare goodness and the explicit bounds.

Both constructions tile space into cells whose goodness depends only on the
points inside the cell, so good cells form independent site percolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .clusters import CrossingReport, union_find
from .geometry import BoxRegion, distances_to

PC_SITE_RIGOROUS = 0.679492
PC_SITE_NUMERICAL = 0.5927


def site_threshold(numerical=False):
    """Square-lattice site threshold: rigorous upper bound, or the simulated value."""
    return PC_SITE_NUMERICAL if numerical else PC_SITE_RIGOROUS


@dataclass(frozen=True, eq=False)
class GoodBoxGrid:
    """Goodness per cell of a regular tiling of ``region``.

    ``criterion`` is ``("banana", delta, n)`` or ``("subsquare", n, m)``;
    ``counts`` holds per-cell banana counts (banana criterion) or the minimum
    subsquare count (subsquare criterion).
    """

    region: BoxRegion
    cell_side: float
    good: np.ndarray
    criterion: tuple
    counts: np.ndarray = field(repr=False, default=None)
    vacuous: bool = False

    @property
    def grid_dims(self):
        return self.good.shape

    @property
    def good_fraction(self):
        return float(self.good.mean())


def _tile_counts(points, region, side, per_cell):
    """Integer cell index (per axis) of every point of ``points`` inside ``region``."""
    coords = points.coords if hasattr(points, "coords") else np.asarray(points, dtype=float)
    inside = np.all((coords >= region.lower) & (coords < region.upper), axis=1)
    rel = (coords[inside] - region.lower) / side
    idx = np.floor(rel).astype(np.int64)
    idx = np.minimum(idx, per_cell - 1)
    return idx, rel - idx


def _exact_tiles(region, side, what):
    ratio = region.sides / side
    tiles = np.rint(ratio)
    if np.any(tiles < 1) or np.any(np.abs(ratio - tiles) > 1e-9 * np.maximum(ratio, 1)):
        raise ValueError(f"region sides {region.sides} are not a multiple of the {what} {side}")
    return tiles.astype(np.int64)


def _banana_subboxes(points, delta, n, region):
    sub = 3.0 * delta
    cells = _exact_tiles(region, sub * n, "cell side")
    subs = cells * n
    idx, frac = _tile_counts(points, region, sub, subs)
    flat = np.ravel_multi_index(idx.T, subs) if idx.size else np.empty(0, dtype=np.int64)
    total = np.bincount(flat, minlength=int(np.prod(subs)))
    central = np.all((frac >= 1 / 3) & (frac < 2 / 3), axis=1)
    centre = np.bincount(flat[central], minlength=total.size)
    return cells, subs, flat, central, (total == 1) & (centre == 1)


def banana_scan(points, delta, n, region=None):
    """Mark every ``3 delta n`` cell that contains a delta-banana sub-box.

    The cell is tiled by ``n^d`` disjoint sub-boxes of side ``3 delta``; a
    sub-box is a banana box when its central box of side ``delta`` holds
    exactly one point and the rest of the sub-box is empty. Probabilities
    are quoted at unit intensity; other intensities follow by rescaling.
    """
    if not delta > 0 or n < 1:
        raise ValueError("need delta > 0 and n >= 1")
    region = points.box if region is None else region
    cells, subs, _, _, banana = _banana_subboxes(points, delta, n, region)
    per_cell = banana.reshape(tuple(subs))
    for ax in range(region.dim):
        shape = list(per_cell.shape)
        shape[ax:ax + 1] = [int(cells[ax]), n]
        per_cell = per_cell.reshape(shape).sum(axis=ax + 1)
    return GoodBoxGrid(region, 3.0 * delta * n, per_cell > 0, ("banana", float(delta), int(n)),
                       per_cell)


def banana_points(points, delta, n, region=None):
    """Indices of the points sitting alone in the centre of a banana sub-box."""
    region = points.box if region is None else region
    coords = points.coords
    inside = np.flatnonzero(np.all((coords >= region.lower) & (coords < region.upper), axis=1))
    _, _, flat, central, banana = _banana_subboxes(points, delta, n, region)
    return inside[central & banana[flat]]


def banana_prob(delta, dim=2):
    """``delta^d exp(-(3 delta)^d)``: one point in the centre, nothing else in the 3-delta box.

    ``dim == 2`` gives ``delta^2 e^{-9 delta^2}``; other dimensions are an
    extension of the planar construction.
    """
    return delta**dim * math.exp(-((3.0 * delta) ** dim))


def good_box_prob(delta, n, dim=2):
    """``1 - (1 - banana_prob)^(n^d)``; for ``d = 2``, ``1 - (1 - delta^2 e^{-9 delta^2})^{n^2}``."""
    if n <= 0:
        return 0.0
    return -math.expm1(n**dim * math.log1p(-banana_prob(delta, dim)))


def optimal_delta(dim=2):
    """Maximiser of ``delta^d e^{-(3 delta)^d}``; the derivative vanishes at ``(3 delta)^d = 1``."""
    return 1.0 / 3.0


def n_tilde(pc):
    """Smallest ``n`` with ``good_box_prob(1/3, n) >= pc``.

    ``ceil(sqrt(log(1 - pc) / log(1 - 1/(9e))))``.
    """
    if not 0 < pc < 1:
        raise ValueError("pc must lie in (0, 1)")
    return int(math.ceil(math.sqrt(math.log1p(-pc) / math.log1p(-1.0 / (9.0 * math.e)))))


def alpha_bound_2d(pc=PC_SITE_RIGOROUS):
    """Upper bound ``n_tilde(pc) * sqrt(45)`` on the planar GN_1 critical value."""
    return n_tilde(pc) * math.sqrt(45.0)


def banana_alpha_threshold(n, delta=1.0 / 3.0):
    """Alpha above which banana points of neighbouring good cells reach each other.

    Two points of adjacent ``3 delta n`` cells are at most ``3 delta n sqrt(5)``
    apart, and a banana point's nearest neighbour is at least ``delta`` away,
    so the threshold is ``3 delta n sqrt(5) / delta = n sqrt(45)``; delta cancels.
    """
    max_pair = 3.0 * delta * n * math.sqrt(5.0)
    min_nn = delta
    return max_pair / min_nn


def subsquare_good_scan(points, n, m, region=None, unit=1.0):
    """Mark unit squares whose ``n^d`` subsquares all hold between 1 and ``m / n^d`` points."""
    if n < 1 or n % 2 == 0:
        raise ValueError("n must be a positive odd integer")
    region = points.box if region is None else region
    cells = _exact_tiles(region, unit, "unit")
    dim = region.dim
    cap = m / n**dim
    subs = cells * n
    idx, _ = _tile_counts(points, region, unit / n, subs)
    flat = np.ravel_multi_index(idx.T, subs) if idx.size else np.empty(0, dtype=np.int64)
    count = np.bincount(flat, minlength=int(np.prod(subs))).reshape(tuple(subs))
    ok = (count >= 1) & (count <= cap)
    lo = count
    for ax in range(dim):
        shape = list(ok.shape)
        shape[ax:ax + 1] = [int(cells[ax]), n]
        ok = ok.reshape(shape).all(axis=ax + 1)
        lo = lo.reshape(shape).min(axis=ax + 1)
    return GoodBoxGrid(region, float(unit), ok, ("subsquare", int(n), float(m)), lo, cap < 1)


def grid_site_percolation(grid, axis=0):
    """Crossing of good cells (nearest-neighbour lattice) between the faces normal to ``axis``.

    ``grid`` is a :class:`GoodBoxGrid` or a boolean array of site states.
    """
    good = grid.good if isinstance(grid, GoodBoxGrid) else np.asarray(grid, dtype=bool)
    if not 0 <= axis < good.ndim:
        raise ValueError(f"axis {axis} out of range")
    if isinstance(grid, GoodBoxGrid):
        box = grid.region
    else:
        box = BoxRegion(np.zeros(good.ndim), np.array(good.shape, dtype=float))
    ids = np.arange(good.size).reshape(good.shape)
    edges = []
    for ax in range(good.ndim):
        a = [slice(None)] * good.ndim
        b = [slice(None)] * good.ndim
        a[ax] = slice(None, -1)
        b[ax] = slice(1, None)
        both = good[tuple(a)] & good[tuple(b)]
        edges.append(np.column_stack([ids[tuple(a)][both], ids[tuple(b)][both]]))
    root = union_find(good.size, np.concatenate(edges) if edges else np.empty((0, 2)))
    root = root.reshape(good.shape)
    low = np.take(root, 0, axis=axis)[np.take(good, 0, axis=axis)]
    high = np.take(root, -1, axis=axis)[np.take(good, -1, axis=axis)]
    common = np.intersect1d(low, high)
    if common.size == 0:
        return CrossingReport(axis, box, False, None)
    return CrossingReport(axis, box, True, int(common[0]))


@dataclass(frozen=True)
class SubsquareParameters:
    n: int
    density: float
    m: float
    k: int
    pc: float

    @property
    def per_subsquare_cap(self):
        return self.m / self.n**2


def theorem7_parameters(alpha, pc=PC_SITE_RIGOROUS):
    """Parameters of the planar subsquare construction for GN_k with weight ``alpha``.

    ``n``: smallest odd integer above ``1 + 2 sqrt(5) / alpha``.
    ``density``: smallest integer with ``P(X_n = 0) < (1 - pc) / (2 n^2)``.
    ``m``: ``n^2 q`` for the smallest integer ``q`` with
    ``P(X_n > q) < (1 - pc) / (2 n^2)``; then ``k = m + 1``.
    ``X_n`` is the Poisson count of one subsquare.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    n = math.floor(1 + 2 * math.sqrt(5) / alpha) + 1
    if n % 2 == 0:
        n += 1
    eps = (1 - pc) / (2 * n * n)
    density = math.floor(n * n * math.log(1 / eps)) + 1
    mu = density / n**2
    q = int(stats.poisson.isf(eps, mu))
    while stats.poisson.sf(q, mu) >= eps:
        q += 1
    while q > 0 and stats.poisson.sf(q - 1, mu) < eps:
        q -= 1
    m = q * n * n
    return SubsquareParameters(n, float(density), float(m), int(m) + 1, pc)


def corridor_boxes(n, lower=(0.0, 0.0), unit=1.0):
    """The ``n + 1`` subsquares ``B_0 .. B_n`` of the middle row joining two adjacent squares.

    They run from the central subsquare of ``[0, 1]^2`` to that of
    ``[1, 2] x [0, 1]`` (offset by ``lower``, scaled by ``unit``).
    """
    lo = np.asarray(lower, dtype=float)
    s = unit / n
    c = (n - 1) / 2 * s
    return [BoxRegion(lo + [c + i * s, c], lo + [c + (i + 1) * s, c + s]) for i in range(n + 1)]


@dataclass(frozen=True)
class CorridorReport:
    connected: bool
    n_points: int
    empty_boxes: int
    min_range: float
    max_step: float
    certified: bool


def corridor_check(points, n, k, alpha, lower=(0.0, 0.0), unit=1.0, window=None):
    """Are all corridor points of two adjacent squares joined by GN_k(2, alpha) edges?

    Ranges ``alpha d_k(x)`` of the corridor points are computed exactly from
    the points inside ``window`` (default: the point set's box); the report
    is ``certified`` when each point's k-th neighbour ball lies inside the
    window. Connectivity uses only edges between corridor points, which
    suffices because a connected subgraph is connected in the full graph.
    """
    boxes = corridor_boxes(n, lower, unit)
    coords = points.coords
    in_box = [np.flatnonzero(b.contains(coords) & np.all(coords < b.upper, axis=1))
              for b in boxes]
    empty = sum(ix.size == 0 for ix in in_box)
    idx = np.unique(np.concatenate(in_box)) if in_box else np.empty(0, dtype=np.int64)
    if idx.size == 0:
        return CorridorReport(False, 0, empty, 0.0, math.inf, False)
    window = points.box if window is None else window
    kq = min(k + 3, points.n)
    _, nb = points.tree.query(points.tree_coords(coords[idx]), k=kq)
    nb = np.asarray(nb).reshape(idx.size, kq)
    d = distances_to(points, idx[:, None], nb)
    d[nb == idx[:, None]] = np.inf
    dk = np.sort(d, axis=1)[:, k - 1]
    r = alpha * dk
    x = coords[idx]
    room = np.minimum(x - window.lower, window.upper - x).min(axis=1)
    certified = bool(np.all(dk <= room))
    i, j = np.triu_indices(idx.size, 1)
    dij = distances_to(points, idx[i], idx[j])
    edge = dij <= np.maximum(r[i], r[j])
    root = union_find(idx.size, np.column_stack([i[edge], j[edge]]))
    # longest hop between points of consecutive corridor boxes
    step = 0.0
    for a, b in zip(in_box, in_box[1:]):
        if a.size and b.size:
            step = max(step, float(distances_to(points, a[:, None], b[None, :]).max()))
    return CorridorReport(bool(np.all(root == root[0])) and empty == 0, int(idx.size), empty,
                          float(r.min()), step, certified)
