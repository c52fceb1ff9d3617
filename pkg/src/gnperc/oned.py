"""One-dimensional analysis: gaps, bridges and the closed-form 1D bounds.

Conventions follow the line model: a gap ``(a, b)`` between consecutive
points is *bridged from the right* when some point ``y >= b`` has
``y - r(y) < a``, and *from the left* (mirror image) when some ``y <= a``
has ``y + r(y) > b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .geometry import BoxRegion, PointSet, knn_table, sample_poisson
from .gnmodel import AlphaSpec, RangeField, choose_kmax, connection_ranges
from .mc import CIEstimate, wilson_ci
from .rng import derive_seed


@dataclass(frozen=True)
class GapRecord:
    left: float
    length: float
    left_point_index: int
    right_point_index: int

    @property
    def right(self):
        return self.left + self.length


def _as_line(points, ranges=None):
    """Sorted coordinates, the sort order, and ranges permuted to match."""
    if isinstance(points, PointSet):
        if points.dim != 1:
            raise ValueError("expected a one-dimensional point set")
        x = points.coords[:, 0]
    else:
        x = np.asarray(points, dtype=float).reshape(-1)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    if ranges is None:
        return xs, order, None
    r = ranges.ranges if isinstance(ranges, RangeField) else np.asarray(ranges, dtype=float)
    if r.shape != x.shape:
        raise ValueError("ranges must have one entry per point")
    return xs, order, r[order]


def find_gaps(points, m):
    """All gaps between consecutive points that are longer than ``m``, left to right."""
    xs, order, _ = _as_line(points)
    if xs.size < 2:
        return []
    lengths = np.diff(xs)
    idx = np.flatnonzero(lengths > m)
    return [GapRecord(float(xs[i]), float(lengths[i]), int(order[i]), int(order[i + 1]))
            for i in idx]


def right_knn_distance(points, k):
    """Distance to the k-th nearest neighbour on the right (``nan`` if not in the window)."""
    xs, order, _ = _as_line(points)
    out = np.full(xs.size, np.nan)
    if xs.size > k:
        out[:-k] = xs[k:] - xs[:-k]
    res = np.empty_like(out)
    res[order] = out
    return res


def beta_points(points, k, beta):
    """Mask of points whose right k-th neighbour is farther than ``beta``."""
    return right_knn_distance(points, k) > beta


def _kth_distance_sorted(xs, k):
    """k-th nearest-neighbour distance of every point of a sorted line configuration."""
    n = xs.size
    offs = np.concatenate([np.arange(-k, 0), np.arange(1, k + 1)])
    j = np.arange(n)[:, None] + offs[None, :]
    valid = (j >= 0) & (j < n)
    d = np.where(valid, np.abs(xs[np.clip(j, 0, n - 1)] - xs[:, None]), np.inf)
    return np.partition(d, k - 1, axis=1)[:, k - 1]


class _RangeMin:
    """Sparse-table range-minimum queries with argmin."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        n = self.values.size
        levels = [np.arange(n)]
        span = 1
        while 2 * span <= n:
            prev = levels[-1]
            a, b = prev[:n - 2 * span + 1], prev[span:n - span + 1]
            levels.append(np.where(self.values[b] < self.values[a], b, a))
            span *= 2
        self.levels = levels

    def argmin(self, lo, hi):
        """Index of the minimum on ``[lo, hi)`` per query; ``-1`` for empty ranges."""
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        out = np.full(lo.shape, -1, dtype=np.int64)
        ok = hi > lo
        if not ok.any():
            return out
        length = hi[ok] - lo[ok]
        lev = np.floor(np.log2(length)).astype(int)
        a = np.empty(length.size, dtype=np.int64)
        b = np.empty(length.size, dtype=np.int64)
        for L in np.unique(lev):
            sel = lev == L
            a[sel] = self.levels[L][lo[ok][sel]]
            b[sel] = self.levels[L][hi[ok][sel] - (1 << L)]
        out[ok] = np.where(self.values[b] < self.values[a], b, a)
        return out


@dataclass(frozen=True, eq=False)
class BridgeReport:
    """Per-gap bridging verdicts.

    ``*_point`` hold the original index of the point whose reach extends
    farthest over the gap from that side (``-1`` if none bridges). A
    censored verdict could be flipped by points outside the window or by
    points whose ranges the window cannot certify; such gaps carry
    ``bridged_* = False`` and must be excluded from statistics.
    """

    gaps: list
    bridged_from_right: np.ndarray
    bridged_from_left: np.ndarray
    censored_right: np.ndarray
    censored_left: np.ndarray
    right_point: np.ndarray
    left_point: np.ndarray
    envelope: float

    def __len__(self):
        return len(self.gaps)

    @property
    def unbridged(self):
        """Gaps with certain verdicts on both sides and no bridge at all."""
        ok = ~(self.censored_right | self.censored_left)
        return ok & ~self.bridged_from_right & ~self.bridged_from_left

    @property
    def censored_fraction(self):
        if not self.gaps:
            return 0.0
        return float(np.mean(self.censored_right | self.censored_left))


def _scan_right(xs, r, gap_left_idx, certified, window_hi, env):
    """Right-bridging verdicts for gaps ``(xs[i], xs[i+1])`` with ``i`` in ``gap_left_idx``."""
    n = xs.size
    a = xs[gap_left_idx]
    start = gap_left_idx + 1
    # beyond a + env no point can reach back past a
    stop = np.searchsorted(xs, a + env, side="right")
    stop = np.maximum(stop, start)
    key = xs - r
    cert = _RangeMin(np.where(certified, key, np.inf)).argmin(start, stop)
    unc = _RangeMin(np.where(certified, np.inf, key)).argmin(start, stop)
    bridged = (cert >= 0) & (key[np.clip(cert, 0, n - 1)] < a)
    maybe = (unc >= 0) & (key[np.clip(unc, 0, n - 1)] < a)
    if window_hi is not None:
        maybe |= window_hi - a <= env
    censored = ~bridged & maybe
    point = np.where(bridged, cert, -1)
    return bridged, censored, point


def bridge_scan(points, ranges, m, window=None, k=None):
    """Locate every m-gap and decide whether it is bridged from each side.

    For a :class:`PointSet` the window defaults to its box and ``k`` to the
    number of neighbour columns behind ``ranges``; a plain coordinate array
    is treated as the whole line (nothing censored) unless ``window`` is
    given. A point's range is *certified* when its k-th neighbour distance
    is no larger than its distance to either window end, since only then
    can no unseen point shorten it. The search right of a gap stops at
    ``a + envelope`` with ``envelope = (sum alpha_i) * max certified d_k``
    (plus the truncation bound), beyond which no point can reach back.
    """
    xs, order, r = _as_line(points, ranges)
    if isinstance(points, PointSet) and window is None:
        window = (float(points.box.lower[0]), float(points.box.upper[0]))
    if k is None:
        k = ranges.kmax_used if isinstance(ranges, RangeField) else 1
    k = max(int(k), 1)
    n = xs.size
    gap_idx = np.flatnonzero(np.diff(xs) > m) if n >= 2 else np.empty(0, dtype=np.int64)
    gaps = [GapRecord(float(xs[i]), float(xs[i + 1] - xs[i]), int(order[i]), int(order[i + 1]))
            for i in gap_idx]
    empty_b = np.zeros(gap_idx.size, dtype=bool)
    if gap_idx.size == 0:
        e = np.empty(0, dtype=np.int64)
        return BridgeReport(gaps, empty_b, empty_b, empty_b, empty_b, e, e, 0.0)

    if window is None:
        certified = np.ones(n, dtype=bool)
        env = float(np.max(r)) if n else 0.0
        lo = hi = None
    else:
        lo, hi = window
        dk = _kth_distance_sorted(xs, k) if n > k else np.full(n, np.inf)
        certified = dk <= np.minimum(xs - lo, hi - xs)
        if isinstance(ranges, RangeField):
            weight = float(np.sum(ranges.alpha.coefficients(ranges.kmax_used)))
            extra = ranges.truncation_bound
        else:
            weight, extra = None, 0.0
        if certified.any():
            if weight is None:
                env = float(np.max(r[certified]))
            else:
                env = weight * float(np.max(dk[certified])) + extra
        else:
            env = math.inf
        env = max(env, float(np.max(r[certified])) if certified.any() else 0.0)

    br, cr, pr = _scan_right(xs, r, gap_idx, certified, hi, env)
    # mirror image: reflect the line and the gap indices
    xm = -xs[::-1]
    gap_m = (n - 2) - gap_idx
    bl, cl, pl = _scan_right(xm, r[::-1], gap_m, certified[::-1],
                             None if lo is None else -lo, env)
    pl = np.where(pl >= 0, (n - 1) - pl, -1)
    right_point = np.where(pr >= 0, order[np.clip(pr, 0, n - 1)], -1)
    left_point = np.where(pl >= 0, order[np.clip(pl, 0, n - 1)], -1)
    return BridgeReport(gaps, br, bl, cr, cl, right_point, left_point, float(env))


def _as_alpha(alpha, k):
    if isinstance(alpha, AlphaSpec):
        return alpha
    return AlphaSpec.gn_k(k, float(alpha))


def sample_line(T, seed, density=1.0):
    return sample_poisson(1, density, BoxRegion([0.0], [float(T)]), seed)


def line_ranges(points, alpha):
    kmax = choose_kmax(alpha, 1, points.density)
    if points.n <= kmax:
        return None
    return connection_ranges(knn_table(points, kmax), alpha)


def unbridged_sample(points, alpha, m, inner=(0.1, 0.9)):
    """Right-bridging verdict of the first uncensored m-gap inside the inner part of the window.

    Returns ``True`` (unbridged), ``False`` (bridged) or ``None`` when no
    usable gap exists.
    """
    rf = line_ranges(points, alpha)
    if rf is None:
        return None
    lo, hi = float(points.box.lower[0]), float(points.box.upper[0])
    T = hi - lo
    rep = bridge_scan(points, rf, m)
    for g, b, c in zip(rep.gaps, rep.bridged_from_right, rep.censored_right):
        if lo + inner[0] * T < g.left and g.right < lo + inner[1] * T and not c:
            return not b
    return None


def estimate_p_unbridged(alpha, k=1, m=1.0, trials=1000, T=1e4, seed=0, density=1.0,
                         level=0.95):
    """Monte Carlo estimate of p(m), the chance an m-gap is not bridged from the right.

    ``alpha`` is either a scalar (the GN_k(1, alpha) model) or an
    :class:`AlphaSpec`. One window of length ``T`` is sampled per trial and
    contributes one Bernoulli sample: the first uncensored m-gap lying in
    ``[0.1 T, 0.9 T]``. Windows without such a gap are discarded and counted.
    """
    if not m > 0:
        raise ValueError("m must be positive")
    if trials < 1:
        raise ValueError("need at least one trial")
    a = _as_alpha(alpha, k)
    hits = used = 0
    for t in range(trials):
        pts = sample_line(T, derive_seed(seed, t), density)
        v = unbridged_sample(pts, a, m)
        if v is None:
            continue
        used += 1
        hits += bool(v)
    if used == 0:
        return CIEstimate(math.nan, 0.0, 1.0, 0, 0, level, discarded=trials)
    return wilson_ci(hits, used, level).with_discarded(trials - used)


def gamma_tail_ratio(n, beta, k):
    """The conditional gamma-tail expression exactly as printed, with sums from i = 1.

    ``[sum_{i=1}^{k-1} e^-n n^i / i!] / [sum_{i=1}^{k-1} e^-beta beta^i / i!]``.
    See :func:`gamma_tail_conditional` for the standard ``P(G >= n | G > beta)``,
    whose sums start at ``i = 0``.
    """
    if k < 2:
        raise ValueError("empty sum: the printed expression needs k >= 2")
    if not n > 0 or not beta > 0:
        raise ValueError("n and beta must be positive")
    i = np.arange(1, k)
    return float(np.sum(stats.poisson.pmf(i, n)) / np.sum(stats.poisson.pmf(i, beta)))


def gamma_tail_conditional(n, beta, k):
    """``P(G >= n | G > beta)`` for ``G ~ Gamma(k, 1)`` and ``n >= beta``."""
    return float(stats.gamma.sf(n, k) / stats.gamma.sf(beta, k))


def gamma_tail_constant(beta, k):
    """``c(beta, k)`` with ``1/c = sum_{i=1}^{k-1} e^-beta (k-1)! beta^i / i!``."""
    if k < 2:
        raise ValueError("empty sum: needs k >= 2")
    i = np.arange(1, k)
    return 1.0 / (math.factorial(k - 1) * float(np.sum(stats.poisson.pmf(i, beta))))


def markov_range_bound(gamma, m):
    """Lower bound ``1 - gamma / (m (1 - gamma)^2)`` on ``P(r(X_0) < m)`` for ``alpha_i = gamma^i``."""
    if not 0 < gamma <= 0.5:
        raise ValueError(f"gamma must lie in (0, 1/2], got {gamma}")
    if not m > 0:
        raise ValueError("m must be positive")
    return max(0.0, 1.0 - gamma / (m * (1.0 - gamma) ** 2))


def shift_monotonicity_check(points, ranges, m=None, tol=1e-12):
    """Check ``X_0 - r(X_0) <= X_k - r(X_k)`` for every point ``X_k`` right of ``X_0``.

    With ``m`` given, ``X_0`` runs over the first points to the right of each
    m-gap; otherwise over every point. ``tol`` is relative to the coordinate scale.
    """
    xs, _, r = _as_line(points, ranges)
    if xs.size < 2:
        return True
    key = xs - r
    suffix = np.minimum.accumulate(key[::-1])[::-1]
    if m is None:
        starts = np.arange(xs.size)
    else:
        starts = np.flatnonzero(np.diff(xs) > m) + 1
    scale = max(1.0, float(np.max(np.abs(xs))))
    return bool(np.all(suffix[starts] >= key[starts] - tol * scale))
