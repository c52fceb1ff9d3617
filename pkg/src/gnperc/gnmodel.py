"""The generalised nearest-neighbour connection rule.

A point ``x`` reaches every point within ``r(x) = sum_i alpha_i d_i(x)``,
where ``d_i(x)`` is its i-th nearest-neighbour distance. This module holds
the weight vectors, the range computation, graph construction in both
variants (reach-union and boolean-overlap) and the closed-form range
identities used as oracles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.special import gammaln, zeta

from .geometry import NeighborTable, distances_to, knn_table, unit_ball_volume

VARIANTS = ("reach-union", "boolean-overlap")

# relative slack on kd-tree radii; exact filtering happens afterwards
_QUERY_SLACK = 1e-9


@dataclass(frozen=True)
class Geometric:
    """Tail ``alpha_i = scale * gamma**i``."""

    gamma: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"geometric tail needs 0 < gamma < 1, got {self.gamma}")
        if self.scale < 0:
            raise ValueError("tail scale must be nonnegative")


@dataclass(frozen=True)
class PowerLaw:
    """Tail ``alpha_i = c * i**(-p)``; accepted for exploration, never simulated."""

    c: float
    p: float

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("power-law coefficient must be nonnegative")


@dataclass(frozen=True)
class ExplicitTail:
    """Tail given by an arbitrary callable ``i -> alpha_i``; nothing closed-form about it."""

    fn: object


@dataclass(frozen=True)
class AlphaSpec:
    """Weight vector: explicit ``head`` (alpha_1..alpha_K) plus an optional tail for i > K."""

    head: tuple = ()
    tail: Geometric | PowerLaw | ExplicitTail | None = None

    def __post_init__(self):
        head = tuple(float(a) for a in np.atleast_1d(np.asarray(self.head, dtype=float)))
        if any(a < 0 or not math.isfinite(a) for a in head):
            raise ValueError(f"alpha entries must be finite and nonnegative: {head}")
        object.__setattr__(self, "head", head)

    @classmethod
    def gn_k(cls, k, alpha=1.0):
        """Only the k-th weight is nonzero: the GN_k(d, alpha) model."""
        if k < 1:
            raise ValueError("k must be at least 1")
        return cls((0.0,) * (k - 1) + (float(alpha),))

    @classmethod
    def geometric(cls, gamma, scale=1.0):
        """``alpha_i = scale * gamma**i`` for every i >= 1."""
        return cls((), Geometric(gamma, scale))

    @classmethod
    def parse(cls, text):
        """Parse ``"a1,a2,..."`` optionally followed by ``";geom=G[,scale=S]"``.

        ``"geom=0.5"`` alone means ``alpha_i = 0.5**i`` for every i.
        """
        head_part, _, tail_part = text.partition(";")
        if head_part.strip().startswith("geom"):
            head_part, tail_part = "", head_part
        head = tuple(float(v) for v in head_part.split(",") if v.strip())
        tail = None
        if tail_part.strip():
            opts = dict(kv.split("=", 1) for kv in tail_part.replace(" ", "").split(","))
            if "geom" not in opts:
                raise ValueError(f"unsupported tail {tail_part!r}; only geom=... is accepted")
            tail = Geometric(float(opts["geom"]), float(opts.get("scale", 1.0)))
        return cls(head, tail)

    def to_dict(self):
        t = self.tail
        if t is None:
            tail = None
        elif isinstance(t, Geometric):
            tail = {"kind": "geometric", "gamma": t.gamma, "scale": t.scale}
        elif isinstance(t, PowerLaw):
            tail = {"kind": "power", "c": t.c, "p": t.p}
        else:
            raise ValueError("explicit tails are not serializable")
        return {"head": list(self.head), "tail": tail}

    @classmethod
    def from_dict(cls, d):
        t = d.get("tail")
        if t is None:
            tail = None
        elif t["kind"] == "geometric":
            tail = Geometric(t["gamma"], t.get("scale", 1.0))
        elif t["kind"] == "power":
            tail = PowerLaw(t["c"], t["p"])
        else:
            raise ValueError(f"unknown tail kind {t['kind']!r}")
        return cls(tuple(d.get("head", ())), tail)

    @property
    def K(self):
        return len(self.head)

    @property
    def finite_support(self):
        return self.tail is None

    @property
    def support(self):
        """Largest index with a nonzero weight (``inf`` for nontrivial tails)."""
        if self.tail is not None and not self._zero_tail:
            return math.inf
        nz = np.flatnonzero(self.head)
        return int(nz[-1]) + 1 if nz.size else 0

    @property
    def _zero_tail(self):
        t = self.tail
        return (isinstance(t, Geometric) and t.scale == 0) or (isinstance(t, PowerLaw) and t.c == 0)

    def scaled(self, a):
        """Multiply every weight by ``a``."""
        if a < 0:
            raise ValueError("scale factor must be nonnegative")
        t = self.tail
        if isinstance(t, Geometric):
            t = Geometric(t.gamma, t.scale * a)
        elif isinstance(t, PowerLaw):
            t = PowerLaw(t.c * a, t.p)
        elif isinstance(t, ExplicitTail):
            raise ValueError("cannot scale an explicit tail")
        return AlphaSpec(tuple(a * h for h in self.head), t)

    def coef(self, i):
        """``alpha_i`` with 1-based ``i``."""
        if i < 1:
            raise ValueError("indices are 1-based")
        if i <= self.K:
            return self.head[i - 1]
        t = self.tail
        if t is None:
            return 0.0
        if isinstance(t, Geometric):
            return t.scale * t.gamma**i
        if isinstance(t, PowerLaw):
            return t.c * float(i) ** (-t.p)
        return float(t.fn(i))

    def coefficients(self, n):
        """Array ``(alpha_1, ..., alpha_n)``."""
        out = np.zeros(n)
        m = min(n, self.K)
        out[:m] = self.head[:m]
        if n > self.K and self.tail is not None:
            i = np.arange(self.K + 1, n + 1, dtype=float)
            t = self.tail
            if isinstance(t, Geometric):
                out[self.K:] = t.scale * t.gamma**i
            elif isinstance(t, PowerLaw):
                out[self.K:] = t.c * i ** (-t.p)
            else:
                out[self.K:] = [t.fn(int(j)) for j in i]
        return out

    def tail_sum(self, j):
        """``sum_{i >= j} alpha_i`` for ``j > K`` (tail part only)."""
        t = self.tail
        if t is None:
            return 0.0
        if isinstance(t, Geometric):
            return t.scale * t.gamma**j / (1 - t.gamma)
        if isinstance(t, PowerLaw):
            if t.c == 0:
                return 0.0
            return math.inf if t.p <= 1 else t.c * float(zeta(t.p, j))
        raise ValueError("no closed form for an explicit tail")

    def beta(self, i):
        """``beta_i = sum_{j >= i} alpha_j``."""
        if i < 1:
            raise ValueError("indices are 1-based")
        head = sum(self.head[i - 1:]) if i <= self.K else 0.0
        return head + self.tail_sum(max(i, self.K + 1))

    def betas(self, n):
        """Array ``(beta_1, ..., beta_n)``."""
        coefs = self.coefficients(n)
        rest = self.tail_sum(max(n + 1, self.K + 1))
        return np.cumsum(coefs[::-1])[::-1] + rest

    @property
    def total(self):
        """``|alpha| = sum_i alpha_i``."""
        return self.beta(1)

    def moment(self, s=1.0):
        """``sum_i i**s alpha_i`` (``inf`` when divergent)."""
        i = np.arange(1, self.K + 1, dtype=float)
        head = float(np.sum(i**s * np.asarray(self.head))) if self.K else 0.0
        t = self.tail
        j = self.K + 1
        if t is None:
            return head
        if isinstance(t, Geometric):
            if t.scale == 0:
                return head
            g = t.gamma
            if s == 1:
                # sum_{i >= j} i g^i = g^j (j - (j - 1) g) / (1 - g)^2
                return head + t.scale * g**j * (j - (j - 1) * g) / (1 - g) ** 2
            if s == 0:
                return head + self.tail_sum(j)
            return head + t.scale * _geometric_series(lambda k: k**s, g, j)
        if isinstance(t, PowerLaw):
            if t.c == 0:
                return head
            q = t.p - s
            return math.inf if q <= 1 else head + t.c * float(zeta(q, j))
        raise ValueError("no closed form for an explicit tail")


def _geometric_series(poly, g, start, rtol=1e-17):
    """``sum_{k >= start} poly(k) g^k`` for slowly growing ``poly`` with a certified stop."""
    total = 0.0
    k = start
    while True:
        term = poly(k) * g**k
        total += term
        ratio = poly(k + 1) / poly(k) * g if poly(k) > 0 else g
        if ratio < 1 and term * ratio / (1 - ratio) <= rtol * max(total, 1e-300):
            return total
        k += 1
        if k > start + 100000:
            return total


def mean_knn_distance(i, dim, density=1.0):
    """``E[d_i] = Gamma(i + 1/d) / Gamma(i) * (lambda c(d))^(-1/d)``; ``i`` may be an array."""
    i = np.asarray(i, dtype=float)
    scale = (density * unit_ball_volume(dim)) ** (-1.0 / dim)
    return np.exp(gammaln(i + 1.0 / dim) - gammaln(i)) * scale


def expected_range(alpha, dim, density=1.0):
    """``E[r(x)] = sum_i alpha_i E[d_i]`` for a Poisson point at intensity ``density``."""
    return head_expectation(alpha, alpha.K, dim, density) + tail_expectation(
        alpha, alpha.K, dim, density)


def head_expectation(alpha, k, dim, density=1.0):
    """``sum_{i <= k} alpha_i E[d_i]``."""
    if k <= 0:
        return 0.0
    return float(alpha.coefficients(k) @ mean_knn_distance(np.arange(1, k + 1), dim, density))


def tail_expectation(alpha, k, dim, density=1.0):
    """``sum_{i > k} alpha_i E[d_i]``: expected contribution omitted by a k-column table."""
    t = alpha.tail
    head_rest = 0.0
    if k < alpha.K:
        idx = np.arange(k + 1, alpha.K + 1)
        head_rest = float(np.asarray(alpha.head[k:]) @ mean_knn_distance(idx, dim, density))
    start = max(k, alpha.K) + 1
    if t is None or alpha._zero_tail:
        return head_rest
    if isinstance(t, Geometric):
        scale = (density * unit_ball_volume(dim)) ** (-1.0 / dim)
        if dim == 1:
            # E[d_i] = i / (2 lambda) in one dimension
            g, j = t.gamma, start
            s1 = g**j * (j - (j - 1) * g) / (1 - g) ** 2
            return head_rest + t.scale * s1 * scale
        ratio = lambda i: math.exp(math.lgamma(i + 1.0 / dim) - math.lgamma(i))
        return head_rest + t.scale * scale * _geometric_series(ratio, t.gamma, start)
    raise ValueError("only finite-support and geometric tails can be simulated")


def choose_kmax(alpha, dim, density=1.0, rel=1e-3):
    """Number of neighbour columns needed to evaluate ``r(x)``.

    Finite support needs exactly ``alpha.support`` columns. A geometric tail
    is truncated at the first ``k`` whose expected omitted part is below
    ``rel`` times the expected retained part.
    """
    if isinstance(alpha.tail, (PowerLaw, ExplicitTail)) and not alpha._zero_tail:
        raise ValueError("only finite-support and geometric tails can be simulated")
    if alpha.support != math.inf:
        return max(alpha.support, 1)
    k = max(alpha.K, 1)
    while tail_expectation(alpha, k, dim, density) >= rel * max(
            head_expectation(alpha, k, dim, density), 1e-300):
        k += 1
    return k


@dataclass(frozen=True, eq=False)
class RangeField:
    ranges: np.ndarray
    truncation_bound: float
    kmax_used: int
    alpha: AlphaSpec = field(repr=False)

    def __len__(self):
        return self.ranges.size


def connection_ranges(table, alpha):
    """Evaluate ``r(x)`` for every row of ``table``.

    Finite support uses exactly the first ``alpha.support`` columns; a
    geometric tail uses every available column and reports the expected
    omitted part as ``truncation_bound``.
    """
    if not isinstance(table, NeighborTable):
        raise TypeError("table must be a NeighborTable")
    t = alpha.tail
    if isinstance(t, (PowerLaw, ExplicitTail)) and not alpha._zero_tail:
        raise ValueError("only finite-support and geometric tails can be simulated")
    support = alpha.support
    if support == math.inf:
        if table.truncated:
            raise ValueError("neighbour table was truncated (kmax >= n); cannot evaluate an "
                             "infinite-support alpha on it")
        k = table.columns
    else:
        if support > table.columns:
            reason = "truncated at n - 1 columns" if table.truncated else f"has {table.columns} columns"
            raise ValueError(f"alpha needs {support} neighbour columns but the table {reason}")
        k = support
    if k == 0:
        ranges = np.zeros(table.n)
    else:
        ranges = table.distances[:, :k] @ alpha.coefficients(k)
    bound = tail_expectation(alpha, k, table.dim, table.density) if support == math.inf else 0.0
    ranges.flags.writeable = False
    return RangeField(ranges, bound, k, alpha)


def expected_range_1d(alpha, density=1.0):
    """``E[r(x)] = (1/2) sum_i i alpha_i`` in one dimension (``inf`` if divergent).

    The neighbour-distance increments of a rate-``lambda`` process on the line
    are i.i.d. exponential with rate ``2 lambda``.
    """
    return 0.5 * alpha.moment(1.0) / density


def laplace_V(alpha, s, depth=None, remainder=True):
    """Laplace transform of ``V = sum_i beta_i U_i`` with ``U_i`` i.i.d. Exp(2).

    Returns ``prod_i 1 / (1 + beta_i s / 2)``. Factors are multiplied until
    ``beta_i s / 2 < 1e-16`` (or up to ``depth``); the remaining factors are
    folded in through ``exp(-(s/2) sum_{i>N} beta_i)`` when ``remainder`` is
    set, which is zero whenever ``sum_i beta_i`` diverges.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0:
        return 1.0
    t = alpha.tail
    if alpha.total == math.inf:
        return 0.0
    if depth is None:
        if t is None or alpha._zero_tail:
            depth = max(alpha.support, 1)
        elif isinstance(t, Geometric):
            # beta_i s / 2 <= C gamma^i; stop once below 1e-16
            c = max(alpha.total * s / 2, 1e-300)
            depth = max(alpha.K, 1) + max(0, math.ceil(math.log(1e-16 / c) / math.log(t.gamma)))
        else:
            depth = 100000
    b = alpha.betas(depth)
    log_phi = -float(np.sum(np.log1p(b * s / 2)))
    if remainder:
        rest = _beta_tail_sum(alpha, depth)
        if rest == math.inf:
            return 0.0
        log_phi -= 0.5 * s * rest
    return math.exp(log_phi)


def _beta_tail_sum(alpha, n):
    """``sum_{i > n} beta_i = sum_{j > n} (j - n) alpha_j``."""
    t = alpha.tail
    head = sum((j - n) * a for j, a in enumerate(alpha.head, start=1) if j > n)
    if t is None or alpha._zero_tail:
        return head
    j0 = max(n, alpha.K) + 1
    if isinstance(t, Geometric):
        g = t.gamma
        # sum_{j >= j0} (j - n) g^j
        s1 = g**j0 * (j0 - (j0 - 1) * g) / (1 - g) ** 2
        s0 = g**j0 / (1 - g)
        return head + t.scale * (s1 - n * s0)
    if isinstance(t, PowerLaw):
        if t.p <= 2:
            return math.inf
        return head + t.c * (float(zeta(t.p - 1, j0)) - n * float(zeta(t.p, j0)))
    raise ValueError("no closed form for an explicit tail")


class RangeClass(str, enum.Enum):
    FINITE = "finite_range"
    INFINITE = "infinite_range"
    UNDECIDABLE = "undecidable"


def divergence_classifier(alpha, d):
    """Decide whether ``r(x)`` is a.s. infinite, i.e. ``sum_i i^(1/d) alpha_i = inf``."""
    if d < 1:
        raise ValueError("dimension must be positive")
    t = alpha.tail
    if t is None or alpha._zero_tail or isinstance(t, Geometric):
        return RangeClass.FINITE
    if isinstance(t, PowerLaw):
        return RangeClass.INFINITE if t.p <= 1 + 1.0 / d else RangeClass.FINITE
    return RangeClass.UNDECIDABLE


@dataclass(frozen=True, eq=False)
class GNGraph:
    """Directed reach relation plus its undirected closure for one variant.

    ``reach_edges`` rows are ``(x, y)`` with ``|x - y| <= r(x)``;
    ``undirected_edges`` rows are ``(u, v)`` with ``u < v``. Both are sorted.
    """

    n: int
    reach_edges: np.ndarray
    undirected_edges: np.ndarray
    variant: str

    @cached_property
    def reach_csr(self):
        src, dst = self.reach_edges.T
        return sparse.csr_matrix((np.ones(src.size, dtype=np.int8), (src, dst)),
                                 shape=(self.n, self.n))

    def out_degree(self):
        return np.bincount(self.reach_edges[:, 0], minlength=self.n)

    def edge_set(self):
        return set(map(tuple, self.undirected_edges.tolist()))

    def reach_set(self):
        return set(map(tuple, self.reach_edges.tolist()))


def _sorted_unique_pairs(pairs, n):
    """Lexicographically sorted distinct rows of an ``(m, 2)`` index array over ``n`` nodes."""
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    key = np.unique(pairs[:, 0].astype(np.int64) * n + pairs[:, 1])
    return np.column_stack([key // n, key % n])


def _ball_candidates(points, radii):
    """All ``(i, j)``, ``i != j``, with ``j`` inside the kd-tree ball of radius ``radii[i]``."""
    r = np.asarray(radii, dtype=float) * (1 + _QUERY_SLACK) + 1e-300
    hits = points.tree.query_ball_point(points.tree_coords(), r, return_sorted=False)
    counts = np.fromiter((len(h) for h in hits), dtype=np.int64, count=len(hits))
    src = np.repeat(np.arange(points.n, dtype=np.int64), counts)
    dst = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits]) if src.size else src
    keep = src != dst
    return src[keep], dst[keep]


def build_graph(points, ranges, variant="reach-union"):
    """Construct the GN graph on ``points`` from their connection ranges.

    reach-union: ``{x, y}`` is an edge iff ``|x - y| <= max(r(x), r(y))``.
    boolean-overlap: ``{x, y}`` is an edge iff ``|x - y| <= r(x) + r(y)``.
    The directed reach relation is kept in both cases.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    r = ranges.ranges if isinstance(ranges, RangeField) else np.asarray(ranges, dtype=float)
    if r.shape != (points.n,):
        raise ValueError("ranges must have one entry per point")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("ranges must be finite and nonnegative")
    n = points.n
    if n < 2:
        empty = np.empty((0, 2), dtype=np.int64)
        return GNGraph(n, empty, empty, variant)
    src, dst = _ball_candidates(points, r)
    dist = distances_to(points, src, dst)
    hit = dist <= r[src]
    reach = _sorted_unique_pairs(np.column_stack([src[hit], dst[hit]]), n)
    if variant == "reach-union":
        und = np.sort(reach, axis=1)
    else:
        src, dst = _ball_candidates(points, r + r.max())
        up = src < dst
        src, dst = src[up], dst[up]
        dist = distances_to(points, src, dst)
        und = np.column_stack([src, dst])[dist <= r[src] + r[dst]]
    und = _sorted_unique_pairs(und, n)
    reach.flags.writeable = False
    und.flags.writeable = False
    return GNGraph(n, reach, und, variant)


def nn_reference_graph(points, k, chunk=256):
    """k-nearest-neighbour graph from an all-pairs sort, without any range field.

    Each point gets directed edges to its ``k`` nearest neighbours (ties by
    index); the undirected closure joins ``x`` and ``y`` when either chose
    the other.
    """
    n = points.n
    if not n > k:
        raise ValueError(f"need more than k={k} points, got {n}")
    coords = points.coords
    period = points.period
    cols = np.arange(n)
    out = []
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        diff = np.abs(coords[None, :, :] - coords[rows, None, :])
        if period is not None:
            diff = np.minimum(diff, period - diff)
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        dist[np.arange(rows.size), rows] = np.inf
        order = np.lexsort((np.broadcast_to(cols, dist.shape), dist), axis=-1)[:, :k]
        out.append(np.column_stack([np.repeat(rows, k), order.reshape(-1)]))
    reach = _sorted_unique_pairs(np.concatenate(out), n)
    und = _sorted_unique_pairs(np.sort(reach, axis=1), n)
    return GNGraph(n, reach, und, "reach-union")


def gn_graph(points, alpha, variant="reach-union", kmax=None):
    """Convenience: kNN table, ranges and graph in one call."""
    kmax = choose_kmax(alpha, points.dim, points.density) if kmax is None else kmax
    rf = connection_ranges(knn_table(points, kmax), alpha)
    return build_graph(points, rf, variant), rf
