"""Spatial branching process in high dimension and its planar projection.

Each individual at ``y`` scatters a Poisson process on the ball of radius
``1 + delta1`` around ``y`` (intensity normalised so the unit ball holds one
point on average); its offspring are the scattered points met first by a
ball grown from ``y``, at most ``c2`` of them. The offspring count is
therefore ``min(Y, c2)`` with ``Y ~ Poisson((1 + delta1)^d)``.

Only the first two coordinates matter after projection, so the projected
samplers draw ``(g1, g2, chi^2_{d-2})`` instead of full Gaussian vectors;
the law is identical and the cost does not grow with ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .geometry import log_unit_ball_volume
from .mc import wilson_ci
from .rng import derive_seed, stream


def expected_capped(mu, c2):
    """``E[min(Y, c2)]`` for ``Y ~ Poisson(mu)``; ``c2=None`` means no cap."""
    if c2 is None:
        return float(mu)
    return float(stats.poisson.sf(np.arange(int(c2)), mu).sum())


def calibrate_delta1(d, c1, c2=None, tol=1e-10):
    """``delta1`` with ``E[min(Y, c2)] = c1``, ``Y ~ Poisson((1 + delta1)^d)``.

    Solved for ``mu = (1 + delta1)^d`` by bisection; ``c2=None`` gives the
    uncapped answer ``c1^(1/d) - 1``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if c2 is not None and not c1 < c2:
        raise ValueError(f"infeasible: need c1 < c2, got c1={c1}, c2={c2}")
    if not c1 > expected_capped(1.0, c2):
        raise ValueError(f"c1={c1} needs delta1 <= 0; the mean at delta1=0 is "
                         f"{expected_capped(1.0, c2):.6g}")
    if c2 is None:
        return math.expm1(math.log(c1) / d)

    def f(mu):
        return expected_capped(mu, c2) - c1

    hi = 2.0 * c1
    while f(hi) <= 0:
        hi *= 2.0
    mu = optimize.bisect(f, 1.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(f(mu)) >= tol:
        raise ArithmeticError(f"calibration residual {f(mu):.3g} above {tol}")
    return math.expm1(math.log(mu) / d)


@dataclass(frozen=True)
class SBPConfig:
    dim: int
    delta1: float
    c2: int
    generations: int = 10
    seed: int = 0
    max_population: int = 2_000_000

    def __post_init__(self):
        if self.dim < 1 or not self.delta1 > 0 or self.c2 < 1 or self.generations < 0:
            raise ValueError("need dim >= 1, delta1 > 0, c2 >= 1, generations >= 0")

    @classmethod
    def from_c1(cls, dim, c1, c2, **kw):
        return cls(dim, calibrate_delta1(dim, c1, c2), c2, **kw)

    @property
    def lambda_d(self):
        """Intensity putting one expected point in the unit ball (``inf`` once it overflows).

        Sampling never needs it: the scatter count is Poisson with mean ``mu``.
        """
        try:
            return math.exp(-log_unit_ball_volume(self.dim))
        except OverflowError:
            return math.inf

    @property
    def radius(self):
        return 1.0 + self.delta1

    @property
    def mu(self):
        """Poisson mean of the scatter, ``|S_{1+delta1}| / |S_1| = (1 + delta1)^d``."""
        return math.exp(self.dim * math.log1p(self.delta1))

    @property
    def mean_offspring(self):
        return expected_capped(self.mu, self.c2)


@dataclass(eq=False)
class SBPRealization:
    """Generations of a run; ``parents[g][i]`` indexes generation ``g - 1``.

    ``offspring_counts[g]`` holds the number of children of each member of
    generation ``g``.
    """

    config: SBPConfig
    generations: list
    parents: list
    birth_radii: list
    offspring_counts: list = field(default_factory=list)
    extinct: bool = False

    @property
    def sizes(self):
        return [len(g) for g in self.generations]

    def projected(self, g):
        return project_L(self.generations[g])


def _ball_offsets(rng, n, dim, radius, full=True):
    """Uniform points in the ball of ``radius``: displacement (or its first two coordinates) and norm."""
    rho = radius * rng.random(n) ** (1.0 / dim)
    if full:
        g = rng.standard_normal((n, dim))
        return g * (rho / np.linalg.norm(g, axis=1))[:, None], rho
    head = rng.standard_normal((n, min(dim, 2)))
    rest = rng.chisquare(dim - 2, n) if dim > 2 else np.zeros(n)
    norm = np.sqrt(np.sum(head * head, axis=1) + rest)
    return head * (rho / norm)[:, None], rho


def _truncate(owner, rho, c2):
    """Keep the ``c2`` closest scattered points of every parent; returns kept positions."""
    order = np.lexsort((rho, owner))
    first = np.searchsorted(owner[order], owner[order], side="left")
    rank = np.arange(order.size) - first
    return np.sort(order[rank < c2])


def _generation(rng, n_parents, mu, dim, radius, c2, full):
    counts = rng.poisson(mu, n_parents)
    owner = np.repeat(np.arange(n_parents), counts)
    offs, rho = _ball_offsets(rng, owner.size, dim, radius, full)
    keep = _truncate(owner, rho, c2)
    kept = np.bincount(owner[keep], minlength=n_parents)
    return owner[keep], offs[keep], rho[keep], kept


def run_sbp(config, roots=None):
    """Run ``config.generations`` generations from ``roots`` (default: the origin).

    Generation ``g`` draws from ``stream(seed, g)``.
    """
    d = config.dim
    z = np.zeros((1, d)) if roots is None else np.asarray(roots, dtype=float).reshape(-1, d)
    gens, parents, radii, counts = [z], [np.full(len(z), -1)], [np.zeros(len(z))], []
    for g in range(1, config.generations + 1):
        rng = stream(config.seed, g)
        owner, offs, rho, kept = _generation(rng, len(z), config.mu, d, config.radius, config.c2,
                                             True)
        counts.append(kept)
        if owner.size == 0:
            return SBPRealization(config, gens, parents, radii, counts, True)
        if owner.size > config.max_population:
            raise RuntimeError(f"generation {g} holds {owner.size} individuals, above "
                               f"max_population={config.max_population}")
        z = z[owner] + offs
        gens.append(z)
        parents.append(owner)
        radii.append(rho)
    return SBPRealization(config, gens, parents, radii, counts, False)


def project_L(x):
    """``sqrt(d) (x_1, x_2)`` for a point (or rows of points) in ``R^d``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    if d < 2:
        raise ValueError("projection needs d >= 2")
    return math.sqrt(d) * x[..., :2]


def sample_sphere(n, d, rng):
    """``n`` points uniform on the unit sphere in ``R^d``."""
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1)[:, None]


def overlap_ratio(d, x1, x2, r1, r2, N, seed=0, level=0.95, chunk=200_000):
    """Fraction of ``S_{r1}(x1)`` lying inside ``S_{r2}(x2)``, by uniform sampling.

    ``x1``, ``x2`` are points of ``R^d`` (scalars are read as points on the
    first axis). Only the component of each sample along ``x2 - x1`` and its
    norm are needed, so sampling is done in those two coordinates.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    w = np.zeros(d)
    w_in = np.atleast_1d(np.asarray(x2, dtype=float) - np.asarray(x1, dtype=float))
    w[:w_in.size] = w_in
    dist = float(np.linalg.norm(w))
    rng = stream(seed, 0)
    hits, done = 0, 0
    while done < N:
        n = min(chunk, N - done)
        rho = r1 * rng.random(n) ** (1.0 / d)
        g1 = rng.standard_normal(n)
        rest = rng.chisquare(d - 1, n) if d > 1 else np.zeros(n)
        along = rho * g1 / np.sqrt(g1 * g1 + rest)
        sq = rho * rho - 2.0 * along * dist + dist * dist
        hits += int(np.count_nonzero(sq <= r2 * r2))
        done += n
    return wilson_ci(hits, N, level)


def lens_fraction_2d(dist, r=1.0):
    """Area of two overlapping radius-``r`` discs at ``dist``, over the disc area."""
    if dist >= 2 * r:
        return 0.0
    area = 2 * r * r * math.acos(dist / (2 * r)) - 0.5 * dist * math.sqrt(4 * r * r - dist * dist)
    return area / (math.pi * r * r)


def lattice_square(i, j, M):
    """``S_{i,j} = [M(i - 1/2), M(i + 1/2)] x [M(j - 1/2), M(j + 1/2)]`` as (lower, upper)."""
    c = np.array([i, j], dtype=float) * M
    return c - M / 2, c + M / 2


def _in_square(p, square):
    lo, hi = square
    return np.all((p >= lo) & (p <= hi), axis=-1)


def _projected_tree(config, n_gen, start, seed):
    """Projected positions, parents and birth radii of generations ``0..n_gen``."""
    scale = math.sqrt(config.dim)
    pos = [np.asarray(start, dtype=float).reshape(1, 2)]
    par, rad = [np.array([-1])], [np.zeros(1)]
    for g in range(1, n_gen + 1):
        rng = stream(seed, g)
        owner, offs, rho, _ = _generation(rng, len(pos[-1]), config.mu, config.dim,
                                          config.radius, config.c2, False)
        if owner.size > config.max_population:
            raise RuntimeError(f"generation {g} holds {owner.size} individuals, above "
                               f"max_population={config.max_population}")
        pos.append(pos[-1][owner] + scale * offs)
        par.append(owner)
        rad.append(rho)
    return pos, par, rad


def box_reach_probability(config, M, N0, start=(0.0, 0.0), trials=200, square=(0, 0),
                          level=0.95):
    """P(projected generation ``N0`` from ``start`` meets both ``S_{i+1,j-1}`` and ``S_{i+1,j+1}``).

    ``start`` is a projected position inside ``S_{i,j}``, ``(i, j) = square``.
    Trial ``t`` uses seed ``derive_seed(config.seed, t)``.
    """
    if not M > 0 or N0 < 0:
        raise ValueError("need M > 0 and N0 >= 0")
    i, j = square
    up, down = lattice_square(i + 1, j + 1, M), lattice_square(i + 1, j - 1, M)
    hits = 0
    for t in range(trials):
        pos, _, _ = _projected_tree(config, N0, start, derive_seed(config.seed, t))
        last = pos[-1]
        hits += bool(_in_square(last, up).any() and _in_square(last, down).any())
    return wilson_ci(hits, trials, level)


def box_reach_curve(c1_values, dim, c2, M, N0, start=(0.0, 0.0), trials=200, seed=0,
                    square=(0, 0), level=0.95):
    """Box-reach estimates for several ``c1`` on coupled realizations.

    Each trial grows one tree with the largest ``delta1``. A smaller ball is
    the same scatter restricted to a smaller radius, and the ``c2`` closest
    points inside it are a prefix of the ``c2`` closest overall, so the tree
    for any smaller ``c1`` is the subtree of children born within its radius.
    Estimates are therefore monotone in ``c1`` on every realization.
    """
    c1s = sorted(float(c) for c in c1_values)
    deltas = [calibrate_delta1(dim, c, c2) for c in c1s]
    big = SBPConfig(dim, deltas[-1], c2, N0, seed)
    i, j = square
    up, down = lattice_square(i + 1, j + 1, M), lattice_square(i + 1, j - 1, M)
    hits = np.zeros(len(c1s), dtype=np.int64)
    for t in range(trials):
        pos, par, rad = _projected_tree(big, N0, start, derive_seed(seed, t))
        for c, delta in enumerate(deltas):
            alive = np.ones(1, dtype=bool)
            for g in range(1, N0 + 1):
                alive = alive[par[g]] & (rad[g] <= 1.0 + delta)
            last = pos[-1][alive]
            hits[c] += bool(_in_square(last, up).any() and _in_square(last, down).any())
    return [(c, wilson_ci(int(h), trials, level)) for c, h in zip(c1s, hits)]


def oriented_chain_demo(config, M, N0, levels, start=(0.0, 0.0)):
    """Illustrative chaining of projected SBP steps over the oriented lattice.

    A step at ``(i, j)`` succeeds when its generation ``N0`` meets both
    squares ahead; the next steps start from the point nearest each square
    centre. Collision and overlap errors of the full construction are not
    modelled; this only visualises how successful steps form open sites.
    Returns ``{(i, j): success}`` for every attempted site.
    """
    sites = {(0, 0): np.asarray(start, dtype=float)}
    status = {}
    for i in range(levels):
        for j in range(-i, i + 1, 2):
            if (i, j) not in sites:
                continue
            pos, _, _ = _projected_tree(config, N0, sites[(i, j)],
                                        derive_seed(config.seed, i, j + levels))
            last = pos[-1]
            hits = {dj: last[_in_square(last, lattice_square(i + 1, j + dj, M))] for dj in (-1, 1)}
            status[(i, j)] = all(h.size for h in hits.values())
            if status[(i, j)]:
                for dj, hit in hits.items():
                    centre = np.array([i + 1, j + dj]) * M
                    best = hit[np.argmin(np.sum((hit - centre) ** 2, axis=1))]
                    sites.setdefault((i + 1, j + dj), best)
    return status
