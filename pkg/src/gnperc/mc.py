"""Monte Carlo engine: trials, Wilson intervals, crossing curves, critical-value bisection.

Trial ``i`` of an experiment is seeded by ``derive_seed(base_seed, i)``, so
results depend only on the experiment spec and the trial index, never on
scheduling. Curves and bisection probes reuse the same realizations for
every alpha (common random numbers); since edge sets grow monotonically in
each weight, the empirical curves are monotone realization by realization.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .clusters import crossing_exists, label_clusters
from .geometry import BoxRegion, default_margin, knn_table, sample_poisson
from .gnmodel import VARIANTS, AlphaSpec, build_graph, choose_kmax, connection_ranges
from .rng import derive_seed


class BracketError(ValueError):
    """The bisection bracket does not straddle the target probability."""


class WindowTooSmall(ValueError):
    """The sampling window holds too few points for the weight vector's support."""


@dataclass(frozen=True)
class CIEstimate:
    p_hat: float
    lower: float
    upper: float
    trials: int
    successes: int = 0
    level: float = 0.95
    discarded: int = 0

    def with_discarded(self, discarded):
        return replace(self, discarded=int(discarded))

    @property
    def stderr(self):
        if self.trials == 0:
            return math.nan
        return math.sqrt(self.p_hat * (1 - self.p_hat) / self.trials)

    def separated_from(self, other):
        return self.lower > other.upper or other.lower > self.upper


def wilson_ci(successes, trials, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    z = float(stats.norm.ppf(0.5 + level / 2))
    p = successes / trials
    z2n = z * z / trials
    centre = (p + z2n / 2) / (1 + z2n)
    half = z * math.sqrt(p * (1 - p) / trials + z2n / (4 * trials)) / (1 + z2n)
    lower = 0.0 if successes == 0 else max(0.0, centre - half)
    upper = 1.0 if successes == trials else min(1.0, centre + half)
    return CIEstimate(float(p), float(min(lower, p)), float(max(upper, p)), int(trials),
                      int(successes), float(level))


def resolve_threads(threads=None):
    if threads is None:
        threads = os.environ.get("GNPERC_THREADS", 1)
    return max(1, int(threads))


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines the distribution of a trial.

    The inner window is the cube ``[0, L]^d``; points are sampled on the
    cube inflated by ``margin`` (default: the kNN search buffer) so ranges
    near the faces are not biased by the window edge.
    """

    alpha: AlphaSpec
    dim: int = 2
    variant: str = "reach-union"
    L: float = 20.0
    density: float = 1.0
    margin: float | None = None
    trials: int = 100
    base_seed: int = 0
    axis: int = 0
    slab: float | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not self.L > 0 or not self.density > 0:
            raise ValueError("L and density must be positive")
        if not 0 <= self.axis < self.dim:
            raise ValueError("axis out of range")

    @property
    def kmax(self):
        return choose_kmax(self.alpha, self.dim, self.density)

    @property
    def effective_margin(self):
        if self.margin is not None:
            return float(self.margin)
        return default_margin(self.kmax, self.density, self.dim)

    @property
    def inner_box(self):
        return BoxRegion.cube(self.L, self.dim)

    @property
    def sample_box(self):
        return self.inner_box.inflate(self.effective_margin)

    def trial_seed(self, i):
        return derive_seed(self.base_seed, i)

    def to_dict(self):
        d = asdict(self)
        d["alpha"] = self.alpha.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["alpha"] = AlphaSpec.from_dict(d["alpha"])
        return cls(**d)


@dataclass(frozen=True)
class TrialResult:
    index: int
    seed: int
    n_points: int
    crossing: bool
    largest_fraction: float
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class _Realization:
    """A sampled window with its neighbour table, shared across alpha values."""

    index: int
    seed: int
    points: object
    table: object
    inner: np.ndarray


def _realize(spec, i, kmax):
    seed = spec.trial_seed(i)
    pts = sample_poisson(spec.dim, spec.density, spec.sample_box, seed)
    if pts.n <= kmax:
        raise WindowTooSmall(
            f"trial {i}: {pts.n} points in the sampling window but alpha needs {kmax} neighbours; "
            f"increase L (={spec.L}) or the margin")
    return _Realization(i, seed, pts, knn_table(pts, kmax), spec.inner_box.contains(pts.coords))


def _evaluate(spec, rz, alpha):
    rf = connection_ranges(rz.table, alpha)
    graph = build_graph(rz.points, rf, spec.variant)
    lab = label_clusters(graph)
    cross = crossing_exists(lab, rz.points, spec.inner_box, spec.axis, spec.slab)
    return cross.crossing, lab.largest_fraction_within(rz.inner)


def _check_window(spec, kmax):
    expected = spec.density * spec.sample_box.volume
    if expected <= kmax:
        raise WindowTooSmall(
            f"expected {expected:.1f} points in the sampling window, alpha needs {kmax} neighbours")


def run_trials(spec, threads=None):
    """Run every trial of ``spec``; results are ordered by trial index."""
    kmax = spec.kmax
    _check_window(spec, kmax)

    def one(i):
        t0 = time.perf_counter()
        rz = _realize(spec, i, kmax)
        crossing, frac = _evaluate(spec, rz, spec.alpha)
        return TrialResult(i, rz.seed, rz.points.n, bool(crossing), float(frac),
                           time.perf_counter() - t0)

    return _map(one, range(spec.trials), threads)


def _map(fn, items, threads):
    threads = resolve_threads(threads)
    if threads == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def summarize(results, level=0.95):
    """Wilson interval for the crossing frequency of a list of trials."""
    return wilson_ci(sum(r.crossing for r in results), len(results), level)


class CrossingProbe:
    """Crossing-frequency estimator over a fixed set of realizations.

    ``family(a)`` maps a scalar to a weight vector (default: the spec's
    alpha scaled by ``a``). Realizations are sampled once and reused for
    every probe.
    """

    def __init__(self, spec, family=None, trials=None, threads=None, level=0.95):
        self.spec = spec if trials is None else replace(spec, trials=trials)
        self.family = family or spec.alpha.scaled
        self.level = level
        self.threads = threads
        self.kmax = self.spec.kmax
        _check_window(self.spec, self.kmax)
        self._realizations = None

    @property
    def realizations(self):
        if self._realizations is None:
            self._realizations = _map(lambda i: _realize(self.spec, i, self.kmax),
                                      range(self.spec.trials), self.threads)
        return self._realizations

    def crossings(self, a):
        alpha = self.family(a)
        return np.array(_map(lambda rz: _evaluate(self.spec, rz, alpha)[0],
                             self.realizations, self.threads), dtype=bool)

    def __call__(self, a):
        hits = self.crossings(a)
        return wilson_ci(int(hits.sum()), hits.size, self.level)


def crossing_curve(alpha_grid, spec, family=None, threads=None, level=0.95):
    """Crossing probability estimate for each grid value, with common random numbers."""
    grid = [float(a) for a in alpha_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("alpha grid must be sorted")
    probe = CrossingProbe(spec, family, threads=threads, level=level)
    return [(a, probe(a)) for a in grid]


@dataclass
class BisectionResult:
    alpha_hat: float
    lower: float
    upper: float
    target: float
    L: float | None
    probes: list = field(default_factory=list)

    def probe_rows(self):
        """``(alpha, p_hat, ci_low, ci_high, trials)`` per probe, in evaluation order."""
        rows = []
        for a, est in self.probes:
            if isinstance(est, CIEstimate):
                rows.append((a, est.p_hat, est.lower, est.upper, est.trials))
            else:
                rows.append((a, float(est), math.nan, math.nan, 0))
        return rows


def _p(est):
    return est.p_hat if isinstance(est, CIEstimate) else float(est)


def bisect_critical(spec=None, bracket=(1.0, 45.0), target=0.5, tol=0.5, trials_per_probe=200,
                    estimator=None, family=None, threads=None):
    """Bisect for the alpha at which the crossing probability reaches ``target``.

    ``estimator`` may replace the simulation with any callable ``a -> p``
    (a float or a :class:`CIEstimate`); otherwise a :class:`CrossingProbe`
    over ``trials_per_probe`` common realizations of ``spec`` is used.
    Returns the bracket midpoint once it is narrower than ``tol``.
    """
    lo, hi = map(float, bracket)
    if not hi > lo:
        raise BracketError(f"bracket must satisfy lo < hi, got {bracket}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if estimator is None:
        if spec is None:
            raise ValueError("need a spec or an estimator")
        estimator = CrossingProbe(spec, family, trials=trials_per_probe, threads=threads)
    probes = []

    def probe(a):
        est = estimator(a)
        probes.append((a, est))
        return _p(est)

    p_lo, p_hi = probe(lo), probe(hi)
    if not p_lo < target < p_hi:
        raise BracketError(
            f"bracket [{lo}, {hi}] does not straddle target {target}: p(lo)={p_lo:.4g}, "
            f"p(hi)={p_hi:.4g}")
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if probe(mid) < target:
            lo = mid
        else:
            hi = mid
    return BisectionResult(0.5 * (lo + hi), lo, hi, target, None if spec is None else spec.L,
                           probes)
