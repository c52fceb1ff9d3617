import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import ndimage, stats

from gnperc.clusters import union_find
from gnperc.geometry import BoxRegion, PointSet, knn_table, sample_poisson
from gnperc.renorm import (PC_SITE_NUMERICAL, PC_SITE_RIGOROUS, alpha_bound_2d,
                           banana_alpha_threshold, banana_points, banana_prob, banana_scan,
                           corridor_boxes, corridor_check, good_box_prob, grid_site_percolation,
                           n_tilde, optimal_delta, site_threshold, subsquare_good_scan,
                           theorem7_parameters)
from gnperc.rng import stream


def _pts(coords, box):
    return PointSet(np.asarray(coords, dtype=float).reshape(-1, box.dim), box, 1.0)


# --- banana boxes -----------------------------------------------------------------

def test_banana_empty_and_single_point():
    box = BoxRegion([0, 0], [6, 6])
    grid = banana_scan(_pts(np.empty((0, 2)), box), 1.0, 1)
    assert grid.grid_dims == (2, 2) and not grid.good.any()
    grid = banana_scan(_pts([[1.5, 4.5]], box), 1.0, 1)
    assert grid.good.tolist() == [[False, True], [False, False]]
    assert grid.criterion == ("banana", 1.0, 1)


def test_banana_requires_empty_rim():
    box = BoxRegion([0, 0], [3, 3])
    assert not banana_scan(_pts([[1.5, 1.5], [0.2, 0.2]], box), 1.0, 1).good.any()
    assert not banana_scan(_pts([[1.5, 1.5], [1.6, 1.4]], box), 1.0, 1).good.any()
    assert not banana_scan(_pts([[0.5, 1.5]], box), 1.0, 1).good.any()
    # a neighbouring sub-box does not matter
    wide = BoxRegion([0, 0], [6, 3])
    assert banana_scan(_pts([[1.5, 1.5], [3.1, 1.5]], wide), 1.0, 1).good.tolist() == \
        [[True], [False]]


def test_banana_points_are_isolated_centres():
    pts = sample_poisson(2, 1.0, BoxRegion.cube(60, 2), 4)
    delta, n = 1 / 3, 4
    idx = banana_points(pts, delta, n)
    grid = banana_scan(pts, delta, n)
    assert idx.size == int(grid.counts.sum())
    t = knn_table(pts, 1)
    assert np.all(t.distances[idx, 0] >= delta)
    cells = np.floor(pts.coords[idx] / (3 * delta * n)).astype(int)
    assert np.all(grid.good[cells[:, 0], cells[:, 1]])


def test_banana_region_must_tile():
    pts = sample_poisson(2, 1.0, BoxRegion.cube(10, 2), 1)
    with pytest.raises(ValueError):
        banana_scan(pts, 1.0, 2)
    with pytest.raises(ValueError):
        banana_scan(pts, 0.0, 2)


def test_banana_frequency_at_third():
    # one banana sub-box per cell (n=1, delta=1/3): side-1 boxes, probability e^-1/9
    pts = sample_poisson(2, 1.0, BoxRegion.cube(300, 2), 5)
    grid = banana_scan(pts, 1 / 3, 1)
    p = banana_prob(1 / 3)
    N = grid.good.size
    assert abs(grid.good_fraction - p) < 3 * math.sqrt(p * (1 - p) / N)


def test_good_cell_frequency_and_independence():
    delta, n = 1 / 3, 2
    pts = sample_poisson(2, 1.0, BoxRegion.cube(400, 2), 6)
    g = banana_scan(pts, delta, n).good
    p = good_box_prob(delta, n)
    assert abs(g.mean() - p) < 3 * math.sqrt(p * (1 - p) / g.size)
    a, b = g[:-1, :].ravel(), g[1:, :].ravel()
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 3 / math.sqrt(a.size)


def test_banana_crossing_implies_graph_crossing():
    delta, n = 1 / 3, 6
    alpha = 1.01 * banana_alpha_threshold(n, delta)
    checked = 0
    for seed in range(3):
        pts = sample_poisson(2, 1.0, BoxRegion.cube(n * 12, 2), 30 + seed)
        grid = banana_scan(pts, delta, n)
        rep = grid_site_percolation(grid)
        if not rep.crossing:
            continue
        root = _cell_roots(grid.good)
        cluster = (root == root.ravel()[rep.crossing_component]) & grid.good
        idx = banana_points(pts, delta, n)
        cell = np.floor(pts.coords[idx] / (3 * delta * n)).astype(int)
        keep = cluster[cell[:, 0], cell[:, 1]]
        idx, cell = idx[keep], cell[keep]
        r = alpha * knn_table(pts, 1).distances[idx, 0]
        i, j = np.triu_indices(idx.size, 1)
        dij = np.linalg.norm(pts.coords[idx[i]] - pts.coords[idx[j]], axis=1)
        edge = dij <= np.maximum(r[i], r[j])
        lab = union_find(idx.size, np.column_stack([i[edge], j[edge]]))
        assert np.all(lab == lab[0])
        # the banana points reach both faces of the cell grid
        assert cell[:, 0].min() == 0 and cell[:, 0].max() == grid.good.shape[0] - 1
        checked += 1
    assert checked > 0


def _cell_roots(good):
    ids = np.arange(good.size).reshape(good.shape)
    e = [np.column_stack([ids[:-1][good[:-1] & good[1:]], ids[1:][good[:-1] & good[1:]]]),
         np.column_stack([ids[:, :-1][good[:, :-1] & good[:, 1:]],
                          ids[:, 1:][good[:, :-1] & good[:, 1:]]])]
    return union_find(good.size, np.concatenate(e)).reshape(good.shape)


# --- closed forms -----------------------------------------------------------------

def test_good_box_prob_examples():
    assert good_box_prob(1 / 3, 6) == pytest.approx(1 - (1 - math.exp(-1) / 9) ** 36, rel=1e-13)
    assert good_box_prob(1 / 3, 6) == pytest.approx(0.777413121229263, rel=1e-13)
    assert good_box_prob(1 / 3, 0) == 0.0
    assert banana_prob(1.0) == pytest.approx(1.2341e-4, rel=1e-4)


def test_optimal_delta():
    assert optimal_delta() == pytest.approx(1 / 3)
    peak = banana_prob(1 / 3)
    assert peak == pytest.approx(0.0408754934634936, rel=1e-14)
    grid = np.linspace(0.05, 1.0, 2001)
    vals = np.array([banana_prob(d) for d in grid])
    assert abs(grid[np.argmax(vals)] - 1 / 3) < 1e-3
    assert peak > banana_prob(0.3) and peak > banana_prob(0.37)


def test_n_tilde_examples():
    assert n_tilde(PC_SITE_RIGOROUS) == 6
    assert n_tilde(1e-9) == 1
    assert n_tilde(0.59) == 5
    for pc in (0.5, PC_SITE_RIGOROUS, 0.9):
        n = n_tilde(pc)
        assert good_box_prob(1 / 3, n) >= pc > good_box_prob(1 / 3, n - 1)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            n_tilde(bad)


def test_alpha_bound():
    assert alpha_bound_2d() == pytest.approx(6 * math.sqrt(45))
    assert alpha_bound_2d() == pytest.approx(40.2492, abs=5e-5)
    assert alpha_bound_2d() < 41
    assert alpha_bound_2d(0.59) == pytest.approx(33.541, abs=5e-4)
    assert banana_alpha_threshold(6, 1 / 3) == pytest.approx(alpha_bound_2d())
    assert banana_alpha_threshold(6, 0.7) == pytest.approx(alpha_bound_2d())
    assert site_threshold() == PC_SITE_RIGOROUS and site_threshold(True) == PC_SITE_NUMERICAL


@given(st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_alpha_bound_monotone(p, q):
    lo, hi = sorted((p, q))
    assert alpha_bound_2d(lo) <= alpha_bound_2d(hi)


# --- subsquare construction -------------------------------------------------------

def test_subsquare_examples():
    box = BoxRegion([0, 0], [2, 1])
    grid = subsquare_good_scan(_pts(np.empty((0, 2)), box), 3, 90)
    assert grid.grid_dims == (2, 1) and not grid.good.any()
    # one point in each of the 9 subsquares of the left square
    c = (np.arange(3) + 0.5) / 3
    pts = _pts(np.stack(np.meshgrid(c, c), -1).reshape(-1, 2), box)
    assert subsquare_good_scan(pts, 3, 9).good.tolist() == [[True], [False]]
    vac = subsquare_good_scan(pts, 3, 8)
    assert vac.vacuous and not vac.good.any()
    with pytest.raises(ValueError):
        subsquare_good_scan(pts, 4, 100)


def test_subsquare_high_density():
    pts = sample_poisson(2, 200.0, BoxRegion([0, 0], [40, 25]), 8)
    grid = subsquare_good_scan(pts, 5, 5000)
    assert grid.good.size == 1000
    assert grid.good_fraction > 0.99


def test_theorem7_parameters():
    p = theorem7_parameters(0.5)
    assert (p.n, p.density, p.m, p.k) == (11, 802.0, 1936.0, 1937)
    eps = (1 - p.pc) / (2 * p.n**2)
    mu = p.density / p.n**2
    assert stats.poisson.pmf(0, mu) < eps <= stats.poisson.pmf(0, (p.density - 1) / p.n**2)
    q = p.per_subsquare_cap
    assert stats.poisson.sf(q, mu) < eps <= stats.poisson.sf(q - 1, mu)
    assert p.n > 1 + 2 * math.sqrt(5) / 0.5 and p.n % 2 == 1
    with pytest.raises(ValueError):
        theorem7_parameters(0.0)


def test_corridor_geometry():
    boxes = corridor_boxes(5)
    assert len(boxes) == 6
    assert np.allclose(boxes[0].lower, [0.4, 0.4]) and np.allclose(boxes[-1].upper, [1.6, 0.6])
    assert all(np.isclose(b.volume, 1 / 25) for b in boxes)


def test_corridor_connected_under_parameters():
    p = theorem7_parameters(0.5)
    for seed in range(2):
        win = BoxRegion([-1.5, -1.5], [3.5, 2.5])
        pts = sample_poisson(2, p.density, win, 50 + seed)
        rep = corridor_check(pts, p.n, p.k, 0.5)
        assert rep.certified and rep.empty_boxes == 0
        assert rep.connected


def test_corridor_fails_without_enough_neighbours():
    pts = sample_poisson(2, 802.0, BoxRegion([-1.5, -1.5], [3.5, 2.5]), 3)
    rep = corridor_check(pts, 11, 1, 0.5)
    assert not rep.connected


# --- grid percolation -------------------------------------------------------------

def test_grid_trivial():
    assert grid_site_percolation(np.ones((5, 7), bool)).crossing
    assert not grid_site_percolation(np.zeros((5, 7), bool)).crossing
    diag = np.eye(4, dtype=bool)
    assert not grid_site_percolation(diag).crossing
    with pytest.raises(ValueError):
        grid_site_percolation(diag, axis=2)


@given(st.integers(0, 2**32 - 1), st.floats(0.3, 0.8), st.integers(0, 1))
def test_grid_matches_ndimage(seed, p, axis):
    good = stream(seed).random((30, 25)) < p
    lab, _ = ndimage.label(good)
    first, last = np.take(lab, 0, axis=axis), np.take(lab, -1, axis=axis)
    expect = bool(np.intersect1d(first[first > 0], last[last > 0]).size)
    assert grid_site_percolation(good, axis).crossing == expect


def test_iid_grid_supercritical():
    hits = sum(grid_site_percolation(stream(7, t).random((100, 100)) < 0.78).crossing
               for t in range(200))
    assert hits / 200 > 0.95
