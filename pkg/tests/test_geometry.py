import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from gnperc.geometry import (BoxRegion, PointSet, default_margin, knn_table,
                             log_unit_ball_volume, pair_distance, sample_poisson,
                             unit_ball_volume)
from gnperc.rng import derive_seed, stream

from oracles import brute_knn


@pytest.mark.parametrize("d, expected", [(1, 2.0), (2, math.pi), (3, 4 * math.pi / 3)])
def test_unit_ball_volume_small(d, expected):
    assert unit_ball_volume(d) == pytest.approx(expected, rel=1e-15)


def _mp_log_c(d):
    mpmath.mp.dps = 50
    return mpmath.mpf(d) / 2 * mpmath.log(mpmath.pi) - mpmath.loggamma(mpmath.mpf(d) / 2 + 1)


@pytest.mark.parametrize("d", [1, 2, 5, 17, 50, 100, 101, 250, 400])
def test_unit_ball_volume_high_precision(d):
    ref = mpmath.exp(_mp_log_c(d))
    assert unit_ball_volume(d) > 0
    assert abs(unit_ball_volume(d) / float(ref) - 1) <= 1e-12


@pytest.mark.parametrize("d", [2, 100, 1000, 10**5])
def test_log_unit_ball_volume(d):
    ref = _mp_log_c(d)
    assert abs(log_unit_ball_volume(d) - float(ref)) <= 1e-12 * max(1.0, abs(float(ref)))


@pytest.mark.parametrize("d", [0, -1, 2.5])
def test_unit_ball_volume_domain(d):
    with pytest.raises(ValueError):
        unit_ball_volume(d)


def test_box_validation():
    with pytest.raises(ValueError):
        BoxRegion([0.0, 0.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        BoxRegion([0.0], [1.0, 2.0])
    b = BoxRegion.cube(3.0, 2, origin=-1.0)
    assert b.volume == 9.0 and b.dim == 2
    assert b.contains_box(BoxRegion([0, 0], [1, 1]))
    assert b.inflate(1.0).volume == 25.0


def test_sample_rejects_degenerate_box():
    with pytest.raises(ValueError):
        sample_poisson(2, 5.0, BoxRegion([0, 0], [0, 1]), 1)


def test_sample_deterministic_and_inside():
    box = BoxRegion.cube(20, 2)
    a = sample_poisson(2, 1.0, box, 42)
    b = sample_poisson(2, 1.0, box, 42)
    c = sample_poisson(2, 1.0, box, 43)
    assert np.array_equal(a.coords, b.coords)
    assert not np.array_equal(a.coords[:5], c.coords[:5])
    assert np.all(box.contains(a.coords))


def test_sample_count_mean():
    # lambda=1 on [0,100]^2: mean 10^4, sd 100; the mean of 200 counts has sd 100/sqrt(200)
    counts = [sample_poisson(2, 1.0, BoxRegion.cube(100, 2), s).n for s in range(200)]
    assert abs(np.mean(counts) - 1e4) < 3 * 100 / math.sqrt(200)


def test_sample_uniform_coordinates():
    pts = sample_poisson(2, 1.0, BoxRegion([0, 0], [50, 20]), 9)
    assert stats.kstest(pts.coords[:, 0] / 50, "uniform").pvalue > 0.01
    assert stats.kstest(pts.coords[:, 1] / 20, "uniform").pvalue > 0.01


def test_sample_spans_blocks():
    pts = sample_poisson(1, 1.0, BoxRegion([0], [200000]), 3)
    assert pts.n > 1 << 16
    assert np.unique(pts.coords).size == pts.n


def test_rng_streams_independent_of_order():
    a = stream(5, 1, 2).random(4)
    stream(5, 0).random(100)
    assert np.array_equal(a, stream(5, 1, 2).random(4))
    assert derive_seed(5, 1) != derive_seed(5, 2)
    assert derive_seed(5, 1) == derive_seed(5, 1)


def test_pair_distance_examples():
    box = BoxRegion.cube(10, 2)
    assert pair_distance((1, 5), (1, 5), box) == 0.0
    assert pair_distance((1, 5), (9, 5), box, "torus") == pytest.approx(2.0)
    assert pair_distance((1, 5), (9, 5), box, "euclidean") == pytest.approx(8.0)
    with pytest.raises(ValueError):
        pair_distance((1, 5), (9, 5), box, "manhattan")


def test_pointset_validation():
    box = BoxRegion.cube(1, 2)
    with pytest.raises(ValueError):
        PointSet(np.array([[0.5, 2.0]]), box, 1.0)
    with pytest.raises(ValueError):
        PointSet(np.array([[0.5, 0.5]]), box, 1.0, metric="sphere")
    with pytest.raises(ValueError):
        PointSet(np.array([[0.5, 0.5]]), box, 0.0)


def test_knn_hand_example():
    pts = PointSet(np.array([[0.0], [1.0], [3.0]]), BoxRegion([0], [3]), 1.0)
    t = knn_table(pts, 2)
    assert t.distances[1].tolist() == [1.0, 2.0]
    assert t.indices[1].tolist() == [0, 2]
    assert not t.truncated


def test_knn_truncation_flag():
    pts = PointSet(np.array([[0.0], [1.0], [3.0]]), BoxRegion([0], [3]), 1.0)
    t = knn_table(pts, 5)
    assert t.truncated and t.columns == 2
    with pytest.raises(ValueError):
        knn_table(PointSet(np.array([[0.5]]), BoxRegion([0], [1]), 1.0), 1)


@pytest.mark.parametrize("dim, metric", [(1, "euclidean"), (2, "euclidean"), (3, "euclidean"),
                                         (2, "torus"), (3, "torus")])
def test_knn_matches_brute_force(dim, metric):
    side = (600 / 1.0) ** (1 / dim)
    pts = sample_poisson(dim, 1.0, BoxRegion.cube(side, dim), 11 + dim, metric)
    k = 6
    t = knn_table(pts, k)
    period = pts.box.sides if metric == "torus" else None
    dist, idx = brute_knn(pts.coords, k, period)
    assert np.array_equal(t.distances, dist)
    assert np.array_equal(t.indices, idx)


def test_knn_ties_broken_by_index():
    # a lattice has many exact ties
    g = np.stack(np.meshgrid(np.arange(6.0), np.arange(6.0)), -1).reshape(-1, 2)
    pts = PointSet(g, BoxRegion([0, 0], [5, 5]), 1.0)
    t = knn_table(pts, 4)
    dist, idx = brute_knn(g, 4)
    assert np.array_equal(t.indices, idx) and np.array_equal(t.distances, dist)


@given(st.integers(0, 2**63 - 1), st.integers(1, 3), st.integers(1, 5))
def test_knn_property_sorted_and_exact(seed, dim, k):
    side = (80 / 1.0) ** (1 / dim)
    pts = sample_poisson(dim, 1.0, BoxRegion.cube(side, dim), seed)
    if pts.n < 2:
        return
    t = knn_table(pts, k)
    assert np.all(np.diff(t.distances, axis=1) >= 0)
    dist, idx = brute_knn(pts.coords, t.columns)
    assert np.array_equal(t.distances, dist)


def test_void_probability_2d():
    # P(d_1 > r) = exp(-pi r^2): pi d_1^2 ~ Exp(1) on the torus
    pts = sample_poisson(2, 1.0, BoxRegion.cube(100, 2), 5, "torus")
    t = knn_table(pts, 1)
    assert stats.kstest(math.pi * t.distances[:, 0] ** 2, "expon").pvalue > 0.01


def test_interior_and_margin():
    pts = sample_poisson(2, 1.0, BoxRegion.cube(30, 2), 2)
    inner = pts.interior(5.0)
    assert np.all(pts.coords[inner] >= 5) and np.all(pts.coords[inner] <= 25)
    assert pts.with_metric("torus").interior(5.0).all()
    assert default_margin(1, 1.0, 2) == pytest.approx(3 / math.sqrt(math.pi))


def test_scaled_pointset_keeps_expected_count():
    pts = sample_poisson(2, 1.0, BoxRegion.cube(10, 2), 2)
    s = pts.scaled(3.0)
    assert s.density * s.box.volume == pytest.approx(pts.density * pts.box.volume)
