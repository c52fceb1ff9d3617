import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from gnperc.gnmodel import AlphaSpec
from gnperc.mc import (BracketError, CrossingProbe, ExperimentSpec, WindowTooSmall,
                       bisect_critical, crossing_curve, run_trials, summarize, wilson_ci)
from gnperc.rng import stream

from oracles import wilson


# --- Wilson intervals ---------------------------------------------------------------

def test_wilson_examples():
    est = wilson_ci(50, 100)
    assert est.lower == pytest.approx(0.4038, abs=1e-3)
    assert est.upper == pytest.approx(0.5962, abs=1e-3)
    assert wilson_ci(0, 30).lower == 0.0
    assert wilson_ci(30, 30).upper == 1.0
    with pytest.raises(ValueError):
        wilson_ci(3, 0)


@given(st.integers(1, 5000), st.floats(0, 1), st.sampled_from([0.9, 0.95, 0.99]))
def test_wilson_matches_textbook(n, frac, level):
    k = int(frac * n)
    est = wilson_ci(k, n, level)
    lo, hi = wilson(k, n, stats.norm.ppf(0.5 + level / 2))
    assert est.lower == pytest.approx(lo, abs=1e-12) and est.upper == pytest.approx(hi, abs=1e-12)
    assert est.lower <= est.p_hat <= est.upper


def test_wilson_coverage():
    rng = stream(21)
    k = rng.binomial(100, 0.3, size=1000)
    cover = np.mean([wilson_ci(int(x), 100).lower <= 0.3 <= wilson_ci(int(x), 100).upper
                     for x in k])
    assert 0.93 <= cover <= 0.97


# --- trials -------------------------------------------------------------------------

def _spec(**kw):
    base = dict(alpha=AlphaSpec.gn_k(1, 1.6), dim=2, L=10, trials=12, base_seed=4)
    base.update(kw)
    return ExperimentSpec(**base)


def test_spec_validation():
    with pytest.raises(ValueError):
        _spec(trials=0)
    with pytest.raises(ValueError):
        _spec(variant="directed")
    with pytest.raises(ValueError):
        _spec(axis=2)
    s = _spec()
    assert ExperimentSpec.from_dict(s.to_dict()) == s


def test_window_too_small():
    with pytest.raises(WindowTooSmall):
        run_trials(_spec(alpha=AlphaSpec.gn_k(40, 1.0), L=2, margin=0.5))


def test_trials_deterministic_and_thread_independent():
    a = run_trials(_spec())
    b = run_trials(_spec())
    c = run_trials(_spec(), threads=2)
    d = run_trials(_spec(), threads=8)
    assert a == b == c == d
    assert [r.index for r in a] == list(range(12))
    assert run_trials(_spec(base_seed=5)) != a


def test_curve_monotone_and_zero():
    spec = _spec(alpha=AlphaSpec.gn_k(1, 1.0), trials=30)
    curve = crossing_curve([0.0, 1.0, 1.4, 2.0, 3.0], spec)
    p = [est.p_hat for _, est in curve]
    assert p[0] == 0.0
    assert all(b >= a for a, b in zip(p, p[1:]))
    with pytest.raises(ValueError):
        crossing_curve([2.0, 1.0], spec)


def test_curve_thread_independent():
    spec = _spec(alpha=AlphaSpec.gn_k(1, 1.0), trials=10)
    assert crossing_curve([1.2, 1.8], spec) == crossing_curve([1.2, 1.8], spec, threads=4)


def test_gn2_dominates_gn1_at_alpha_one():
    for L in (10, 20):
        spec = _spec(alpha=AlphaSpec.gn_k(2, 1.0), L=L, trials=60, base_seed=3)
        one = CrossingProbe(spec, family=lambda a: AlphaSpec.gn_k(1, a)).crossings(1.0)
        two = CrossingProbe(spec, family=lambda a: AlphaSpec.gn_k(2, a)).crossings(1.0)
        assert np.all(two >= one)
        assert two.mean() > one.mean()


def test_crossing_trend_in_window():
    sub = [summarize(run_trials(_spec(alpha=AlphaSpec.gn_k(1, 1.3), L=L, trials=40,
                                      base_seed=2))).p_hat for L in (10, 20, 40)]
    sup = [summarize(run_trials(_spec(alpha=AlphaSpec.gn_k(1, 2.0), L=L, trials=40,
                                      base_seed=2))).p_hat for L in (10, 20, 40)]
    assert sub[0] >= sub[1] >= sub[2]
    assert sup[0] <= sup[1] <= sup[2]


# --- bisection ----------------------------------------------------------------------

def test_bisect_step_oracle():
    res = bisect_critical(estimator=lambda a: float(a >= 7), bracket=(1, 45), tol=0.5)
    assert abs(res.alpha_hat - 7) <= 0.5
    assert res.upper - res.lower < 0.5
    assert res.L is None
    rows = res.probe_rows()
    assert rows[0][:2] == (1.0, 0.0) and rows[1][:2] == (45.0, 1.0)


def test_bisect_bracket_errors():
    with pytest.raises(BracketError):
        bisect_critical(estimator=lambda a: float(a >= 7), bracket=(8, 45))
    with pytest.raises(BracketError):
        bisect_critical(estimator=lambda a: float(a >= 7), bracket=(45, 1))
    with pytest.raises(ValueError):
        bisect_critical(estimator=lambda a: 0.5, tol=0)
    with pytest.raises(ValueError):
        bisect_critical()


def test_bisect_simulated_small():
    spec = _spec(alpha=AlphaSpec.gn_k(1, 1.0), L=10, trials=40)
    res = bisect_critical(spec, bracket=(0.5, 6.0), tol=0.25, trials_per_probe=40)
    assert 1.0 < res.alpha_hat < 3.0
    assert res.L == 10
    # probes with common random numbers are monotone in alpha
    pts = sorted((a, p) for a, p, *_ in res.probe_rows())
    assert all(q >= p for (_, p), (_, q) in zip(pts, pts[1:]))
