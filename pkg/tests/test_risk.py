import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from stpot.dependence import VariogramParams
from stpot.risk import (FailureProbabilityEstimator, FirstOrderApproximationWarning,
                        homogenized_level, homogenized_threshold, iid_failure_prob,
                        joint_failure_prob, marginal_failure_prob, tail_factor)
from stpot.scedasis import ScedasisEstimate
from stpot.synth import SynthSpec, simulate_panel
from stpot.tail import fit_tail


def test_iid_at_threshold():
    y = np.random.default_rng(0).pareto(3, 5000) + 1
    fit = fit_tail(y, 200)
    assert iid_failure_prob(fit.threshold, 200, y) == pytest.approx(200 / 5000, rel=1e-12)
    with pytest.raises(ValueError):
        iid_failure_prob(1.0, 5000, y)


def test_tail_factor_examples():
    assert 0.1 * tail_factor(math.log(2), 0.0, 1.0) == pytest.approx(0.05)
    assert tail_factor(5.0, -0.5, 2.0) == 0.0  # endpoint at 4
    assert tail_factor(0.0, 0.3, 1.0) == 1.0


@pytest.fixture(scope="module")
def fitted():
    spec = SynthSpec(n=4000, m=4, gamma=0.2, c_kind="linear", c_params=(1, 1), seed=3)
    panel = simulate_panel(spec)
    est = FailureProbabilityEstimator(k=800, bandwidth=0.1).fit(panel)
    return spec, panel, est


@pytest.mark.parametrize("rule", ["calibrated", "order_statistic"])
def test_marginal_at_level(fitted, rule):
    spec, panel, est = fitted
    z, _ = homogenized_level(est.tail_, 4, est.sample_, rule)
    t = np.linspace(0.05, 0.95, 7)
    p = marginal_failure_prob(t, 1, z, est.tail_, est.scedasis_, est.sample_, rule)
    np.testing.assert_allclose(p, est.scedasis_.at(t, 1) * 800 / est.tail_.n_total, rtol=1e-12)


def test_order_statistic_level_is_kth_largest(fitted):
    _, _, est = fitted
    z = homogenized_threshold(est.sample_)
    assert (est.sample_.z >= z).sum() == 800


def test_calibrated_level_closed_form(fitted):
    _, _, est = fitted
    tf = est.tail_
    z, a = homogenized_level(tf, 4)
    g = tf.gamma_hat
    assert z == pytest.approx(tf.threshold + tf.scale_hat * (4 ** g - 1) / g, rel=1e-12)
    assert a == pytest.approx(tf.scale_hat * 4 ** g)


def test_linear_in_c(fitted):
    _, _, est = fitted
    sc = est.scedasis_
    doubled = ScedasisEstimate(sc.t_grid, 2 * sc.c_hat, sc.bandwidth)
    t = np.linspace(0, 1, 11)
    level = est.z_threshold_ + 30
    a = marginal_failure_prob(t, 2, level, est.tail_, sc, est.sample_)
    b = marginal_failure_prob(t, 2, level, est.tail_, doubled, est.sample_)
    np.testing.assert_allclose(b, 2 * a, rtol=1e-12)


def test_monotone_in_level(fitted):
    _, _, est = fitted
    levels = np.linspace(est.z_threshold_, est.z_threshold_ + 200, 50)
    p = [est.predict(0.5, 0, x) for x in levels]
    assert np.all(np.diff(p) <= 0)


def test_homogeneous_profile_constant(fitted):
    _, _, est = fitted
    sc = ScedasisEstimate(np.linspace(0, 1, 5), np.full((5, 4), 0.25), 0.1)
    p = marginal_failure_prob(np.linspace(0, 1, 9), 0, est.z_threshold_ + 10, est.tail_, sc,
                              est.sample_)
    assert np.ptp(p) == 0.0


def test_unknown_rule(fitted):
    _, _, est = fitted
    with pytest.raises(ValueError):
        homogenized_level(est.tail_, 4, est.sample_, "other")


def test_joint_limits():
    k, N = 100, 10_000
    assert joint_failure_prob(0.004, 0.007, k, N, v=0.0) == pytest.approx(0.004)
    with pytest.warns(FirstOrderApproximationWarning):
        assert joint_failure_prob(0.004, 0.007, k, N, v=math.inf) == 0.0
    p = k / N
    ref = p * (2 - 2 * stats.norm.cdf(1.0))
    assert joint_failure_prob(p, p, k, N, v=4.0) == pytest.approx(ref, rel=1e-12)
    assert ref / p == pytest.approx(0.3173, abs=1e-4)
    assert joint_failure_prob(p, p, k, N, l_hat=2 * stats.norm.cdf(1.0)) == pytest.approx(ref)
    with pytest.raises(ValueError):
        joint_failure_prob(p, p, k, N)
    with pytest.raises(ValueError):
        joint_failure_prob(p, 2 * p, k, N, l_hat=1.5)


@settings(max_examples=150, deadline=None)
@given(st.floats(1e-7, 0.5), st.floats(1e-7, 0.5), st.floats(0, 40), st.integers(10, 1000))
def test_joint_bounds(pi, pj, v, k):
    N = 100_000
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FirstOrderApproximationWarning)
        pj_hat = joint_failure_prob(pi, pj, k, N, v=v)
    assert 0.0 <= pj_hat <= min(pi, pj) <= max(pi, pj) <= 1.0


def test_query_two_stations(fitted):
    spec, panel, est = fitted
    vg = VariogramParams(0.3, 1.1, 0.1, 0.9)
    res = est.query(np.linspace(0, 1, 5), [0, 1], est.z_threshold_ + 20, vg, np.array([0.5, 0.2]))
    assert set(res.p_marginal) == {0, 1}
    assert np.all(res.p_joint <= np.minimum(res.p_marginal[0], res.p_marginal[1]))
    assert res.components["variogram"] > 0
    with pytest.raises(ValueError):
        est.query([0.5], [0, 1], 50.0)


def _worst_ratio(gamma, seed):
    """Largest max(p_hat/p_true, p_true/p_hat) over stations, interior times and
    levels with p_true in [1e-4, 1e-2]; N = 1e5 pooled cells, k = 2000."""
    spec = SynthSpec(n=20_000, m=5, gamma=gamma, c_kind="linear", c_params=(1, 1), seed=seed)
    panel = simulate_panel(spec)
    est = FailureProbabilityEstimator(k=2000, bandwidth=0.1).fit(panel)
    t = np.array([0.2, 0.5, 0.8])
    rates = spec.m * spec.true_c(t)
    worst = 1.0
    for p_target in (1e-2, 1e-3, 1e-4):
        level = _level(spec, p_target)
        p_true = rates * spec.survival(level)
        for j in range(spec.m):
            r = est.predict(t, j, level) / p_true[:, j]
            ok = p_true[:, j] >= 1e-4
            worst = max(worst, np.max(np.maximum(r, 1 / r)[ok]))
    return worst


def _level(spec, p):
    g, s, loc = spec.gamma, spec.scale, spec.base_level
    ratio = p / spec.p_base
    return loc - s * math.log(ratio) if g == 0 else loc + s * (ratio ** (-g) - 1) / g


@pytest.mark.slow
@pytest.mark.parametrize("gamma", [0.1, 0.3, 0.0, -0.1])
def test_factor_two_against_truth(gamma):
    worst = [_worst_ratio(gamma, seed) for seed in range(20)]
    assert max(worst) <= 2.0
