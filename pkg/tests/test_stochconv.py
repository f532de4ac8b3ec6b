import math

import numpy as np
import pytest

from spdelab.spectral import make_dirichlet_laplacian, make_noise_weights
from spdelab.stochconv import (
    ConvolutionPath,
    cond_variance_factor,
    conditional_increments,
    convolution_bound_report,
    convolution_weight_series,
    coupled_increments,
    holder_envelope_constant,
    holder_quotient,
    increment_covariance,
    lag_maxima,
    lag_set,
    make_holder_record,
    ou_recursion,
    pathwise_bound_report,
    sample_coupled_paths,
    simulate_convolution,
    simulate_ou_path,
)


def burgers_op(n=16, gamma0=0.25):
    return make_noise_weights(make_dirichlet_laplacian(n), "power_law", gamma0=gamma0)


def test_envelope_constant_frozen():
    assert holder_envelope_constant(0.25) == pytest.approx(1.457097791958661, rel=1e-14)
    assert holder_envelope_constant(0.45) == pytest.approx(1.330818285342061, rel=1e-14)
    assert 1.999 < holder_envelope_constant(1e-8) < 2.001
    with pytest.raises(ValueError):
        holder_envelope_constant(0.5)
    with pytest.raises(ValueError):
        holder_envelope_constant(0.0)


def test_cond_variance_factor():
    assert cond_variance_factor(1.0) == pytest.approx(0.032755957487965615, rel=1e-12)
    assert cond_variance_factor(0.0) == 0.0
    # series branch meets the direct formula at the cut
    x = 1e-2
    direct = -math.expm1(-2 * x) / (2 * x) - (math.expm1(-x) / x) ** 2
    assert cond_variance_factor(x) == pytest.approx(direct, rel=1e-8)
    with pytest.raises(ValueError):
        cond_variance_factor(-0.5)


def test_increment_covariance_frozen():
    v1, c, v2 = increment_covariance(3.0, 0.1)
    assert v1 == pytest.approx(0.0751980606509956, rel=1e-13)
    assert c == pytest.approx(0.08639392643942738, rel=1e-13)
    assert v2 == 0.1
    assert increment_covariance(0.0, 0.25) == pytest.approx([0.25, 0.25, 0.25])


def test_empirical_joint_moments():
    rng = np.random.default_rng(101)
    rate, dt = 2.0, 0.05
    eta, dbeta = coupled_increments(rate, dt, (400_000,), rng)
    v1, c, v2 = increment_covariance(rate, dt)
    assert np.var(eta) == pytest.approx(v1, rel=0.015)
    assert np.var(dbeta) == pytest.approx(v2, rel=0.015)
    assert np.mean(eta * dbeta) == pytest.approx(c, rel=0.015)
    assert abs(np.mean(eta)) < 4 * math.sqrt(v1 / 400_000)


def test_conditional_mean_and_residual_independence():
    rng = np.random.default_rng(55)
    rate, dt = 3.0, 0.1
    dbeta = math.sqrt(dt) * rng.standard_normal(50_000)
    eta = conditional_increments(rate, dt, dbeta, rng)
    resid = eta - 0.8639392643942737 * dbeta  # (1 - e^-0.3)/0.3
    assert np.var(resid) == pytest.approx(dt * cond_variance_factor(rate * dt), rel=0.03)
    corr = np.corrcoef(resid, dbeta)[0, 1]
    assert abs(corr) < 4 / math.sqrt(50_000)


def test_rate_zero_convolution_is_the_driver():
    rng = np.random.default_rng(1)
    p = simulate_ou_path(0.0, 2.56, 256, rng)
    assert p.values == pytest.approx(p.driver, abs=1e-12)
    assert p.dt == pytest.approx(0.01)
    assert p.horizon == pytest.approx(2.56)
    # negative rates are treated as the rate-0 limit
    q = simulate_ou_path(-3.0, 1.0, 8, np.random.default_rng(1))
    assert q.shift == 0.0


def test_ou_recursion_matches_loop():
    rng = np.random.default_rng(4)
    inc = rng.standard_normal((2, 5))
    decay = 0.8
    got = ou_recursion(decay, inc)
    assert got.shape == (2, 6)
    for b in range(2):
        w = 0.0
        assert got[b, 0] == 0.0
        for i in range(5):
            w = decay * w + inc[b, i]
            assert got[b, i + 1] == pytest.approx(w, rel=1e-14)


def test_stationary_variance_large_sample():
    # rate 1, late horizon: variance 1/(2 rate) = 0.5
    rng = np.random.default_rng(77)
    driver, smooth = sample_coupled_paths(1.0, 1.0, 8, rng, shape=(100_000,))
    target = (1 - math.exp(-16.0)) / 2.0
    se = math.sqrt(2.0 / 100_000) * target
    assert abs(np.mean(smooth[:, -1] ** 2) - target) < 3 * se
    assert np.var(driver[:, -1]) == pytest.approx(8.0, rel=0.05)


def test_lag_maxima_matches_bruteforce():
    rng = np.random.default_rng(8)
    path = np.cumsum(rng.standard_normal(300))
    lags = np.array([1, 2, 3, 7, 299])
    got = lag_maxima(path, lags)
    for lag, val in zip(lags, got):
        assert val == np.max(np.abs(path[lag:] - path[:-lag]))
    with pytest.raises(ValueError):
        lag_maxima(path, np.array([0]))
    with pytest.raises(ValueError):
        lag_maxima(path, np.array([300]))


def test_lag_sets():
    assert lag_set(5, False).tolist() == [1, 2, 3, 4, 5]
    assert lag_set(16, True).tolist() == [1, 2, 3, 4, 5, 7, 8, 9, 15, 16]


def test_holder_quotient_linear_ramp():
    # deterministic ramp: quotient = max over lags of (lag dt)^(1-delta) = T^(1-delta)
    n, dt = 100, 0.01
    path = dt * np.arange(n + 1)
    assert holder_quotient(path, dt, 0.3) == pytest.approx(1.0, rel=1e-12)
    assert holder_quotient(np.zeros(n), dt, 0.3) == 0.0
    two_point = np.array([0.0, 0.7])
    assert holder_quotient(two_point, 0.25, 0.4) == pytest.approx(0.7 / 0.25**0.4, rel=1e-12)


def test_holder_restricted_below_exact():
    rng = np.random.default_rng(12)
    path = np.cumsum(math.sqrt(1e-3) * rng.standard_normal(512))
    full = holder_quotient(path, 1e-3, 0.3)
    dyad = holder_quotient(path, 1e-3, 0.3, restricted=True)
    assert dyad <= full * (1 + 1e-12)
    assert dyad > 0.5 * full  # the dyadic grid cannot lose much


def test_exact_cap_enforced():
    path = np.zeros(6000)
    with pytest.raises(ValueError):
        holder_quotient(path, 1e-3, 0.3)
    with pytest.raises(ValueError):
        holder_quotient(path[:10], 1e-3, 0.6)


def test_pathwise_bound_holds():
    rng = np.random.default_rng(21)
    p = simulate_ou_path(50.0, 1.0, 2048, rng)
    rep = pathwise_bound_report(p, 0.3)
    assert rep.holds
    assert 0 < rep.slack_ratio < 1
    assert rep.rhs_bound == pytest.approx(
        50.0**-0.3 * holder_envelope_constant(0.3) * rep.quotient, rel=1e-12
    )
    # rhs decreases in the rate at a fixed driver quotient
    rep2 = pathwise_bound_report(ConvolutionPath(p.times, p.values, p.driver, 80.0), 0.3)
    assert rep2.rhs_bound < rep.rhs_bound
    with pytest.raises(ValueError):
        pathwise_bound_report(simulate_ou_path(0.0, 1.0, 16, rng), 0.3)


def test_convolution_path_validation():
    times = np.array([0.0, 0.5, 1.0])
    vals = np.array([0.0, 1.0, 2.0])
    ConvolutionPath(times, vals, vals, 1.0)
    with pytest.raises(ValueError):
        ConvolutionPath(np.array([0.1, 0.5, 1.0]), vals, vals, 1.0)
    with pytest.raises(ValueError):
        ConvolutionPath(times, np.array([1.0, 1.0, 2.0]), vals, 1.0)
    with pytest.raises(ValueError):
        ConvolutionPath(times, vals, vals[:2], 1.0)


def test_simulate_convolution_reproducible_and_weighted():
    op = burgers_op(4)
    p1 = simulate_convolution(op, 10.0, 0.4, 400, seed=5)
    p2 = simulate_convolution(op, 10.0, 0.4, 400, seed=5)
    assert np.array_equal(p1.values, p2.values) and np.array_equal(p1.driver, p2.driver)
    assert p1.values.shape == (401, 4)
    assert not np.array_equal(p1.values, simulate_convolution(op, 10.0, 0.4, 400, seed=5, replica=1).values)
    # driver increments are cross-mode independent
    inc1, inc2 = np.diff(p1.driver[:, 0]), np.diff(p1.driver[:, 1])
    assert abs(np.corrcoef(inc1, inc2)[0, 1]) < 4 / math.sqrt(400)
    # zero noise weights give the zero field path
    op0 = make_noise_weights(op, "explicit", values=np.zeros(4))
    assert np.max(np.abs(simulate_convolution(op0, 1.0, 0.1, 16, seed=2).values)) == 0.0


def test_holder_record_per_mode():
    op = burgers_op(3)
    p = simulate_convolution(op, 5.0, 0.2, 128, seed=9)
    rec = make_holder_record(p, 0.25)
    assert rec.per_mode.shape == (3,)
    assert rec.scalar == pytest.approx(rec.per_mode.max())
    assert rec.grid_size == 129
    assert not rec.restricted
    for k in range(3):
        assert rec.per_mode[k] == pytest.approx(
            holder_quotient(p.driver[:, k], p.dt, 0.25), rel=1e-12
        )
    with pytest.raises(ValueError):
        make_holder_record(p, 0.75)


def test_convolution_bound_holds():
    op = burgers_op(16)
    p = simulate_convolution(op, 25.0, 1.0, 1000, seed=3)
    rec = make_holder_record(p, 0.3)
    rep = convolution_bound_report(p, 0.125, 0.3, 0.05, rec)
    assert rep.holds
    assert 0 < rep.slack_ratio < 1
    assert rep.rhs_bound == pytest.approx(25.0**-0.1 * rep.m_random, rel=1e-12)
    with pytest.raises(ValueError):
        convolution_bound_report(p, 0.125, 0.3, 0.0, rec)
    with pytest.raises(ValueError):
        convolution_bound_report(p, 0.125, 0.25, 0.05, rec)  # record is for delta=0.3
    scalar = simulate_ou_path(1.0, 1.0, 64, np.random.default_rng(0))
    with pytest.raises(ValueError):
        convolution_bound_report(scalar, 0.125, 0.3, 0.05, rec)


def test_weight_series_wrapper():
    op = burgers_op(32)
    res = convolution_weight_series(op, 0.1, 0.45, 0.1)  # per-mode decay exponent 1
    assert res.value == pytest.approx(1.0 / 6.0, abs=1e-8)
    assert convolution_weight_series(op, 0.2, 0.3, 0.1).diverges
    with pytest.raises(ValueError):
        convolution_weight_series(op, 0.1, 0.45, 0.1, tol=0.0)
