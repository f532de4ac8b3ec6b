"""Acceptance suite: one numbered end-to-end criterion per test.

Each test prints a single `acceptance NN: PASS/FAIL` line (visible with -s or
in failure output) and asserts the criterion at its stated tolerance.  Heavy
trajectories are shared through module-scoped fixtures; the large Monte Carlo
checks batch paths in blocks to stay inside the memory budget.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from spdelab.cli import main
from spdelab.integrator import simulate_trajectory
from spdelab.kolmogorov import invariance_residual, standard_bump_suite
from spdelab.models import (
    design_fields,
    lyapunov_residuals,
    make_burgers_model,
    make_thinfilm_model,
    nonlinearity_coeffs,
    onesided_residuals,
)
from spdelab.moments import (
    SweepConfig,
    cubic_norm_sq,
    drift_norm,
    estimate_functional,
    finiteness_sweep,
    gaussian_fourth_moment,
    gaussian_lp_fourth,
    gaussian_mixed_moment,
    gaussian_second_moment,
    h_moment,
    lp_moment,
    stationarity_diagnostic,
    weighted_moment,
)
from spdelab.spectral import hs_decay_integral
from spdelab.stochconv import (
    ConvolutionPath,
    conditional_increments,
    convolution_bound_report,
    convolution_weight_series,
    holder_envelope_constant,
    lag_set,
    make_holder_record,
    ou_recursion,
    simulate_convolution,
)
from spdelab.streams import substream


def _report(num: int, ok: bool, detail: str) -> None:
    line = f"acceptance {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


def _lag_maxima_batch(paths: np.ndarray, lags: np.ndarray) -> np.ndarray:
    """max_j |path[j + lag] - path[j]| per path, vectorized over a block."""
    out = np.empty((paths.shape[0], lags.size))
    for j, lag in enumerate(lags):
        out[:, j] = np.max(np.abs(paths[:, lag:] - paths[:, :-lag]), axis=1)
    return out


# -- 1: pathwise sup bound for coupled scalar convolution/driver pairs --------

def test_criterion_01_pathwise_bound():
    start = time.perf_counter()
    n_fine = 1 << 14
    horizon = 1.0
    dt = horizon / n_fine
    deltas = (0.1, 0.25, 0.4)
    rates = (1.0, 10.0, 100.0)
    strides = (16, 4, 1)                      # resolutions 2^10, 2^12, 2^14
    envelope = {d: holder_envelope_constant(d) for d in deltas}
    violations = dict.fromkeys(strides, 0)
    worst_fine = 0.0
    n_blocks, block = 10, 1000                # 10^4 paths total
    for b in range(n_blocks):
        rng_drv = substream(20260101, replica=b, mode=1, role=1)
        dbeta = math.sqrt(dt) * rng_drv.standard_normal((block, n_fine))
        driver = np.concatenate([np.zeros((block, 1)), np.cumsum(dbeta, axis=1)], axis=1)
        smooth = {}
        for i, rate in enumerate(rates):
            # same Brownian increments for every rate; only the conditional
            # refinement draws fresh noise (driver-sharing across rates)
            rng_cond = substream(20260101, replica=b, mode=1, role=2 + i)
            eta = conditional_increments(rate, dt, dbeta, rng_cond)
            smooth[rate] = ou_recursion(math.exp(-rate * dt), eta)
        for stride in strides:
            d = driver[:, ::stride]
            dt_r = dt * stride
            lags = lag_set(d.shape[1] - 1, True)
            maxima = _lag_maxima_batch(d, lags)
            for delta in deltas:
                m_quot = np.max(maxima / (lags * dt_r) ** delta, axis=1)
                for rate in rates:
                    lhs = np.max(np.abs(smooth[rate][:, ::stride]), axis=1)
                    slack = lhs / (rate**-delta * envelope[delta] * m_quot)
                    violations[stride] += int(np.sum(slack > 1.0))
                    if stride == 1:
                        worst_fine = max(worst_fine, float(slack.max()))
    elapsed = time.perf_counter() - start
    counts = [violations[s] for s in strides]   # coarse -> fine
    ok = worst_fine <= 1.02 and counts[0] >= counts[1] >= counts[2] and elapsed < 120.0
    _report(1, ok, f"worst slack {worst_fine:.4f} <= 1.02, violations {counts} "
                   f"non-increasing, {elapsed:.0f}s < 120s")


# -- 2: Brownian scaling of the restricted Hoelder quotient -------------------

def test_criterion_02_quotient_scaling():
    # one driver per path over [0, 2]; the doubled window is the stride-2
    # subsample (spacing 2 dt), the unit window is the first-half prefix
    # (spacing dt): identical lag sets, so the scaling law is exact in law.
    n_full = 1 << 13
    dt = 2.0 / n_full
    n_half = n_full // 2
    deltas = (0.1, 0.25, 0.4)
    sums = {d: [0.0, 0.0] for d in deltas}
    for b in range(10):
        rng = substream(20260815, replica=b, mode=1, role=1)
        dbeta = math.sqrt(dt) * rng.standard_normal((1000, n_full))
        driver = np.concatenate([np.zeros((1000, 1)), np.cumsum(dbeta, axis=1)], axis=1)
        lags = lag_set(n_half, True)
        for slot, d, dt_r in ((0, driver[:, ::2], 2.0 * dt), (1, driver[:, : n_half + 1], dt)):
            maxima = _lag_maxima_batch(d, lags)
            for delta in deltas:
                sums[delta][slot] += float(np.sum(np.max(maxima / (lags * dt_r) ** delta, axis=1)))
    errors = {}
    for delta in deltas:
        ratio = sums[delta][0] / sums[delta][1]
        errors[delta] = abs(ratio / 2 ** (0.5 - delta) - 1.0)
    worst = max(errors.values())
    _report(2, worst <= 0.05,
            "E[M(2T)]/E[M(T)] vs 2^(1/2-delta): rel err "
            + ", ".join(f"{d}: {e:.2%}" for d, e in errors.items()) + " (tol 5%)")


# -- 3: Hilbert-norm sup bound and moments of the random constant -------------

def test_criterion_03_field_bound_and_moments():
    op = make_burgers_model(64, 0.2, constants=None).operator
    gamma, delta, eps, shift = 0.1, 0.45, 0.05, 1.0
    n_full, horizon = 2048, 2.0
    n_half = n_full // 2
    n_rep = 1000
    slacks = np.empty(n_rep)
    m_two_t = np.empty(n_rep)
    m_one_t = np.empty(n_rep)
    for r in range(n_rep):
        path = simulate_convolution(op, shift, horizon, n_full, 20260403, replica=r)
        rep = convolution_bound_report(
            path, gamma, delta, eps, make_holder_record(path, delta, restricted=True))
        slacks[r] = rep.slack_ratio
        # same stride-2 / prefix windows as criterion 2, per mode
        sub = ConvolutionPath(path.times[::2], path.values[::2], path.driver[::2], shift, op)
        m_two_t[r] = convolution_bound_report(
            sub, gamma, delta, eps, make_holder_record(sub, delta, restricted=True)).m_random
        pre = ConvolutionPath(path.times[: n_half + 1], path.values[: n_half + 1],
                              path.driver[: n_half + 1], shift, op)
        m_one_t[r] = convolution_bound_report(
            pre, gamma, delta, eps, make_holder_record(pre, delta, restricted=True)).m_random
    errs = []
    for m in (1, 2, 3):
        ratio = float(np.mean(m_two_t**m) / np.mean(m_one_t**m))
        errs.append(abs(ratio / 2 ** (m * (1.0 - 2.0 * delta)) - 1.0))
    finite = bool(np.all(np.isfinite(m_two_t)) and np.all(np.isfinite(m_one_t)))
    ok = float(slacks.max()) <= 1.02 and finite and max(errs) <= 0.10
    _report(3, ok, f"max slack {slacks.max():.3f} <= 1.02; moment scaling rel err "
                   + ", ".join(f"m={m}: {e:.2%}" for m, e in zip((1, 2, 3), errs)) + " (tol 10%)")


# -- 4: series value oracle and decay-integral quadrature ---------------------

def test_criterion_04_series_oracles():
    op = make_burgers_model(32, 0.25, constants=None).operator
    # combined decay exponent 0.5: sum q_k lam_k^(-1/2) = sum (pi k)^-2 = 1/6
    res = convolution_weight_series(op, 0.05, 0.35, 0.05)
    sixth_ok = (not res.diverges and abs(res.value - 1.0 / 6.0) <= 1e-8
                and res.tail_bound <= 1e-8)
    # combined exponent 0.25 -> harmonic-type divergence
    divergent = convolution_weight_series(op, 0.25, 0.3, 0.05).diverges

    quad_ok = True
    for spec, g in ((make_burgers_model(8, 0.25, constants=None), 0.25),
                    (make_thinfilm_model(8, constants=None), 0.1)):
        o = spec.operator
        closed = hs_decay_integral(o, g).value
        # integrate each mode to 30/lambda: the neglected tail is e^-60 relative
        numeric = sum(
            q * lam ** (2.0 * g) * quad(lambda t, r=lam: math.exp(-2.0 * r * t), 0.0, 30.0 / lam)[0]
            for lam, q in zip(o.eigenvalues, o.noise_weights)
        )
        quad_ok = quad_ok and abs(closed - numeric) <= 1e-8 * max(1.0, abs(closed))
    _report(4, sixth_ok and divergent and quad_ok,
            f"series value {res.value:.12f} ~ 1/6 (tail {res.tail_bound:.1e}), "
            f"divergence flagged, decay integral matches quadrature to 1e-8")


# -- 5: structural inequalities ------------------------------------------------

@pytest.fixture(scope="module")
def lyapunov_validation():
    """Fresh 10^4-pair residual maxima for both calibrated models."""
    out = {}
    for name, model in (("burgers", make_burgers_model(64, 0.2)),
                        ("thinfilm", make_thinfilm_model(16))):
        y, w = design_fields(model.operator, 10_000, np.random.default_rng(11))
        out[name] = float(lyapunov_residuals(y, w, model).max())
    return out


def test_criterion_05_structural_inequalities(lyapunov_validation):
    rng = np.random.default_rng(55)
    a = 100.0 * rng.standard_normal(100_000)
    b = 100.0 * rng.standard_normal(100_000)
    lhs = 0.5 * (a + b) ** 2 * (a - b) ** 2
    rhs = (a**3 - b**3) * (a - b)
    cubic_viol = int(np.sum(lhs > rhs * (1 + 1e-12) + 1e-12))

    m32 = make_burgers_model(32, 0.25, constants=None)
    k = np.arange(1, 33, dtype=np.float64)
    u = rng.standard_normal((1000, 32)) * k**-1.0
    bu = nonlinearity_coeffs(u, m32)
    rel = np.abs(np.sum(bu * u, axis=1)) / (
        np.linalg.norm(bu, axis=1) * np.linalg.norm(u, axis=1))
    worst_orth = float(rel.max())

    worst_pair = -math.inf
    for n in (16, 64):
        m = make_burgers_model(n, 0.2, constants=None)
        u, v = design_fields(m.operator, 10_000, np.random.default_rng(17))
        worst_pair = max(worst_pair,
                         float(onesided_residuals(u, v, m).max()),
                         float(onesided_residuals(u, v, m, galerkin=True).max()))

    worst_lyap = max(lyapunov_validation.values())
    ok = (cubic_viol == 0 and worst_orth <= 1e-10 and worst_pair <= 1e-10
          and worst_lyap <= 0.0)
    _report(5, ok, f"cubic violations {cubic_viol}/1e5, orthogonality {worst_orth:.1e}, "
                   f"pair residuals {worst_pair:.1e} <= 1e-10, "
                   f"drift-bound validation max {worst_lyap:.3g} <= 0")


# -- 6: Gaussian oracle for the drift-free model -------------------------------

def test_criterion_06_gaussian_oracle():
    m = make_burgers_model(32, 0.25)
    op = m.operator
    traj = simulate_trajectory(m, 200.0, 1e-3, seed=60601, drift=False,
                               burn_in=50.0, stride=10)
    pairs = [
        (h_moment(1.0), gaussian_second_moment(op, 0.0)),
        (weighted_moment(0.25, 0.0), gaussian_second_moment(op, 0.25)),
        (weighted_moment(0.5, 0.0), gaussian_second_moment(op, 0.5)),
        (h_moment(2.0), gaussian_fourth_moment(op)),
        (weighted_moment(0.25, 1.0), gaussian_mixed_moment(op, 0.25)),
        (weighted_moment(0.5, 1.0), gaussian_mixed_moment(op, 0.5)),
        (lp_moment(4.0), gaussian_lp_fourth(op, m.dealias_grid)),
    ]
    worst = 0.0
    for g, oracle in pairs:
        est = estimate_functional(traj, g)
        worst = max(worst, abs(est.value - oracle) / est.std_error)
    _report(6, worst <= 3.0, f"{len(pairs)} closed-form functionals, worst |z| {worst:.2f} <= 3")


# -- 7/8/9 share the nonlinear stability runs ----------------------------------

@pytest.fixture(scope="module")
def stability_runs():
    m32 = make_burgers_model(32, 0.125)
    t_a = simulate_trajectory(m32, 120.0, 1e-3, seed=71, burn_in=30.0, stride=5)
    t_b = simulate_trajectory(m32, 120.0, 1e-3, seed=72, burn_in=30.0, stride=5)
    m64 = make_burgers_model(64, 0.125)
    t_c = simulate_trajectory(m64, 120.0, 1e-3, seed=73, burn_in=30.0, stride=5)
    return m32, t_a, t_b, t_c


def test_criterion_07_invariant_measure_stability(stability_runs):
    start = time.perf_counter()
    m32, t_a, t_b, t_c = stability_runs
    entries = finiteness_sweep(
        m32, (0.5, 1.0, 2.0, 4.0), (0.5,),
        SweepConfig(horizon=120.0, dt=1e-3, seeds=(71, 72), burn_in=30.0, stride=5))
    stable = all(e.stable for e in entries)

    p_funcs = [h_moment(p) for p in (0.5, 1.0, 2.0, 4.0)]
    worst_stat = max(
        abs(stationarity_diagnostic(t, g).z_score)
        for g in p_funcs + [weighted_moment(0.5, 0.0)] for t in (t_a, t_b))
    # Galerkin consistency over the l2 moments; the sigma = 1/2 weighted
    # moment grows with the truncation here (its spectral series diverges at
    # this noise decay), so only its fixed-N stability is claimed above.
    worst_cons = 0.0
    for g in p_funcs:
        e32, e64 = estimate_functional(t_a, g), estimate_functional(t_c, g)
        worst_cons = max(worst_cons, abs(e32.value - e64.value)
                         / math.hypot(e32.std_error, e64.std_error))
    elapsed = time.perf_counter() - start
    ok = stable and worst_stat <= 3.0 and worst_cons <= 3.0 and elapsed < 600.0
    _report(7, ok, f"two-seed sweep stable, stationarity |z| {worst_stat:.2f} <= 3, "
                   f"32-vs-64 consistency |z| {worst_cons:.2f} <= 3, {elapsed:.0f}s < 600s")


def test_criterion_08_drift_and_cubic_functionals(stability_runs):
    _, t_a, t_b, _ = stability_runs
    worst = 0.0
    values = []
    for g in (drift_norm(), cubic_norm_sq()):
        e_a, e_b = estimate_functional(t_a, g), estimate_functional(t_b, g)
        values.extend([e_a.value, e_b.value])
        worst = max(worst, abs(e_a.value - e_b.value) / math.hypot(e_a.std_error, e_b.std_error))
    finite = all(math.isfinite(v) for v in values)
    _report(8, finite and worst <= 3.0,
            f"drift norm and cubic norm finite, two-seed |z| {worst:.2f} <= 3")


def test_criterion_09_infinitesimal_invariance(stability_runs):
    m32, t_a, _, _ = stability_runs
    rows = invariance_residual(standard_bump_suite(m32.operator, seed=90), t_a)
    worst = max(abs(r.z_score) for r in rows)

    lin = make_burgers_model(8, 0.25)
    z_all = []
    for seed in range(100):
        traj = simulate_trajectory(lin, 50.0, 1e-3, seed=seed, drift=False,
                                   burn_in=12.5, stride=5)
        suite = standard_bump_suite(lin.operator, seed=seed)
        z_all.extend(r.z_score for r in invariance_residual(suite, traj, drift=False))
    frac = float(np.mean(np.abs(z_all) <= 3.0))
    ok = len(rows) == 10 and worst <= 3.0 and frac >= 0.99
    _report(9, ok, f"10 bounded functions max |z| {worst:.2f} <= 3; "
                   f"linear calibration pass rate {frac:.1%} >= 99%")


# -- 10: quartic model ----------------------------------------------------------

def test_criterion_10_thinfilm(lyapunov_validation):
    start = time.perf_counter()
    tf = make_thinfilm_model(16)
    # spectrum grows like k^4: the weight series converges iff the combined
    # exponent clears 1/8
    finite = convolution_weight_series(tf.operator, 0.1, 0.45, 0.05)     # 0.3 > 1/8
    divergent = convolution_weight_series(tf.operator, 0.3, 0.45, 0.05)  # 0.1 < 1/8
    series_ok = (not finite.diverges and math.isfinite(finite.value)) and divergent.diverges

    entries = finiteness_sweep(
        tf, (0.5, 1.0, 2.0, 4.0), (0.5,),
        SweepConfig(horizon=2.0, dt=1e-5, seeds=(101, 102), burn_in=0.5, stride=20))
    stable = all(e.stable for e in entries)
    elapsed = time.perf_counter() - start
    ok = series_ok and lyapunov_validation["thinfilm"] <= 0.0 and stable and elapsed < 900.0
    _report(10, ok, f"series finite above 1/8 and divergent below, drift-bound "
                    f"validation holds, sweep stable, {elapsed:.0f}s < 900s")


# -- 11: determinism -------------------------------------------------------------

def test_criterion_11_byte_identical_reruns(tmp_path):
    argv = ["moments", "--seed", "5", "--set", "model.n_modes=8",
            "--set", "run.horizon=2.0"]
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(argv + ["--out", str(out)]) == 0
        outs.append(out)
    same = all(
        (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
        for f in ("moments.csv", "moments-plot.csv"))
    _report(11, same, "identical config and seed reproduce CSV outputs byte for byte")
