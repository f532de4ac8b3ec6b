"""Experiment runners behind the command line.

Each runner takes a validated ExperimentConfig and returns an
ExperimentResult: a row table, tidy plot rows, and the in-config assertions
it checked.  All randomness comes from keyed substreams of the config seed,
so a rerun with the same config reproduces every row exactly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ExperimentConfig, validate_config
from .integrator import DecompositionPlan, differential_inequality_report, simulate_trajectory
from .kolmogorov import invariance_residual, standard_bump_suite
from .models import ModelSpec, design_fields, make_burgers_model, make_thinfilm_model, onesided_residuals
from .moments import SweepConfig, finiteness_sweep
from .stochconv import convolution_weight_series, pathwise_bound_report, simulate_ou_path
from .streams import substream

PATHWISE_SLACK_LIMIT = 1.02
DISSIPATION_FRACTION_LIMIT = 0.01
ONESIDED_RESIDUAL_LIMIT = 1e-10
INVARIANCE_Z_LIMIT = 3.0
ONESIDED_PAIRS_PER_REPLICA = 200


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ExperimentResult:
    experiment: str
    header: tuple[str, ...]
    rows: list[tuple]
    plot_rows: list[tuple] = field(default_factory=list)   # (series, x, y, y_err)
    checks: list[CheckOutcome] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def build_model(cfg: ExperimentConfig) -> ModelSpec:
    if cfg.model_kind == "burgers":
        return make_burgers_model(cfg.n_modes, cfg.gamma0)
    return make_thinfilm_model(cfg.n_modes, cfg.nu)


def _n_steps(cfg: ExperimentConfig) -> int:
    return max(1, int(round(cfg.horizon / cfg.dt)))


def _run_conv_bound(cfg: ExperimentConfig) -> ExperimentResult:
    header = ("experiment", "replica", "rate", "delta", "lhs_sup", "rhs_bound", "slack_ratio", "quotient")
    rows, plot = [], []
    worst = 0.0
    n_steps = _n_steps(cfg)
    for r in range(cfg.replicas):
        rng = substream(cfg.seed, replica=r, mode=1, role=1)
        for shift in cfg.shifts:
            path = simulate_ou_path(shift, cfg.horizon, n_steps, rng)
            rep = pathwise_bound_report(path, cfg.delta)
            rows.append((cfg.experiment, r, shift, cfg.delta, rep.lhs_sup, rep.rhs_bound, rep.slack_ratio, rep.quotient))
            plot.append((f"slack-replica{r}", shift, rep.slack_ratio, 0.0))
            worst = max(worst, rep.slack_ratio)
    checks = [
        CheckOutcome(
            "pathwise-slack",
            worst <= PATHWISE_SLACK_LIMIT,
            f"max slack_ratio {worst:.6g} (limit {PATHWISE_SLACK_LIMIT:g})",
        )
    ]
    return ExperimentResult(cfg.experiment, header, rows, plot, checks)


def _run_z_series(cfg: ExperimentConfig) -> ExperimentResult:
    header = (
        "experiment", "replica", "kind", "gamma0", "nu",
        "delta", "gamma", "epsilon", "value", "tail_bound", "converged",
    )
    op = build_model(cfg).operator
    res = convolution_weight_series(op, cfg.gamma, cfg.delta, cfg.epsilon)
    rows = [(
        cfg.experiment, 0, cfg.model_kind, cfg.gamma0, cfg.nu,
        cfg.delta, cfg.gamma, cfg.epsilon, res.value, res.tail_bound, not res.diverges,
    )]
    plot = [("weight-series", cfg.delta, res.value, res.tail_bound)]
    return ExperimentResult(cfg.experiment, header, rows, plot, [])


def _run_simulate(cfg: ExperimentConfig) -> ExperimentResult:
    header = ("experiment", "replica", "row", "time", "l2_norm_sq")
    m = build_model(cfg)
    rows, plot = [], []
    for r in range(cfg.replicas):
        traj = simulate_trajectory(
            m, cfg.horizon, cfg.dt,
            seed=cfg.seed, replica=r, burn_in=cfg.burn_in, stride=cfg.stride,
            guard=cfg.guard,
        )
        msq = np.sum(traj.states**2, axis=1)
        for i, (t, v) in enumerate(zip(traj.times, msq)):
            rows.append((cfg.experiment, r, i, float(t), float(v)))
            plot.append((f"l2-norm-sq-replica{r}", float(t), float(v), 0.0))
    return ExperimentResult(cfg.experiment, header, rows, plot, [])


def _run_moments(cfg: ExperimentConfig) -> ExperimentResult:
    header = (
        "experiment", "replica", "functional_id", "p", "sigma",
        "value_a", "std_error_a", "value_b", "std_error_b", "stable", "flags",
    )
    m = build_model(cfg)
    sweep_cfg = SweepConfig(
        horizon=cfg.horizon, dt=cfg.dt,
        seeds=(cfg.seed, (cfg.seed + 1) % (1 << 64)),
        burn_in=cfg.burn_in, stride=cfg.stride, guard=cfg.guard,
    )
    entries = finiteness_sweep(m, cfg.p_list, cfg.sigma_list, sweep_cfg)
    rows, plot = [], []
    unstable = [e.functional_id for e in entries if not e.stable]
    for e in entries:
        rows.append((
            cfg.experiment, 0, e.functional_id, e.p, e.sigma,
            e.first.value, e.first.std_error, e.second.value, e.second.std_error,
            e.stable, "|".join(e.flags),
        ))
        plot.append((e.functional_id, e.p, e.first.value, e.first.std_error))
    checks = [
        CheckOutcome(
            "two-seed-stability",
            not unstable,
            "all functionals stable" if not unstable else "unstable: " + ", ".join(unstable),
        )
    ]
    return ExperimentResult(cfg.experiment, header, rows, plot, checks)


def _run_lyapunov(cfg: ExperimentConfig) -> ExperimentResult:
    header = (
        "experiment", "replica", "shift", "max_residual", "tolerance",
        "n_violations", "violation_fraction", "n_residuals",
    )
    m = build_model(cfg)
    if m.lyapunov_constants is None:
        raise ConfigError("lyapunov experiment needs a model with decay constants")
    plan = DecompositionPlan(epsilon=cfg.epsilon, holder_delta=cfg.delta)
    rows, plot = [], []
    worst_fraction = 0.0
    for r in range(cfg.replicas):
        traj = simulate_trajectory(
            m, cfg.horizon, cfg.dt,
            seed=cfg.seed, replica=r, burn_in=cfg.burn_in, stride=cfg.stride,
            guard=cfg.guard, decomposition=plan,
        )
        rep = differential_inequality_report(traj)
        rows.append((
            cfg.experiment, r, traj.dissipation.shift, rep.max_residual, rep.tolerance,
            rep.n_violations, rep.violation_fraction, rep.residuals.size,
        ))
        plot.append(("max-residual", r, rep.max_residual, 0.0))
        worst_fraction = max(worst_fraction, rep.violation_fraction)
    checks = [
        CheckOutcome(
            "dissipation-violations",
            worst_fraction <= DISSIPATION_FRACTION_LIMIT,
            f"max violation fraction {worst_fraction:.6g} (limit {DISSIPATION_FRACTION_LIMIT:g})",
        )
    ]
    return ExperimentResult(cfg.experiment, header, rows, plot, checks)


def _run_onesided(cfg: ExperimentConfig) -> ExperimentResult:
    header = ("experiment", "replica", "pair", "residual", "galerkin_residual")
    m = build_model(cfg)
    rows, plot = [], []
    worst = -math.inf
    for r in range(cfg.replicas):
        rng = substream(cfg.seed, replica=r, mode=2, role=1)
        u, v = design_fields(m.operator, ONESIDED_PAIRS_PER_REPLICA, rng)
        plain = onesided_residuals(u, v, m)
        galerkin = onesided_residuals(u, v, m, galerkin=True)
        for i in range(ONESIDED_PAIRS_PER_REPLICA):
            rows.append((cfg.experiment, r, i, float(plain[i]), float(galerkin[i])))
            plot.append((f"pair-residual-replica{r}", i, float(plain[i]), 0.0))
        worst = max(worst, float(plain.max()), float(galerkin.max()))
    checks = [
        CheckOutcome(
            "pair-residuals",
            worst <= ONESIDED_RESIDUAL_LIMIT,
            f"max residual {worst:.6g} (limit {ONESIDED_RESIDUAL_LIMIT:g})",
        )
    ]
    return ExperimentResult(cfg.experiment, header, rows, plot, checks)


def _run_invariance(cfg: ExperimentConfig) -> ExperimentResult:
    header = ("experiment", "replica", "label", "mean", "std_error", "z")
    m = build_model(cfg)
    suite = standard_bump_suite(m.operator, seed=cfg.seed)
    traj = simulate_trajectory(
        m, cfg.horizon, cfg.dt,
        seed=cfg.seed, replica=0, burn_in=cfg.burn_in, stride=cfg.stride,
        guard=cfg.guard,
    )
    invariance = invariance_residual(suite, traj)
    rows, plot = [], []
    worst = 0.0
    for i, row in enumerate(invariance):
        rows.append((cfg.experiment, 0, row.label, row.mean, row.std_error, row.z_score))
        plot.append(("generator-mean", i, row.mean, row.std_error))
        worst = max(worst, abs(row.z_score))
    checks = [
        CheckOutcome(
            "generator-z",
            worst <= INVARIANCE_Z_LIMIT,
            f"max |z| {worst:.4g} (limit {INVARIANCE_Z_LIMIT:g})",
        )
    ]
    return ExperimentResult(cfg.experiment, header, rows, plot, checks)


_RUNNERS = {
    "conv-bound": _run_conv_bound,
    "z-series": _run_z_series,
    "simulate": _run_simulate,
    "moments": _run_moments,
    "lyapunov": _run_lyapunov,
    "onesided": _run_onesided,
    "invariance": _run_invariance,
}


def run_experiment(cfg: ExperimentConfig) -> list[ExperimentResult]:
    """Run the configured experiment(s); returns one result per tag executed.

    May raise ConfigError (bad config) or BlowupError (trajectory guard).
    """
    validate_config(cfg)
    if cfg.experiment != "all":
        return [_RUNNERS[cfg.experiment](cfg)]
    results = []
    for tag, runner in _RUNNERS.items():
        if tag == "onesided" and cfg.model_kind != "burgers":
            continue
        results.append(runner(dataclasses.replace(cfg, experiment=tag)))
    return results
