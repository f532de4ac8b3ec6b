"""Generator of the dynamics on cylindrical test functions.

A cylindrical function depends on finitely many coordinates y_i = x_{k_i} and
carries closed-form value, gradient, and diagonal Hessian. On such functions
the generator reads

    L phi(x) = 1/2 sum_k q_k phi_{x_k x_k}(x)
             + sum_k (-lam_k x_k + B(x)_k) phi_{x_k}(x),

with both sums over the active modes only. Averaging L phi along a stationary
trajectory gives a Monte Carlo residual of infinitesimal invariance: the mean
should vanish within its batch-means error.

The two polynomial profiles are exact-oracle material with unbounded
derivatives (bounded = False); measurement suites should stick to the bump
family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .integrator import TrajectoryRecord
from .models import ModelSpec, nonlinearity_coeffs, onesided_residual
from .moments import FunctionalSpec, estimate_functional
from .spectral import SpectralField, check_compatible


class KolmogorovError(ValueError):
    """Bad test function or evaluation request."""


@dataclass(frozen=True)
class CylindricalFunction:
    """f(x_{k_1}, ..., x_{k_m}) with closed-form derivatives; modes 1-based."""

    mode_indices: tuple[int, ...]
    label: str
    bounded: bool
    _value: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _gradient: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _hessian: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __post_init__(self):
        k = self.mode_indices
        if len(k) < 1:
            raise KolmogorovError("need at least one active mode")
        if any(int(a) != a or a < 1 for a in k):
            raise KolmogorovError("mode indices are 1-based integers")
        if any(b <= a for a, b in zip(k, k[1:])):
            raise KolmogorovError("mode indices must be strictly increasing")

    @property
    def n_active(self) -> int:
        return len(self.mode_indices)

    def value(self, y: np.ndarray) -> np.ndarray:
        return self._value(np.asarray(y, dtype=np.float64))

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return self._gradient(np.asarray(y, dtype=np.float64))

    def hessian_diag(self, y: np.ndarray) -> np.ndarray:
        return self._hessian(np.asarray(y, dtype=np.float64))


@dataclass(frozen=True)
class CylindricalSum:
    """Linear combination of cylindrical functions (for linearity checks)."""

    coefficients: tuple[float, ...]
    functions: tuple[CylindricalFunction, ...]

    def __post_init__(self):
        if len(self.coefficients) != len(self.functions) or not self.functions:
            raise KolmogorovError("need matching, nonempty coefficients and functions")


# -- registered profiles ---------------------------------------------------------------


def coordinate(k: int) -> CylindricalFunction:
    """phi(x) = x_k; unbounded, test-only."""
    return CylindricalFunction(
        (k,), f"coordinate[{k}]", False,
        lambda y: y[..., 0],
        lambda y: np.ones_like(y),
        lambda y: np.zeros_like(y),
    )


def coordinate_square(k: int) -> CylindricalFunction:
    """phi(x) = x_k^2; unbounded, test-only."""
    return CylindricalFunction(
        (k,), f"coordinate-square[{k}]", False,
        lambda y: y[..., 0] ** 2,
        lambda y: 2.0 * y,
        lambda y: np.full_like(y, 2.0),
    )


def _bump_callables(c: np.ndarray, w: np.ndarray):
    def val(y):
        return np.exp(-0.5 * np.sum(((y - c) / w) ** 2, axis=-1))

    def grad(y):
        return -((y - c) / w**2) * val(y)[..., None]

    def hess(y):
        return (((y - c) / w**2) ** 2 - 1.0 / w**2) * val(y)[..., None]

    return val, grad, hess


def _as_profile_array(x, m: int, name: str) -> np.ndarray:
    try:
        a = np.broadcast_to(np.asarray(x, dtype=np.float64), (m,)).copy()
    except ValueError:
        raise KolmogorovError(f"{name} must broadcast to the {m} active modes") from None
    if not np.all(np.isfinite(a)):
        raise KolmogorovError(f"{name} must be finite")
    return a


def gaussian_bump(modes: Sequence[int], center, width: float, label: str | None = None):
    """Isotropic bump exp(-|y - c|^2 / (2 w^2)); bounded with all derivatives."""
    m = len(modes)
    c = _as_profile_array(center, m, "center")
    if not width > 0:
        raise KolmogorovError("width must be positive")
    val, grad, hess = _bump_callables(c, np.full(m, float(width)))
    tag = label or f"gaussian-bump[{','.join(str(k) for k in modes)}]"
    return CylindricalFunction(tuple(modes), tag, True, val, grad, hess)


def product_of_bumps(modes: Sequence[int], centers, widths, label: str | None = None):
    """Product of one-dimensional bumps with per-coordinate centers and widths."""
    m = len(modes)
    c = _as_profile_array(centers, m, "centers")
    w = _as_profile_array(widths, m, "widths")
    if np.any(w <= 0):
        raise KolmogorovError("widths must be positive")
    val, grad, hess = _bump_callables(c, w)
    tag = label or f"product-of-bumps[{','.join(str(k) for k in modes)}]"
    return CylindricalFunction(tuple(modes), tag, True, val, grad, hess)


def standard_bump_suite(op, count: int = 10, seed: int = 0) -> list[CylindricalFunction]:
    """Bounded bumps sized to the stationary per-mode scales of the operator."""
    rng = np.random.default_rng(seed)
    scale = np.sqrt(np.maximum(op.noise_weights, 1e-12) / (2.0 * op.eigenvalues))
    out = []
    for i in range(count):
        m = 1 + (i % 2)
        modes = np.sort(rng.choice(np.arange(1, op.n_modes + 1), size=m, replace=False))
        s = scale[modes - 1]
        centers = rng.normal(0.0, s)
        widths = 2.0 * s
        out.append(product_of_bumps(tuple(int(k) for k in modes), centers, widths,
                                    label=f"bump#{i}[{','.join(str(k) for k in modes)}]"))
    return out


# -- generator -------------------------------------------------------------------------


def generator_values(
    phi, states: np.ndarray, m: ModelSpec, *, drift: bool = True
) -> np.ndarray:
    """L phi at each snapshot row; drift=False uses the pure diffusion generator."""
    if isinstance(phi, CylindricalSum):
        acc = None
        for coef, f in zip(phi.coefficients, phi.functions):
            term = coef * generator_values(f, states, m, drift=drift)
            acc = term if acc is None else acc + term
        return acc
    states = np.asarray(states, dtype=np.float64)
    idx = np.asarray(phi.mode_indices, dtype=np.int64) - 1
    if idx[-1] >= m.n_modes:
        raise KolmogorovError(
            f"mode index {phi.mode_indices[-1]} out of range for {m.n_modes} modes"
        )
    y = states[..., idx]
    grad = phi.gradient(y)
    hess = phi.hessian_diag(y)
    lam = m.operator.eigenvalues[idx]
    q = m.operator.noise_weights[idx]
    drift_part = -y * lam
    if drift:
        drift_part = drift_part + nonlinearity_coeffs(states, m)[..., idx]
    return 0.5 * (hess @ q) + np.sum(drift_part * grad, axis=-1)


def apply_generator(phi, x: SpectralField, m: ModelSpec, *, drift: bool = True) -> float:
    check_compatible(x, m.operator)
    return float(generator_values(phi, x.coeffs[None, :], m, drift=drift)[0])


# -- invariance measurement ---------------------------------------------------------


@dataclass(frozen=True)
class InvarianceRow:
    label: str
    mean: float
    std_error: float
    z_score: float


def invariance_residual(
    phi_suite: Sequence, traj: TrajectoryRecord, *, n_batches: int = 32, drift: bool = True
) -> list[InvarianceRow]:
    """Batch-means estimate of the stationary average of L phi, per function.

    Infinitesimal invariance predicts mean 0; the z-score is mean over error.
    """
    if not phi_suite:
        raise KolmogorovError("empty test-function suite")
    rows = []
    for phi in phi_suite:
        g = FunctionalSpec(
            phi.label, lambda s, mm, phi=phi: generator_values(phi, s, mm, drift=drift)
        )
        est = estimate_functional(traj, g, n_batches=n_batches)
        if est.std_error > 0.0:
            z = est.value / est.std_error
        else:
            z = 0.0 if est.value == 0.0 else math.copysign(math.inf, est.value)
        rows.append(InvarianceRow(phi.label, est.value, est.std_error, z))
    return rows


def galerkin_drift_residual(u: SpectralField, v: SpectralField, m: ModelSpec) -> float:
    """One-sided pairing of the full truncated drift (linear, quadratic, cubic
    comparison) between two states; nonpositive by construction."""
    return onesided_residual(u, v, m, galerkin=True)
