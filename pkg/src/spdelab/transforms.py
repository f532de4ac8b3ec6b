"""Collocation grids and exact discrete transforms for the two reference bases.

Basis functions on [0, 1]:
    dirichlet_sine            e_k(xi) = sqrt(2) sin(k pi xi), k >= 1
    neumann_cosine_meanzero   e_k(xi) = sqrt(2) cos(k pi xi), k >= 1

Each grid kind carries a plain quadrature rule under which the basis is
exactly orthonormal up to a mode limit, so projections of band-limited data
are exact in floating point (no FFT, cached dense matrices).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .spectral import DIRICHLET_SINE, NEUMANN_COSINE_MEANZERO, SpectralError, SpectralField

INTERIOR = "interior"    # xi_j = j/(M+1), j = 1..M
MIDPOINT = "midpoint"    # xi_j = (j + 1/2)/M, j = 0..M-1


def interior_grid(m_points: int) -> np.ndarray:
    if m_points < 1:
        raise SpectralError("m_points must be >= 1")
    j = np.arange(1, m_points + 1, dtype=np.float64)
    return j / (m_points + 1)


def midpoint_grid(m_points: int) -> np.ndarray:
    if m_points < 1:
        raise SpectralError("m_points must be >= 1")
    j = np.arange(m_points, dtype=np.float64)
    return (j + 0.5) / m_points


def grid_points(grid_kind: str, m_points: int) -> np.ndarray:
    if grid_kind == INTERIOR:
        return interior_grid(m_points)
    if grid_kind == MIDPOINT:
        return midpoint_grid(m_points)
    raise SpectralError(f"unknown grid kind {grid_kind!r}")


def default_grid(basis_kind: str) -> str:
    """The grid on which this basis has its natural exact quadrature."""
    if basis_kind == DIRICHLET_SINE:
        return INTERIOR
    if basis_kind == NEUMANN_COSINE_MEANZERO:
        return MIDPOINT
    raise SpectralError(f"unknown basis_kind {basis_kind!r}")


def quadrature_weight(grid_kind: str, m_points: int) -> float:
    return 1.0 / (m_points + 1) if grid_kind == INTERIOR else 1.0 / m_points


def exact_mode_limit(basis_kind: str, grid_kind: str, m_points: int) -> int:
    """Largest n such that modes 1..n are exactly orthonormal under the grid's rule."""
    if basis_kind == DIRICHLET_SINE and grid_kind == INTERIOR:
        return m_points
    if grid_kind == MIDPOINT:
        # mode m_points is degenerate there: invisible for cosines, norm
        # doubled for sines, so both families stop one short
        return m_points - 1
    raise SpectralError(f"no exact rule for {basis_kind!r} on {grid_kind!r}")


def basis_values_at(basis_kind: str, n_modes: int, xi: np.ndarray) -> np.ndarray:
    """Matrix E with E[j, k-1] = e_k(xi_j)."""
    xi = np.asarray(xi, dtype=np.float64)
    k = np.arange(1, n_modes + 1, dtype=np.float64)
    phase = np.pi * np.outer(xi, k)
    if basis_kind == DIRICHLET_SINE:
        return np.sqrt(2.0) * np.sin(phase)
    if basis_kind == NEUMANN_COSINE_MEANZERO:
        return np.sqrt(2.0) * np.cos(phase)
    raise SpectralError(f"unknown basis_kind {basis_kind!r}")


@lru_cache(maxsize=64)
def synthesis_matrix(basis_kind: str, n_modes: int, m_points: int, grid_kind: str) -> np.ndarray:
    if n_modes < 1:
        raise SpectralError("n_modes must be >= 1")
    E = basis_values_at(basis_kind, n_modes, grid_points(grid_kind, m_points))
    E.setflags(write=False)
    return E


def synthesize(
    coeffs: np.ndarray, basis_kind: str, m_points: int, grid_kind: str | None = None
) -> np.ndarray:
    """Evaluate a coefficient array (batched over leading axes) on a grid."""
    c = np.asarray(coeffs, dtype=np.float64)
    E = synthesis_matrix(basis_kind, c.shape[-1], m_points, grid_kind or default_grid(basis_kind))
    return c @ E.T


def project(
    values: np.ndarray, basis_kind: str, n_modes: int, grid_kind: str | None = None
) -> np.ndarray:
    """Project grid values onto the first n_modes basis functions.

    Exact (not approximate) for data band-limited below the grid's mode limit;
    refuses n_modes beyond the exact range rather than returning garbage.
    """
    v = np.asarray(values, dtype=np.float64)
    gk = grid_kind or default_grid(basis_kind)
    m_points = v.shape[-1]
    limit = exact_mode_limit(basis_kind, gk, m_points)
    if n_modes > limit:
        raise SpectralError(
            f"projection of {n_modes} modes from {m_points} {gk} points is not exact"
            f" (limit {limit})"
        )
    E = synthesis_matrix(basis_kind, n_modes, m_points, gk)
    return quadrature_weight(gk, m_points) * (v @ E)


def to_physical(x: "SpectralField", n_grid: int) -> np.ndarray:
    """Samples of the field on its basis' quadrature grid with n_grid points."""
    if n_grid < 2 * x.n_modes:
        raise SpectralError(f"grid too coarse: need n_grid >= {2 * x.n_modes}, got {n_grid}")
    return synthesize(x.coeffs, x.basis_kind, n_grid)


def from_physical(samples: np.ndarray, n_modes: int, basis_kind: str) -> "SpectralField":
    """Field whose first n_modes coefficients match the sampled data exactly."""
    v = np.asarray(samples, dtype=np.float64)
    if v.ndim != 1:
        raise SpectralError("samples must be 1-d; use project for batched data")
    if v.size < 2 * n_modes:
        raise SpectralError(f"too few samples: need >= {2 * n_modes}, got {v.size}")
    return SpectralField(project(v, basis_kind, n_modes), basis_kind)


def evaluate_at(coeffs: np.ndarray, basis_kind: str, xi: np.ndarray) -> np.ndarray:
    """Pointwise field values at arbitrary locations in [0, 1]."""
    c = np.asarray(coeffs, dtype=np.float64)
    E = basis_values_at(basis_kind, c.shape[-1], np.atleast_1d(np.asarray(xi, dtype=np.float64)))
    return c @ E.T
