"""Tridiagonal batch solves and the y-direction sweep shared by both solvers."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from carbon_hjb.grid import Grid
from carbon_hjb.model import ModelParams


def solve_tridiagonal_batch(lower, diag, upper, rhs):
    """Solve independent tridiagonal systems stacked along axis 0.

    All arrays have shape ``(batch, n)``; ``lower[:, 0]`` and ``upper[:, -1]``
    are ignored. The batch is solved as one banded system with the couplings
    between consecutive systems zeroed.
    """
    rhs = np.asarray(rhs, dtype=float)
    batch, n = rhs.shape
    lo = np.broadcast_to(lower, (batch, n)).copy()
    up = np.broadcast_to(upper, (batch, n)).copy()
    lo[:, 0] = 0.0
    up[:, -1] = 0.0
    ab = np.zeros((3, batch * n))
    ab[0, 1:] = up.ravel()[:-1]
    ab[1] = np.broadcast_to(diag, (batch, n)).ravel()
    ab[2, :-1] = lo.ravel()[1:]
    sol = solve_banded((1, 1), ab, rhs.ravel(), overwrite_ab=True, check_finite=False)
    return sol.reshape(batch, n)


def y_drift(p: ModelParams) -> float:
    """Coefficient of the first y-derivative after the log-price transform."""
    return p.mu + 0.5 * p.sigma**2


def y_sweep_coefficients(grid: Grid, p: ModelParams):
    """Diagonals of ``I - dt*Y`` with ``Y = (sigma^2/2) d_yy + (mu + sigma^2/2) d_y``.

    Centered drift while the cell Peclet number allows a monotone stencil,
    forward (upwind) otherwise. Homogeneous Neumann rows at both y ends.
    """
    ny = grid.spec.ny
    dt, dy = grid.dt, grid.dy
    diff = 0.5 * p.sigma**2 / dy**2
    b = y_drift(p)
    lower = np.full(ny, -dt * diff)
    diag = np.full(ny, 1.0 + 2.0 * dt * diff)
    upper = np.full(ny, -dt * diff)
    if b * dy <= p.sigma**2:
        lower += dt * b / (2.0 * dy)
        upper -= dt * b / (2.0 * dy)
    else:
        diag += dt * b / dy
        upper -= dt * b / dy
    lower[0] = 0.0
    upper[0] = -2.0 * dt * diff
    diag[0] = 1.0 + 2.0 * dt * diff
    upper[-1] = 0.0
    lower[-1] = -2.0 * dt * diff
    diag[-1] = 1.0 + 2.0 * dt * diff
    return lower, diag, upper


def y_sweep(field: np.ndarray, grid: Grid, p: ModelParams, coeffs=None) -> np.ndarray:
    """One implicit step of the y-operator applied to every x-row of ``field``."""
    lower, diag, upper = coeffs if coeffs is not None else y_sweep_coefficients(grid, p)
    return solve_tridiagonal_batch(lower, diag, upper, field)


def y_operator(field: np.ndarray, grid: Grid, p: ModelParams) -> np.ndarray:
    """Apply ``Y`` (not ``I - dt*Y``) with the same stencil as the sweep."""
    lower, diag, upper = y_sweep_coefficients(grid, p)
    dt = grid.dt
    # (I - dt Y) f = diag*f + lower*f_{j-1} + upper*f_{j+1}
    out = (diag - 1.0) * field
    out[:, 1:] += lower[1:] * field[:, :-1]
    out[:, :-1] += upper[:-1] * field[:, 1:]
    return -out / dt
