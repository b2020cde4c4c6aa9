"""Penalized obstacle problem for v = du/dx, marched forward in t = T - theta.

Each time step is a Lie splitting of the parabolic operator:

1. implicit y-sweep of ``(sigma^2/2) v_yy + (mu + sigma^2/2) v_y`` with Neumann ends;
2. implicit x-sweep of ``(nu^2/2) v_xx + (mu - r) v - (e^y/m) v v_x - beta``,
   solved by Newton on the tridiagonal system, with Dirichlet data
   ``0`` at ``x_min`` and ``1 + eps`` at ``x_max`` carried by the slice.

The transport term uses a backward (upwind) difference, which keeps the
x-sweep an M-function on x-monotone slices, plus a minmod-limited curvature
correction evaluated on the predictor so the step stays tridiagonal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from carbon_hjb.errors import NewtonDiverged, SliceNotStored
from carbon_hjb.grid import Grid, ValueSurface
from carbon_hjb.model import (
    ModelParams,
    PenaltyConfig,
    beta,
    beta_prime,
    gaussian_cdf,
    initial_profile_cell_average,
)
from carbon_hjb.stencils import solve_tridiagonal_batch, y_sweep, y_sweep_coefficients

logger = logging.getLogger(__name__)

# clipping below this size is floating-point noise, not a scheme violation
CLIP_NOISE = 1e-13


@dataclass(frozen=True)
class SolverConfig:
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    newton_tol: float = 1e-9
    newton_max_iter: int = 30
    store_every: int = 1
    u_refine: int = 2                # x refinement of the projected u march

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")
        if self.u_refine < 1:
            raise ValueError("u_refine must be >= 1")


@dataclass(frozen=True)
class StepReport:
    time_index: int
    newton_iterations: int
    max_residual: float
    v_min: float
    v_max: float
    clipped: int = 0

    def log_line(self, t: float) -> str:
        return (
            f"step={self.time_index} t={t:.6g} newton={self.newton_iterations} "
            f"resid={self.max_residual:.3e} vmin={self.v_min:.6g} vmax={self.v_max:.6g} "
            f"clipped={self.clipped}"
        )


def initial_slice(eps: float, grid: Grid) -> np.ndarray:
    """Cell-averaged smoothed indicator, with exact Dirichlet values at the x ends."""
    v0 = np.clip(initial_profile_cell_average(grid.x_nodes, eps, grid.dx), 0.0, 1.0 + eps)
    v0[0] = 0.0
    v0[-1] = 1.0 + eps
    return np.repeat(v0[:, None], grid.spec.ny, axis=1)


def _minmod(a, b):
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def transport_correction(vstar, grid: Grid, p: ModelParams, k):
    """Limited second-order correction to the upwind transport, from the predictor.

    Adds ``k v (dx/2) minmod(D^-D^- v, D^+D^- v)``-type curvature back to the
    backward difference; zero at extrema and kinks, so monotone rows stay monotone.
    """
    dx = grid.dx
    dm = np.diff(vstar, axis=0)                    # v_i - v_{i-1}, i = 1..nx-1
    back, fwd = dm[:-1], dm[1:]
    prev = np.vstack([back[:1], back[:-1]])
    return k * vstar[1:-1] * 0.5 * _minmod(back - prev, fwd - back) / dx


def _x_residual(w, vstar, eps, grid: Grid, p: ModelParams, k, corr=0.0):
    """Residual of the x-sweep equation at interior nodes, shape (nx-2, ny)."""
    dx, dt = grid.dx, grid.dt
    a2 = 0.5 * p.nu**2
    wi, wl, wr = w[1:-1], w[:-2], w[2:]
    z = (1.0 + eps - wi) / eps
    return (
        (wi - vstar[1:-1]) / dt
        - a2 * (wr - 2.0 * wi + wl) / dx**2
        - p.excess_drift * wi
        + k * wi * (wi - wl) / dx
        + corr
        + beta(z, p)
    )


def _x_jacobian(w, eps, grid: Grid, p: ModelParams, k):
    dx, dt = grid.dx, grid.dt
    a2 = 0.5 * p.nu**2
    wi, wl = w[1:-1], w[:-2]
    z = (1.0 + eps - wi) / eps
    lower = -a2 / dx**2 - k * wi / dx
    diag = (
        1.0 / dt
        + 2.0 * a2 / dx**2
        - p.excess_drift
        + k * (2.0 * wi - wl) / dx
        - beta_prime(z, p) / eps
    )
    upper = np.full_like(wi, -a2 / dx**2)
    return lower, diag, upper


def _newton_x_sweep(vstar, boundary_src, eps, grid, p, config: SolverConfig, time_index):
    k = np.exp(grid.y_nodes) / p.m
    w = vstar.copy()
    w[0] = boundary_src[0]
    w[-1] = boundary_src[-1]
    corr = transport_correction(w, grid, p, k)
    F = _x_residual(w, vstar, eps, grid, p, k, corr)
    res = float(np.max(np.abs(F)))
    it = 0
    while res > config.newton_tol:
        if it >= config.newton_max_iter:
            raise NewtonDiverged(time_index, res, it)
        lower, diag, upper = _x_jacobian(w, eps, grid, p, k)
        delta = solve_tridiagonal_batch(lower.T, diag.T, upper.T, -F.T).T
        step = 1.0
        while True:
            trial = w.copy()
            trial[1:-1] += step * delta
            F_trial = _x_residual(trial, vstar, eps, grid, p, k, corr)
            res_trial = float(np.max(np.abs(F_trial)))
            if res_trial < res or step < 1e-3:
                break
            step *= 0.5
        w, F, res = trial, F_trial, res_trial
        it += 1
    return w, it, res


def time_step(
    v_prev: np.ndarray,
    eps: float,
    grid: Grid,
    params: ModelParams,
    config: SolverConfig | None = None,
    time_index: int = 1,
    y_coeffs=None,
) -> tuple[np.ndarray, StepReport]:
    """Advance one ``dt``. The x-boundary values of ``v_prev`` act as Dirichlet data."""
    config = config or SolverConfig()
    vstar = y_sweep(v_prev, grid, params, y_coeffs)
    w, iters, res = _newton_x_sweep(vstar, v_prev, eps, grid, params, config, time_index)
    v = np.clip(w, 0.0, 1.0 + eps)
    clipped = int(np.count_nonzero(np.abs(v - w) > CLIP_NOISE))
    report = StepReport(time_index, iters, res, float(v.min()), float(v.max()), clipped)
    return v, report


def solve_penalized(
    eps: float,
    grid: Grid,
    params: ModelParams,
    config: SolverConfig | None = None,
    store_times: set[int] | None = None,
) -> ValueSurface:
    """Solve the penalized equation for one ``eps``; returns a kind-'v' surface.

    Slices are stored every ``config.store_every`` steps (and always the first
    and last); ``store_times`` adds explicit time indices.
    """
    config = config or SolverConfig()
    nt = grid.spec.nt
    keep = set(range(0, nt + 1, config.store_every)) | {0, nt} | set(store_times or ())
    coeffs = y_sweep_coefficients(grid, params)
    v = initial_slice(eps, grid)
    stored, idx, reports = [v], [0], []
    clips = 0
    for n in range(1, nt + 1):
        v, rep = time_step(v, eps, grid, params, config, n, coeffs)
        clips += rep.clipped
        reports.append(rep)
        logger.debug(rep.log_line(grid.t_nodes[n]))
        if n in keep:
            stored.append(v)
            idx.append(n)
    surf = ValueSurface(grid, "v", np.stack(stored), np.array(idx), eps=eps, clip_count=clips)
    surf.meta["reports"] = reports
    return surf


def solve_schedule(
    grid: Grid, params: ModelParams, config: SolverConfig | None = None
) -> dict[float, ValueSurface]:
    """One penalized solve per ``eps`` in the configured schedule."""
    config = config or SolverConfig()
    return {eps: solve_penalized(eps, grid, params, config) for eps in config.penalty.epsilon_schedule}


def residual_field(v: ValueSurface, eps: float, grid: Grid, params: ModelParams) -> np.ndarray:
    """Discrete ``B_h[v] + beta`` on each stored slice.

    Only slices whose predecessor step is also stored can be evaluated; the
    others (and the initial slice) are NaN. Dirichlet nodes are zero.
    """
    out = np.full(v.data.shape, np.nan)
    k = np.exp(grid.y_nodes) / params.m
    coeffs = y_sweep_coefficients(grid, params)
    for s in range(1, len(v.t_index)):
        if v.t_index[s] - v.t_index[s - 1] != 1:
            continue
        vstar = y_sweep(v.data[s - 1], grid, params, coeffs)
        pred = vstar.copy()
        pred[0], pred[-1] = v.data[s - 1][0], v.data[s - 1][-1]
        corr = transport_correction(pred, grid, params, k)
        out[s, 1:-1] = _x_residual(v.data[s], vstar, eps, grid, params, k, corr)
        out[s, 0] = out[s, -1] = 0.0
    return out


def diagonal_coefficient(v_slice: np.ndarray, eps: float, grid: Grid, params: ModelParams):
    """Jacobian diagonal of the residual with respect to the node's own value."""
    k = np.exp(grid.y_nodes) / params.m
    return _x_jacobian(v_slice, eps, grid, params, k)[1]


def initial_layer_error(
    v: ValueSurface, t_small: float, y_band: float, params: ModelParams
) -> float:
    """``sup_{x, |y| <= y_band} |v(x, y, t_small) - N(x / (nu sqrt(t_small)))|``."""
    g = v.grid
    hits = np.nonzero(np.isclose(v.t_values, t_small, rtol=0.0, atol=1e-12 * g.spec.T))[0]
    if len(hits) == 0:
        raise SliceNotStored(f"no stored slice at t={t_small}")
    sl = v.data[hits[0]]
    band = np.abs(g.y_nodes) <= y_band + 1e-12
    ref = gaussian_cdf(g.x_nodes / (params.nu * np.sqrt(t_small)))
    return float(np.max(np.abs(sl[:, band] - ref[:, None])))
