"""Gradient-constrained problem for u, solved independently of the penalty route.

Each step: implicit y-sweep, implicit x-sweep with the Hamiltonian
``(e^y/2m) u_x^2`` linearized (tangent) about the previous slice's slope, then a
left-to-right projection enforcing ``u_x <= 1`` (buy down to the boundary).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from carbon_hjb.errors import GridMismatch, LeftBoundaryNotVanishing, NonmonotoneSlice
from carbon_hjb.grid import Grid, ValueSurface
from carbon_hjb.model import ModelParams
from carbon_hjb.stencils import solve_tridiagonal_batch, y_operator, y_sweep, y_sweep_coefficients

MONOTONE_TOL = 1e-8


def gradient_project(u_row, dx: float):
    """Largest minorant with discrete slope <= 1 obtainable by a left-to-right sweep.

    Equivalent to ``u_i <- min(u_i, u_{i-1} + dx)`` applied sequentially; works
    along axis 0 so a whole ``(nx, ny)`` slice is projected at once.
    """
    u = np.asarray(u_row, dtype=float)
    ramp = (np.arange(u.shape[0]) * dx).reshape((-1,) + (1,) * (u.ndim - 1))
    return ramp + np.minimum.accumulate(u - ramp, axis=0)


def integrate_v_to_u(v: ValueSurface, grid: Grid, left_tol: float | None = 0.01) -> ValueSurface:
    """Cumulative trapezoid integral of v in x, anchored at ``u(x_min) = 0``.

    ``left_tol=None`` skips the check that v has decayed at the left edge.
    """
    if left_tol is not None:
        left = float(np.max(np.abs(v.data[:, 0, :])))
        if left > left_tol:
            raise LeftBoundaryNotVanishing(
                f"|v(x_min)| reaches {left:.3g} > {left_tol}; widen the box to the left"
            )
    d = v.data
    u = np.zeros_like(d)
    u[:, 1:, :] = np.cumsum(0.5 * (d[:, 1:, :] + d[:, :-1, :]) * grid.dx, axis=1)
    return ValueSurface(grid, "u", u, v.t_index.copy(), eps=v.eps)


def _x_sweep_u(ustar, p_lag, grid: Grid, params: ModelParams):
    dx, dt = grid.dx, grid.dt
    a2 = 0.5 * params.nu**2
    k = np.exp(grid.y_nodes) / params.m
    # tangent linearization of (k/2) u_x^2 about the lagged slope p:
    # (k/2) u_x^2 ~ k p u_x - (k/2) p^2
    p = p_lag[1:-1]
    speed = k * p                              # (nx-2, ny), >= 0
    # centered transport plus the smallest artificial diffusion that keeps every
    # node of the x-row monotone; one value per row, so more numerical smoothing
    # never lands on larger s and u stays nonincreasing in y
    extra = np.max(np.maximum(0.0, 0.5 * speed * dx - a2), axis=1, keepdims=True)
    d = a2 + extra
    lower = dt * (-d / dx**2 - 0.5 * speed / dx)
    diag = np.broadcast_to(1.0 + dt * (2.0 * d / dx**2 - params.excess_drift), speed.shape).copy()
    upper = dt * (-d / dx**2 + 0.5 * speed / dx)
    rhs = ustar[1:-1].copy()
    rhs += dt * 0.5 * k * p**2
    # slope-one extension at x_max: u_N = u_{N-1} + dx
    diag[-1] += upper[-1]
    rhs[-1] -= upper[-1] * dx
    inner = solve_tridiagonal_batch(lower.T, diag.T, upper.T, rhs.T).T
    u = np.empty_like(ustar)
    u[0] = 0.0
    u[1:-1] = inner
    u[-1] = inner[-1] + dx
    return u


def solve_u_projected(
    grid: Grid, params: ModelParams, store_every: int = 1, store_times=None, x_refine: int = 1
) -> ValueSurface:
    """March u from ``u(x, y, 0) = x^+``; returns a kind-'u' surface on ``grid``.

    With ``x_refine > 1`` the march runs on a mesh ``x_refine`` times finer in
    x and is restricted to the grid nodes. Restriction keeps monotonicity,
    convexity and the slope cap, and shrinks the O(dx) smearing that the
    artificial diffusion adds at the kink.
    """
    if x_refine < 1:
        raise ValueError(f"x_refine must be >= 1, got {x_refine}")
    fine = grid
    if x_refine > 1:
        sp = grid.spec
        fine_spec = replace(sp, nx=(sp.nx - 1) * x_refine + 1)
        fine = Grid(fine_spec, np.linspace(sp.x_min, sp.x_max, fine_spec.nx), grid.y_nodes, grid.t_nodes,
                    grid.containment_ok)
    nt = grid.spec.nt
    keep = set(range(0, nt + 1, store_every)) | {0, nt} | set(store_times or ())
    coeffs = y_sweep_coefficients(fine, params)
    dx = fine.dx
    u = np.repeat(np.maximum(fine.x_nodes, 0.0)[:, None], grid.spec.ny, axis=1)
    stored, idx = [u[::x_refine]], [0]
    for n in range(1, nt + 1):
        ustar = y_sweep(u, fine, params, coeffs)
        ustar[0] = 0.0
        p_lag = np.clip(np.gradient(u, dx, axis=0), 0.0, 1.0)
        u = gradient_project(_x_sweep_u(ustar, p_lag, fine, params), dx)
        worst = float(np.min(np.diff(u, axis=0)))
        if worst < -MONOTONE_TOL:
            raise NonmonotoneSlice(f"u decreases by {-worst:.3e} in x at step {n}")
        if n in keep:
            stored.append(u[::x_refine])
            idx.append(n)
    return ValueSurface(grid, "u", np.stack(stored), np.array(idx))


def phi_from_u(u: ValueSurface, grid: Grid) -> ValueSurface:
    """Physical value ``Phi(x, s, theta) = s * u(x, log s, T - theta)`` on the nodes.

    The returned surface keeps the transformed time axis: slice ``t`` holds
    ``Phi`` at ``theta = T - t``.
    """
    s = np.exp(grid.y_nodes)
    return ValueSurface(grid, "phi", u.data * s[None, None, :], u.t_index.copy(), eps=u.eps)


def hamiltonian_residual(u: ValueSurface, grid: Grid, params: ModelParams, s_index: int) -> np.ndarray:
    """Discrete ``A_h[u]`` on stored slice ``s_index`` (needs the previous step stored)."""
    if s_index < 1 or u.t_index[s_index] - u.t_index[s_index - 1] != 1:
        raise ValueError("A_h needs two consecutive stored slices")
    cur, prev = u.data[s_index], u.data[s_index - 1]
    dx = grid.dx
    a2 = 0.5 * params.nu**2
    k = np.exp(grid.y_nodes) / params.m
    out = np.zeros_like(cur)
    ux = (cur[2:] - cur[:-2]) / (2 * dx)
    uxx = (cur[2:] - 2 * cur[1:-1] + cur[:-2]) / dx**2
    yop = y_operator(cur, grid, params)
    out[1:-1] = (
        (cur[1:-1] - prev[1:-1]) / grid.dt
        - yop[1:-1]
        - params.excess_drift * cur[1:-1]
        - a2 * uxx
        + 0.5 * k * ux**2
    )
    return out


@dataclass
class CrossCheckReport:
    max_ux_minus_v: float
    max_rel_phi: float
    complementarity: float
    t_compare: float
    slices: list[tuple[float, float, float]] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [
            f"t_compare={self.t_compare:.15g}",
            f"max_abs_ux_minus_v={self.max_ux_minus_v:.15g}",
            f"max_rel_phi={self.max_rel_phi:.15g}",
            f"max_abs_complementarity={self.complementarity:.15g}",
        ]
        out += [f"slice t={t:.15g} ux_minus_v={a:.15g} rel_phi={b:.15g}" for t, a, b in self.slices]
        return out


def _slope(u_slice: np.ndarray, dx: float) -> np.ndarray:
    return np.gradient(u_slice, dx, axis=0)


def _compare(v_sl, u_sl, u_from_v_sl, dx):
    ux = _slope(u_sl, dx)
    a = float(np.max(np.abs(ux - v_sl)))
    # relative Phi discrepancy, floored at s (i.e. at u = 1)
    b = float(np.max(np.abs(u_from_v_sl - u_sl) / np.maximum(np.abs(u_sl), 1.0)))
    return a, b


def cross_validate(
    v_surface: ValueSurface,
    u_surface: ValueSurface,
    grid: Grid,
    params: ModelParams | None = None,
) -> CrossCheckReport:
    """Agreement of the penalty route (v, integrated to u) with the projected u solve.

    Headline numbers are taken on the last common slice (``theta = 0``); the
    per-slice breakdown covers every common stored time after the initial one.
    """
    if not (v_surface.grid.same_as(grid) and u_surface.grid.same_as(grid)):
        raise GridMismatch("surfaces were solved on different grids")
    u_pen = integrate_v_to_u(v_surface, grid, left_tol=None)
    common = np.intersect1d(v_surface.t_index, u_surface.t_index)
    common = common[common > 0]
    if len(common) == 0:
        raise GridMismatch("no common stored slice after t=0")
    slices = []
    for n in common:
        iv = int(np.nonzero(v_surface.t_index == n)[0][0])
        iu = int(np.nonzero(u_surface.t_index == n)[0][0])
        a, b = _compare(v_surface.data[iv], u_surface.data[iu], u_pen.data[iv], grid.dx)
        slices.append((float(grid.t_nodes[n]), a, b))
    comp = float("nan")
    iu_last = int(np.nonzero(u_surface.t_index == common[-1])[0][0])
    if params is not None and iu_last >= 1 and u_surface.t_index[iu_last - 1] == common[-1] - 1:
        A = hamiltonian_residual(u_surface, grid, params, iu_last)
        ux = _slope(u_surface.data[iu_last], grid.dx)
        comp = float(np.max(np.abs(np.minimum(1.0 - ux, -A)[1:-1, 1:-1])))
    t_last, a_last, b_last = slices[-1]
    return CrossCheckReport(a_last, b_last, comp, t_last, slices)
