"""Free boundary x(y, t): where v reaches the obstacle level along each x-row.

Rows that never reach the level are flagged right-exit (``x = +inf``); rows
already at the level on the left edge are flagged left-exit (``x = -inf``).
A crossing inside the last cell is flagged ``EDGE``: it is dictated by the
Dirichlet value at ``x_max`` rather than by the interior solution, so the true
boundary may lie further right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from carbon_hjb.errors import GridMismatch, NonmonotoneRow
from carbon_hjb.grid import Grid, ValueSurface, write_table
from carbon_hjb.model import BoundConstants, ModelParams
from carbon_hjb.report import CheckResult

INTERIOR, RIGHT_EXIT, LEFT_EXIT, EDGE = 0, 1, 2, 3
ROW_MONOTONE_TOL = 1e-10
LIMIT_LEVEL_GAP = 1e-6


@dataclass(eq=False)
class FreeBoundary:
    """Boundary location per stored slice and y-node, shape ``(n_t, ny)``."""

    grid: Grid
    t_index: np.ndarray
    x_of: np.ndarray
    flags: np.ndarray
    level: float
    eps: float | None = None

    @property
    def y_nodes(self) -> np.ndarray:
        return self.grid.y_nodes

    @property
    def t_nodes(self) -> np.ndarray:
        return self.grid.t_nodes[self.t_index]

    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.x_of)

    def at(self, y, t):
        """Bilinear lookup in (y, t); +inf propagates where a neighbour exits right."""
        y, t = np.broadcast_arrays(np.asarray(y, float), np.asarray(t, float))
        ys, ts = self.y_nodes, self.t_nodes
        yc = np.clip(y, ys[0], ys[-1])
        tc = np.clip(t, ts[0], ts[-1])
        j = np.clip(np.searchsorted(ys, yc, side="right") - 1, 0, len(ys) - 2)
        wy = (yc - ys[j]) / (ys[j + 1] - ys[j])
        if len(ts) > 1:
            k = np.clip(np.searchsorted(ts, tc, side="right") - 1, 0, len(ts) - 2)
            wt = (tc - ts[k]) / (ts[k + 1] - ts[k])
            k1 = k + 1
        else:
            k = k1 = np.zeros_like(j)
            wt = np.zeros_like(wy)
        X = self.x_of
        with np.errstate(invalid="ignore"):
            row0 = _lerp(X[k, j], X[k, j + 1], wy)
            row1 = _lerp(X[k1, j], X[k1, j + 1], wy)
            out = _lerp(row0, row1, wt)
        return out[()] if out.ndim == 0 else out


def _lerp(a, b, w):
    # an infinite endpoint dominates unless its weight is exactly zero
    return np.where(w == 0.0, a, np.where(w == 1.0, b, a * (1.0 - w) + b * w))


def default_level(v: ValueSurface) -> float:
    return 1.0 - v.eps if v.eps is not None else 1.0 - LIMIT_LEVEL_GAP


def extract_boundary(v: ValueSurface, level: float | None = None) -> FreeBoundary:
    """First x where the piecewise-linear row reaches ``level``, per (t, y)."""
    if level is None:
        level = default_level(v)
    if not 0.0 < level < 1.0:
        raise ValueError(f"level {level} outside (0, 1)")
    g = v.grid
    d = v.data                                          # (n_t, nx, ny)
    worst = float(np.min(np.diff(d, axis=1))) if g.spec.nx > 1 else 0.0
    if worst < -ROW_MONOTONE_TOL:
        k, i, j = np.unravel_index(np.argmin(np.diff(d, axis=1)), (d.shape[0], d.shape[1] - 1, d.shape[2]))
        raise NonmonotoneRow(
            f"v decreases by {-worst:.3e} in x at t={g.t_nodes[v.t_index[k]]:.6g}, "
            f"x={g.x_nodes[i]:.6g}, y={g.y_nodes[j]:.6g}"
        )
    above = d >= level
    hit = above.any(axis=1)
    first = np.argmax(above, axis=1)                    # (n_t, ny)
    x = np.full(first.shape, np.inf)
    flags = np.full(first.shape, RIGHT_EXIT, dtype=int)
    left = hit & (first == 0)
    x[left] = -np.inf
    flags[left] = LEFT_EXIT
    inner = hit & (first > 0)
    kk, jj = np.nonzero(inner)
    i1 = first[kk, jj]
    lo, hi = d[kk, i1 - 1, jj], d[kk, i1, jj]
    w = (level - lo) / (hi - lo)
    x[kk, jj] = g.x_nodes[i1 - 1] + w * g.dx
    flags[kk, jj] = np.where(i1 == g.spec.nx - 1, EDGE, INTERIOR)
    return FreeBoundary(g, v.t_index.copy(), x, flags, float(level), v.eps)


def boundary_bounds(y, t, eps: float, params: ModelParams, consts: BoundConstants):
    """Two-sided containment interval ``(lower, upper)`` for the penalized boundary."""
    t = np.asarray(t, float)
    lower = -(0.5 * params.nu**2 + params.excess_drift) * t - eps + math.log(1.0 - eps)
    upper = 3.0 * (consts.a_const + np.exp(y)) / consts.delta * np.exp(consts.kappa * t)
    return lower, upper


def check_boundary_bounds(
    fb: FreeBoundary,
    params: ModelParams,
    consts: BoundConstants,
    eps: float | None = None,
) -> CheckResult:
    """Fraction of (y, t) points outside the two-sided interval.

    Exit-flagged points count as violations only when the box edge they
    exit through already lies outside the interval.
    """
    eps = fb.eps if eps is None else eps
    if eps is None:
        raise ValueError("penalty parameter needed for the containment interval")
    g = fb.grid
    Y, Tm = np.meshgrid(fb.y_nodes, fb.t_nodes)
    lower, upper = boundary_bounds(Y, Tm, eps, params, consts)
    lower = np.broadcast_to(lower, Y.shape)
    x = np.where(fb.flags == RIGHT_EXIT, g.spec.x_max, fb.x_of)
    x = np.where(fb.flags == LEFT_EXIT, g.spec.x_min, x)
    below = np.where(fb.flags == RIGHT_EXIT, False, x < lower)
    over = np.where(fb.flags == LEFT_EXIT, False, x > upper)
    n_bad = int(np.count_nonzero(below | over))
    excess = np.maximum(np.max(lower - x, initial=-np.inf), np.max(x - upper, initial=-np.inf))
    return CheckResult(
        "free_boundary_containment",
        n_bad == 0,
        float(n_bad) / x.size,
        0.0,
        detail={
            "lower_violations": int(np.count_nonzero(below)),
            "upper_violations": int(np.count_nonzero(over)),
            "max_excess": float(excess),
        },
    )


def monotonicity_in_y(fb: FreeBoundary, tol: float | None = None) -> CheckResult:
    """Largest decrease of x(., t) between neighbouring y-nodes where both are finite."""
    tol = 1e-6 * fb.grid.dx if tol is None else tol
    X = fb.x_of
    both = np.isfinite(X[:, 1:]) & np.isfinite(X[:, :-1])
    inc = np.where(both, X[:, 1:] - X[:, :-1], np.inf)
    # an exit to the right followed by a finite value further up is a decrease too
    jump_down = np.isposinf(X[:, :-1]) & np.isfinite(X[:, 1:])
    inc = np.where(jump_down, -np.inf, inc)
    worst = float(np.min(inc)) if inc.size else np.inf
    detail = {}
    if inc.size and worst < 0:
        k, j = np.unravel_index(np.argmin(inc), inc.shape)
        detail = {"t": float(fb.t_nodes[k]), "y_lo": float(fb.y_nodes[j]), "y_hi": float(fb.y_nodes[j + 1])}
    worst = min(worst, 0.0)
    return CheckResult("free_boundary_monotone_in_y", worst >= -tol, worst, -tol, detail=detail)


def epsilon_monotonicity(fbs, tol: float | None = None) -> CheckResult:
    """Boundaries listed for decreasing eps must be pointwise nondecreasing."""
    fbs = list(fbs)
    if len(fbs) < 2:
        return CheckResult("free_boundary_eps_order", True, 0.0, 0.0)
    ref = fbs[0]
    for other in fbs[1:]:
        if not other.grid.same_as(ref.grid) or not np.array_equal(other.t_index, ref.t_index):
            raise GridMismatch("boundaries do not share (y, t) nodes")
    tol = ref.grid.dx if tol is None else tol
    worst = 0.0
    detail = {}
    for n, (a, b) in enumerate(zip(fbs, fbs[1:])):
        with np.errstate(invalid="ignore"):
            diff = b.x_of - a.x_of
        diff = np.where(np.isnan(diff), 0.0, diff)       # same infinite flag on both
        lo = float(np.min(diff))
        if lo < worst:
            worst = lo
            detail = {"pair": n, "eps_from": a.eps, "eps_to": b.eps}
    return CheckResult("free_boundary_eps_order", worst >= -tol, worst, -tol, detail=detail)


def write_boundary(fb: FreeBoundary, path: str | Path, comment: str | None = None) -> None:
    """Columns ``y, s, t, theta, x_boundary, flag``; exits are written as +/-inf."""
    T = fb.grid.spec.T
    Y, Tm = np.meshgrid(fb.y_nodes, fb.t_nodes)
    table = np.column_stack(
        [Y.ravel(), np.exp(Y.ravel()), Tm.ravel(), T - Tm.ravel(), fb.x_of.ravel(), fb.flags.ravel()]
    )
    write_table(path, ["y", "s", "t", "theta", "x_boundary", "flag"], table, comment)
