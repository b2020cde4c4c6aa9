"""Invariant suite run over a set of solved surfaces.

Every check returns a :class:`CheckResult`; ``hard`` checks decide the exit
status of the ``check`` command, diagnostics are only reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from carbon_hjb.errors import NonmonotoneRow
from carbon_hjb.free_boundary import (
    FreeBoundary,
    check_boundary_bounds,
    epsilon_monotonicity,
    extract_boundary,
    monotonicity_in_y,
)
from carbon_hjb.grid import Grid, ValueSurface
from carbon_hjb.model import BoundConstants, ModelParams, beta, lemma22_bound, rho
from carbon_hjb.obstacle_solver import cross_validate
from carbon_hjb.report import CheckResult

EXACT_TOL = 1e-12          # exactness and roundoff allowance
CLIP_FRACTION = 1e-3
EXP_BOUND_TOL = 1e-8
RHO_SLACK = 1e-3
RHO_FRACTION = 0.99
ORDER_TOL = 1e-6
MONO_TOL = 1e-8
GRAD_REL_TOL = 1e-6
PHI_BOUND_SLACK = 1e-3
UX_TOL = 0.03
PHI_REL_TOL = 2e-2
COMPLEMENTARITY_TOL = 0.05


@dataclass(eq=False)
class Artifacts:
    """Everything one ``solve`` produces; ``v`` maps eps to its surface."""

    params: ModelParams
    grid: Grid
    v: dict[float, ValueSurface]
    u: ValueSurface
    phi: ValueSurface
    consts: BoundConstants
    boundaries: dict[float, FreeBoundary] = field(default_factory=dict)

    @property
    def eps_main(self) -> float:
        return min(self.v)

    def boundary(self, eps: float) -> FreeBoundary:
        if eps not in self.boundaries:
            self.boundaries[eps] = extract_boundary(self.v[eps])
        return self.boundaries[eps]


def terminal_exactness(u: ValueSurface, phi: ValueSurface, grid: Grid) -> CheckResult:
    if u.t_index[0] != 0 or phi.t_index[0] != 0:
        return CheckResult("terminal_exactness", False, np.inf, EXACT_TOL, detail={"reason": "no t=0 slice"})
    xp = np.maximum(grid.x_nodes, 0.0)[:, None]
    err_u = np.max(np.abs(u.data[0] - xp))
    err_phi = np.max(np.abs(phi.data[0] - xp * np.exp(grid.y_nodes)[None, :]))
    worst = float(max(err_u, err_phi))
    return CheckResult("terminal_exactness", worst <= EXACT_TOL, worst, EXACT_TOL)


def value_bounds(v: dict[float, ValueSurface]) -> CheckResult:
    """0 <= v <= 1 + eps everywhere, with few clipped nodes."""
    worst = 0.0
    clip_frac = 0.0
    for eps, s in v.items():
        worst = max(worst, float(np.max(-s.data)), float(np.max(s.data - (1.0 + eps))))
        nodes = s.grid.spec.nx * s.grid.spec.ny * s.grid.spec.nt
        clip_frac = max(clip_frac, s.clip_count / nodes)
    ok = worst <= 0.0 and clip_frac <= CLIP_FRACTION
    return CheckResult("value_bounds", ok, worst, 0.0, detail={"clip_fraction": clip_frac})


def penalty_activity(v: dict[float, ValueSurface], params: ModelParams) -> CheckResult:
    worst = 0.0
    cap = 2.0 * params.excess_drift
    for eps, s in v.items():
        b = beta((1.0 + eps - s.data) / eps, params)
        worst = max(worst, float(np.max(-b)), float(np.max(b - cap)))
    return CheckResult("penalty_activity", worst <= EXACT_TOL, worst, EXACT_TOL)


def monotone_in_x(v: dict[float, ValueSurface]) -> CheckResult:
    worst = min(float(np.min(np.diff(s.data, axis=1))) for s in v.values())
    return CheckResult("v_monotone_in_x", worst >= -MONO_TOL, worst, -MONO_TOL)


def exponential_upper_bound(v: dict[float, ValueSurface], params: ModelParams) -> CheckResult:
    worst = -np.inf
    rate = 0.5 * params.nu**2 + params.excess_drift
    for eps, s in v.items():
        g = s.grid
        bound = np.exp(g.x_nodes[None, :, None] + rate * s.t_values[:, None, None] + eps)
        worst = max(worst, float(np.max(s.data - bound)))
    return CheckResult("exponential_upper_bound", worst <= EXP_BOUND_TOL, worst, EXP_BOUND_TOL)


def rho_lower_barrier(v: dict[float, ValueSurface], consts: BoundConstants) -> CheckResult:
    """Diagnostic: the barrier constants only need to be 'large enough'."""
    held = total = 0
    worst = -np.inf
    for s in v.values():
        g = s.grid
        z = (
            consts.delta
            * g.x_nodes[None, :, None]
            * np.exp(-consts.kappa * s.t_values[:, None, None])
            / (consts.a_const + np.exp(g.y_nodes)[None, None, :])
        )
        gap = rho(z) - RHO_SLACK - s.data
        held += int(np.count_nonzero(gap <= 0.0))
        total += gap.size
        worst = max(worst, float(np.max(gap)))
    frac = held / total
    return CheckResult(
        "rho_lower_barrier", frac >= RHO_FRACTION, worst, 0.0, hard=False,
        detail={"fraction_held": frac, "kappa": consts.kappa, "a": consts.a_const},
    )


def epsilon_ordering(v: dict[float, ValueSurface]) -> CheckResult:
    """Smaller eps gives a smaller solution, nodewise on shared slices."""
    eps_sorted = sorted(v, reverse=True)
    worst = 0.0
    for big, small in zip(eps_sorted, eps_sorted[1:]):
        a, b = v[big], v[small]
        common, ia, ib = np.intersect1d(a.t_index, b.t_index, return_indices=True)
        worst = max(worst, float(np.max(b.data[ib] - a.data[ia])))
    return CheckResult("v_epsilon_ordering", worst <= ORDER_TOL, worst, ORDER_TOL)


def u_shape(u: ValueSurface, grid: Grid) -> CheckResult:
    """u >= 0, nondecreasing and convex in x, slope <= 1."""
    d = u.data
    du = np.diff(d, axis=1) / grid.dx
    d2 = np.diff(d, n=2, axis=1)
    parts = {
        "negative": float(np.max(-d)),
        "decreasing": float(np.max(-du)),
        "concave": float(np.max(-d2)),
        "slope_excess": float(np.max(du - 1.0)),
    }
    worst = max(parts.values())
    return CheckResult("u_shape", worst <= MONO_TOL, worst, MONO_TOL, detail=parts)


def phi_x_gradient(phi: ValueSurface, params: ModelParams) -> CheckResult:
    g = phi.grid
    s = np.exp(g.y_nodes)[None, None, :]
    tau = phi.t_values[:, None, None]          # T - theta
    cap = s * np.exp(params.excess_drift * tau) * (1.0 + GRAD_REL_TOL)
    dphi = np.diff(phi.data, axis=1) / g.dx
    worst = max(float(np.max(-dphi)), float(np.max(dphi - cap)))
    return CheckResult("phi_x_gradient", worst <= EXACT_TOL, worst, EXACT_TOL)


def phi_s_gradient(phi: ValueSurface) -> CheckResult:
    """0 <= dPhi/ds <= Phi/s on the s-mesh; Phi/s taken at the larger end node."""
    g = phi.grid
    s = np.exp(g.y_nodes)
    ds = np.diff(s)[None, None, :]
    d = phi.data
    slope = np.diff(d, axis=2) / ds
    per_s = d / s[None, None, :]
    cap = np.maximum(per_s[:, :, 1:], per_s[:, :, :-1]) + GRAD_REL_TOL
    worst = max(float(np.max(-slope)), float(np.max(slope - cap)))
    return CheckResult("phi_s_gradient", worst <= EXACT_TOL, worst, EXACT_TOL)


def phi_convex_x(phi: ValueSurface) -> CheckResult:
    worst = float(np.max(-np.diff(phi.data, n=2, axis=1)))
    return CheckResult("phi_convex_in_x", worst <= MONO_TOL, worst, MONO_TOL)


def phi_upper_bound(phi: ValueSurface, params: ModelParams) -> CheckResult:
    g = phi.grid
    s = np.exp(g.y_nodes)[None, None, :]
    x = g.x_nodes[None, :, None]
    tau = phi.t_values[:, None, None]
    bound = lemma22_bound(x, s, tau, params) + PHI_BOUND_SLACK * s
    worst = max(float(np.max(phi.data - bound)), float(np.max(-phi.data)))
    return CheckResult("phi_upper_bound", worst <= EXACT_TOL, worst, EXACT_TOL)


def method_agreement(a: Artifacts) -> CheckResult:
    rep = cross_validate(a.v[a.eps_main], a.u, a.grid, a.params)
    ok = rep.max_ux_minus_v <= UX_TOL and rep.max_rel_phi <= PHI_REL_TOL
    return CheckResult(
        "method_agreement", ok, rep.max_ux_minus_v, UX_TOL,
        detail={"max_rel_phi": rep.max_rel_phi, "rel_phi_tol": PHI_REL_TOL},
    )


def complementarity(a: Artifacts) -> CheckResult:
    """Diagnostic: needs two consecutive stored u slices, otherwise not evaluated."""
    rep = cross_validate(a.v[a.eps_main], a.u, a.grid, a.params)
    val = rep.complementarity
    evaluated = bool(np.isfinite(val))
    ok = (not evaluated) or val <= COMPLEMENTARITY_TOL
    return CheckResult(
        "complementarity", ok, val, COMPLEMENTARITY_TOL, hard=False, detail={"evaluated": evaluated}
    )


def _on_slices(fb: FreeBoundary, t_index: np.ndarray) -> FreeBoundary:
    keep = np.isin(fb.t_index, t_index)
    return FreeBoundary(fb.grid, fb.t_index[keep], fb.x_of[keep], fb.flags[keep], fb.level, fb.eps)


def boundary_checks(a: Artifacts) -> list[CheckResult]:
    eps_sorted = sorted(a.v, reverse=True)
    try:
        fbs = [a.boundary(e) for e in eps_sorted]
    except NonmonotoneRow as exc:
        # a corrupted surface has no well-defined level set
        return [CheckResult("free_boundary_extraction", False, np.inf, 0.0, detail={"reason": str(exc)[:60].replace(" ", "_")})]
    out = [check_boundary_bounds(fb, a.params, a.consts) for fb in fbs]
    worst = min(out, key=lambda r: (r.passed, -r.worst))
    mono = [monotonicity_in_y(fb) for fb in fbs]
    worst_mono = min(mono, key=lambda r: (r.passed, r.worst))
    # surfaces may be stored at different strides (e.g. reloaded exports)
    common = fbs[0].t_index
    for fb in fbs[1:]:
        common = np.intersect1d(common, fb.t_index)
    order = epsilon_monotonicity([_on_slices(fb, common) for fb in fbs])
    return [worst, worst_mono, order]


def run_suite(a: Artifacts) -> list[CheckResult]:
    return [
        terminal_exactness(a.u, a.phi, a.grid),
        value_bounds(a.v),
        penalty_activity(a.v, a.params),
        monotone_in_x(a.v),
        exponential_upper_bound(a.v, a.params),
        rho_lower_barrier(a.v, a.consts),
        epsilon_ordering(a.v),
        u_shape(a.u, a.grid),
        phi_x_gradient(a.phi, a.params),
        phi_s_gradient(a.phi),
        phi_convex_x(a.phi),
        phi_upper_bound(a.phi, a.params),
        method_agreement(a),
        complementarity(a),
        *boundary_checks(a),
    ]


def suite_passed(results: list[CheckResult]) -> bool:
    return all(r.passed for r in results if r.hard)
