"""Agreement of the penalty and projected solvers under grid and penalty refinement.

Prints one line per run: refinement factor, eps, max |u_x - v| and the
relative value discrepancy on the theta = 0 slice, plus Phi(1, 1, 0).
"""

import argparse
import math
import warnings

from carbon_hjb.grid import ContainmentWarning, GridSpec, build_grid, interpolate
from carbon_hjb.model import PenaltyConfig, validate_params
from carbon_hjb.obstacle_solver import cross_validate, solve_u_projected
from carbon_hjb.penalty_solver import SolverConfig, solve_penalized


def one(spec: GridSpec, eps: float, u_refine: int):
    params = validate_params({})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ContainmentWarning)
        grid = build_grid(spec, params)
    cfg = SolverConfig(penalty=PenaltyConfig(epsilon=eps, epsilon_schedule=(eps,)), store_every=spec.nt)
    v = solve_penalized(eps, grid, params, cfg)
    u = solve_u_projected(grid, params, store_every=spec.nt, x_refine=u_refine)
    rep = cross_validate(v, u, grid)
    return rep.max_ux_minus_v, rep.max_rel_phi, float(interpolate(u, 1.0, 0.0, spec.T))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--factors", default="1,2", help="comma-separated x/t refinement factors")
    ap.add_argument("--eps", default="0.01,0.005", help="comma-separated penalty parameters")
    ap.add_argument("--u-refine", type=int, default=2)
    args = ap.parse_args(argv)
    base = GridSpec()
    print("factor,eps,max_ux_minus_v,max_rel_phi,phi_1_1")
    for f in (int(t) for t in args.factors.split(",")):
        spec = base.refined(f) if f > 1 else base
        for eps in (float(t) for t in args.eps.split(",")):
            a, b, phi = one(spec, eps, args.u_refine)
            print(f"{f},{eps:g},{a:.6g},{b:.6g},{phi:.6g}", flush=True)


if __name__ == "__main__":
    main()
