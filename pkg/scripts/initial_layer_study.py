"""Distance of v from the heat-kernel profile N(x / (nu sqrt t)) at small t.

Two sweeps: fixed t_small = 0.01 under dx, dt refinement, and the joint
(dx, dt, t_small) refinement. A third column reruns each case with m = 1e6,
where the transport term vanishes and only the smoothing error remains.
"""

import warnings

from carbon_hjb.grid import ContainmentWarning, GridSpec, build_grid
from carbon_hjb.model import PenaltyConfig, validate_params
from carbon_hjb.penalty_solver import SolverConfig, initial_layer_error, solve_penalized

EPS = 0.01


def layer(f: int, t_small: float, m: float, nt: int) -> float:
    params = validate_params({"m": m})
    spec = GridSpec(x_min=-3.0, x_max=3.0, y_min=-1.0, y_max=1.0, nx=120 * f + 1, ny=11, nt=nt, T=t_small)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ContainmentWarning)
        grid = build_grid(spec, params)
    cfg = SolverConfig(penalty=PenaltyConfig(epsilon=EPS, epsilon_schedule=(EPS,)))
    v = solve_penalized(EPS, grid, params, cfg)
    return initial_layer_error(v, t_small, 1.0, params)


def main():
    print("sweep,factor,t_small,error,error_m1e6")
    for f in (1, 2, 4, 8):
        print(f"fixed_t,{f},0.01,{layer(f, 0.01, 0.3, 4 * f):.4f},{layer(f, 0.01, 1e6, 4 * f):.4f}", flush=True)
    for f in (1, 2, 4, 8):
        t = 0.01 / f
        # dt = t_small / 4 shrinks with t_small
        print(f"joint,{f},{t:g},{layer(f, t, 0.3, 4):.4f},{layer(f, t, 1e6, 4):.4f}", flush=True)


if __name__ == "__main__":
    main()
