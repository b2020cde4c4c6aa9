"""Solve, export, reload and post-process one configured run."""

from __future__ import annotations

import logging
import math
import warnings
from pathlib import Path

import numpy as np

from carbon_hjb.checks import Artifacts
from carbon_hjb.config import RunConfig
from carbon_hjb.errors import MissingArtifacts
from carbon_hjb.free_boundary import extract_boundary, write_boundary
from carbon_hjb.grid import ContainmentWarning, ValueSurface, build_grid, interpolate, read_surface, write_surface, write_table
from carbon_hjb.obstacle_solver import cross_validate, phi_from_u, solve_u_projected
from carbon_hjb.penalty_solver import solve_penalized
from carbon_hjb.policy_sim import (
    FixedStrategy,
    extract_policy,
    simulate_paths,
    strategy_dominance,
    verify_value,
)

logger = logging.getLogger(__name__)

LIMIT_LEVEL = 1.0 - 1e-6
MANIFEST = "manifest.txt"
# the policy needs every stored slice of the main v surface, not the thinned export
POLICY_DATA = "policy_v.npy"
POLICY_INDEX = "policy_t_index.npy"


def eps_tag(eps: float) -> str:
    return f"{eps:g}"


def header(cfg: RunConfig) -> str:
    return f"config_hash={cfg.hash()}"


def build(cfg: RunConfig):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ContainmentWarning)
        grid = build_grid(cfg.grid, cfg.params, cfg.consts())
    for w in caught:
        logger.warning("%s", w.message)
    return grid


def solve_all(cfg: RunConfig, log_dir: Path | None = None) -> Artifacts:
    grid = build(cfg)
    v = {}
    for eps in cfg.eps_schedule:
        logger.info("penalty solve eps=%g", eps)
        v[eps] = solve_penalized(eps, grid, cfg.params, cfg.solver)
        if log_dir is not None:
            lines = [r.log_line(grid.t_nodes[r.time_index]) for r in v[eps].meta["reports"]]
            (log_dir / f"solve_eps{eps_tag(eps)}.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("projected u solve")
    nt = cfg.grid.nt
    u = solve_u_projected(grid, cfg.params, store_every=cfg.solver.store_every, store_times={nt - 1},
                          x_refine=cfg.solver.u_refine)
    return Artifacts(cfg.params, grid, v, u, phi_from_u(u, grid), cfg.consts())


def _export_view(surface, every: int):
    keep = (surface.t_index % every == 0) | (surface.t_index == surface.grid.spec.nt)
    return type(surface)(surface.grid, surface.kind, surface.data[keep], surface.t_index[keep], eps=surface.eps)


def write_artifacts(a: Artifacts, cfg: RunConfig, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    head = header(cfg)
    written = []
    for eps, surf in a.v.items():
        path = out / f"v_eps{eps_tag(eps)}.csv"
        write_surface(_export_view(surf, cfg.export_every), path, head)
        written.append(path)
    for name, surf in (("u", a.u), ("phi", a.phi)):
        path = out / f"{name}.csv"
        write_surface(_export_view(surf, cfg.export_every), path, head)
        written.append(path)
    rep = cross_validate(a.v[a.eps_main], a.u, a.grid, a.params)
    path = out / "crosscheck.txt"
    path.write_text("\n".join([f"# {head}", *rep.lines()]) + "\n", encoding="utf-8", newline="\n")
    written.append(path)
    main = a.v[a.eps_main]
    np.save(out / POLICY_DATA, main.data)
    np.save(out / POLICY_INDEX, main.t_index)
    manifest = [f"solve_hash={cfg.solve_hash()}"]
    manifest += [f"clip_count_eps{eps_tag(e)}={s.clip_count}" for e, s in a.v.items()]
    (out / MANIFEST).write_text("\n".join(manifest) + "\n", encoding="utf-8", newline="\n")
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8", newline="\n")
    return written


def load_artifacts(cfg: RunConfig, out: Path) -> Artifacts:
    """Reload exported surfaces; they must come from the same configuration."""
    man = out / MANIFEST
    if not man.exists():
        raise MissingArtifacts(f"no {MANIFEST} in {out}; run 'solve' first")
    meta = dict(line.split("=", 1) for line in man.read_text(encoding="utf-8").split())
    if meta.get("solve_hash") != cfg.solve_hash():
        raise MissingArtifacts(f"artifacts in {out} were produced by a different configuration")
    grid = build(cfg)
    v = {}
    for eps in cfg.eps_schedule:
        path = out / f"v_eps{eps_tag(eps)}.csv"
        if not path.exists():
            raise MissingArtifacts(f"missing {path.name}")
        v[eps] = read_surface(path, grid, "v", eps)
        v[eps].clip_count = int(meta.get(f"clip_count_eps{eps_tag(eps)}", 0))
    main = min(v)
    if (out / POLICY_DATA).exists() and (out / POLICY_INDEX).exists():
        v[main] = ValueSurface(grid, "v", np.load(out / POLICY_DATA), np.load(out / POLICY_INDEX),
                               eps=main, clip_count=v[main].clip_count)
    for name in ("u", "phi"):
        if not (out / f"{name}.csv").exists():
            raise MissingArtifacts(f"missing {name}.csv")
    u = read_surface(out / "u.csv", grid, "u")
    phi = read_surface(out / "phi.csv", grid, "phi")
    return Artifacts(cfg.params, grid, v, u, phi, cfg.consts())


def limit_boundary(a: Artifacts):
    return extract_boundary(a.v[a.eps_main], LIMIT_LEVEL)


def policy_of(a: Artifacts):
    return extract_policy(a.v[a.eps_main], limit_boundary(a), a.params)


def _mesh(cfg: RunConfig):
    f = cfg.figures
    x0 = np.linspace(f.x0_min, f.x0_max, f.x0_n)
    s0 = np.linspace(f.s0_min, f.s0_max, f.s0_n)
    X, S = np.meshgrid(x0, s0, indexing="ij")
    return X.ravel(), S.ravel()


def sweep(cfg: RunConfig, name: str) -> np.ndarray:
    """Phi at the probe point (theta = 0) for each value of one parameter."""
    f = cfg.figures
    grid = build(cfg)
    rows = []
    for val in getattr(f, name):
        p = cfg.params.replace(**{name: val})
        u = solve_u_projected(grid, p, store_every=cfg.grid.nt, x_refine=cfg.solver.u_refine)
        phi = f.probe_s * float(interpolate(u, f.probe_x, math.log(f.probe_s), cfg.grid.T))
        rows.append((val, phi))
    return np.array(rows)


def write_figures(a: Artifacts, cfg: RunConfig, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    head = header(cfg)
    T = cfg.grid.T
    X, S = _mesh(cfg)
    Y = np.log(S)
    written = []

    def emit(name, cols, table):
        path = out / name
        write_table(path, cols, table, head)
        written.append(path)

    emit("fig1_phi_x0_s0.csv", ["x0", "s0", "phi"],
         np.column_stack([X, S, interpolate(a.phi, X, Y, T)]))
    fb = limit_boundary(a)
    path = out / "fig2_boundary.csv"
    write_boundary(fb, path, head)
    written.append(path)
    emit("fig3_v.csv", ["x0", "s0", "v"],
         np.column_stack([X, S, interpolate(a.v[a.eps_main], X, Y, T)]))
    pol = extract_policy(a.v[a.eps_main], fb, a.params)
    rate = pol.rate(X, S, 0.0)
    xb = pol.buy_boundary(S, 0.0)
    emit("fig4_policy.csv", ["x0", "s0", "a_star", "x_boundary", "buy"],
         np.column_stack([X, S, rate, xb, (X > xb).astype(float)]))
    for n, name in enumerate(("m", "nu", "mu", "sigma"), start=5):
        logger.info("sweep %s", name)
        emit(f"fig{n}_{name}.csv", [name, "phi"], sweep(cfg, name))
    return written


def run_simulations(a: Artifacts, cfg: RunConfig, out: Path) -> tuple[bool, list[str]]:
    """Value verification and dominance at every configured point."""
    out.mkdir(parents=True, exist_ok=True)
    sim = cfg.sim
    pol = policy_of(a)
    zero = FixedStrategy(0.0, name="zero")
    const = FixedStrategy(sim.constant_rate, name=f"constant_a{sim.constant_rate:g}")
    lines = [f"# {header(cfg)}"]
    ok = True
    for n, (x0, s0) in enumerate(sim.points):
        rep = simulate_paths(pol, a.params, x0, s0, 0.0, sim.paths, sim.steps, sim.seed)
        rep.write(out / f"sim_point{n}.txt")
        chk = verify_value(rep, a.phi, x0, s0, 0.0, sim.rel_tol)
        lines.append(chk.line() + f" exit_fraction={rep.exit_fraction:.6g}")
        ok &= chk.passed
    rows = strategy_dominance(sim.points, [zero, const], pol, sim.paths, sim.steps, sim.seed)
    for row in rows:
        lines.append(row.line())
        ok &= row.holds
    lines.append(f"overall={'PASS' if ok else 'FAIL'}")
    (out / "simulate.txt").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return ok, lines
