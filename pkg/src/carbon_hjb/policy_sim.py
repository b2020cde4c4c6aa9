"""Feedback policy read off the solved surfaces, and Monte Carlo replay of it.

Physical time ``theta`` runs from ``t0`` to ``T``; surfaces are indexed by the
reversed time ``t = T - theta``. Prices are stepped exactly (lognormal), the
surplus by Euler, and purchases are an end-of-step projection onto the buy
boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from carbon_hjb.errors import GridMismatch, InvalidCounts, MissingSurface, NonpositivePrice
from carbon_hjb.free_boundary import FreeBoundary
from carbon_hjb.grid import ValueSurface, interpolate, write_table
from carbon_hjb.model import ModelParams

CHUNK = 4096
EXIT_LIMIT = 0.01
BUY_REGION_LEVEL = 1.0 - 5e-2
MIN_PATHS_FOR_VERDICT = 30


@dataclass(eq=False)
class Policy:
    """Reduction rate ``a* = s v / m`` and buy boundary ``x_b(s, theta)``."""

    v: ValueSurface
    boundary: FreeBoundary
    params: ModelParams
    name: str = "policy"

    def _t(self, theta):
        return self.params.T - np.asarray(theta, float)

    def rate(self, x, s, theta, return_flag: bool = False):
        s = np.asarray(s, float)
        val, flag = interpolate(self.v, x, np.log(s), self._t(theta), return_flag=True)
        a = s * np.asarray(val) / self.params.m
        a = a[()] if np.ndim(a) == 0 else a
        return (a, flag) if return_flag else a

    def buy_boundary(self, s, theta):
        return self.boundary.at(np.log(np.asarray(s, float)), self._t(theta))

    def v_at(self, x, s, theta):
        return interpolate(self.v, x, np.log(np.asarray(s, float)), self._t(theta))


@dataclass(frozen=True)
class FixedStrategy:
    """Constant reduction rate; optional constant buy boundary (``None`` never buys)."""

    rate_value: float = 0.0
    buy_at: float | None = None
    name: str = "fixed"

    def rate(self, x, s, theta, return_flag: bool = False):
        a = np.full(np.shape(x), float(self.rate_value))
        a = a[()] if a.ndim == 0 else a
        return (a, np.zeros(np.shape(x), bool)) if return_flag else a

    def buy_boundary(self, s, theta):
        b = np.inf if self.buy_at is None else float(self.buy_at)
        return np.full(np.shape(s), b)


def extract_policy(v: ValueSurface | None, fb: FreeBoundary | None, params: ModelParams) -> Policy:
    if v is None or fb is None:
        raise MissingSurface("policy needs both the v surface and the free boundary")
    if v.kind != "v":
        raise MissingSurface(f"expected a kind-'v' surface, got {v.kind!r}")
    if not v.grid.same_as(fb.grid):
        raise GridMismatch("surface and boundary come from different grids")
    return Policy(v, fb, params)


@dataclass
class SimReport:
    strategy: str
    n_paths: int
    n_steps: int
    seed: int
    x0: float
    s0: float
    t0: float
    mean_cost: float
    stderr: float
    terminal: float
    purchase: float
    internal: float
    exit_fraction: float
    purchase_events: int
    purchases_outside_buy_region: int
    per_path: np.ndarray | None = field(default=None, repr=False)

    @property
    def valid(self) -> bool:
        return self.exit_fraction <= EXIT_LIMIT

    def lines(self) -> list[str]:
        keys = [
            "strategy", "n_paths", "n_steps", "seed", "x0", "s0", "t0", "mean_cost",
            "stderr", "terminal", "purchase", "internal", "exit_fraction",
            "purchase_events", "purchases_outside_buy_region",
        ]
        out = []
        for k in keys:
            val = getattr(self, k)
            out.append(f"{k}={val:.15g}" if isinstance(val, float) else f"{k}={val}")
        out.append(f"valid={self.valid}")
        return out

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8", newline="\n")

    def write_paths(self, path: str | Path, comment: str | None = None) -> None:
        if self.per_path is None:
            raise ValueError("per-path costs were not kept")
        idx = np.arange(self.n_paths, dtype=float)[:, None]
        write_table(
            path, ["path_index", "total", "terminal", "purchase", "internal"],
            np.hstack([idx, self.per_path]), comment,
        )


def _path_normals(seed: int, start: int, stop: int, n_steps: int) -> np.ndarray:
    """Shape ``(stop-start, 2, n_steps)``: price and surplus shocks, one substream per path."""
    out = np.empty((stop - start, 2, n_steps))
    for n, i in enumerate(range(start, stop)):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))
        out[n] = rng.standard_normal((2, n_steps))
    return out


def _run_chunk(strategy, params: ModelParams, x0, s0, t0, n_steps, normals, track_region):
    p = params
    n = normals.shape[0]
    dth = (p.T - t0) / n_steps
    sq = math.sqrt(dth)
    X = np.full(n, float(x0))
    S = np.full(n, float(s0))
    terminal = np.zeros(n)
    purchase = np.zeros(n)
    internal = np.zeros(n)
    exited = np.zeros(n, bool)
    events = bad = 0

    def buy(theta, disc):
        nonlocal events, bad
        xb = strategy.buy_boundary(S, theta)
        db = np.where(X > xb, X - xb, 0.0)
        hit = db > 0.0
        if hit.any():
            events += int(np.count_nonzero(hit))
            if track_region:
                vv = strategy.v_at(X[hit], S[hit], theta)
                bad += int(np.count_nonzero(np.asarray(vv) < BUY_REGION_LEVEL))
        purchase[:] += disc * S * db
        X[:] -= db

    buy(t0, 1.0)
    drift = (p.mu - 0.5 * p.sigma**2) * dth
    for k in range(n_steps):
        theta = t0 + k * dth
        disc = math.exp(-p.r * (theta - t0))
        a, flag = strategy.rate(X, S, theta, return_flag=True)
        exited |= np.asarray(flag, bool)
        internal += disc * 0.5 * p.m * a * a * dth
        S = S * np.exp(drift + p.sigma * sq * normals[:, 0, k])
        X = X - a * dth + p.nu * sq * normals[:, 1, k]
        theta1 = t0 + (k + 1) * dth
        buy(theta1, math.exp(-p.r * (theta1 - t0)))
    terminal += np.maximum(X, 0.0) * S * math.exp(-p.r * (p.T - t0))
    return np.column_stack([terminal, purchase, internal]), exited, events, bad


def simulate_paths(
    strategy,
    params: ModelParams,
    x0: float,
    s0: float,
    t0: float = 0.0,
    n_paths: int = 10_000,
    n_steps: int = 400,
    seed: int = 0,
    keep_paths: bool = False,
) -> SimReport:
    """Replay ``strategy`` (a :class:`Policy` or :class:`FixedStrategy`) from ``(x0, s0, t0)``.

    Path ``i`` draws its shocks from ``SeedSequence(seed, spawn_key=(i,))``,
    so results do not depend on chunking and strategies run with the same
    seed share their random numbers.
    """
    if n_paths < 1 or n_steps < 1:
        raise InvalidCounts(f"need n_paths >= 1 and n_steps >= 1, got {n_paths}, {n_steps}")
    if not s0 > 0.0:
        raise NonpositivePrice(f"initial price must be positive, got {s0}")
    if not 0.0 <= t0 < params.T:
        raise ValueError(f"start time {t0} outside [0, T)")
    track = isinstance(strategy, Policy)
    parts, exits = [], []
    events = bad = 0
    for start in range(0, n_paths, CHUNK):
        stop = min(start + CHUNK, n_paths)
        normals = _path_normals(seed, start, stop, n_steps)
        costs, ex, ev, bd = _run_chunk(strategy, params, x0, s0, t0, n_steps, normals, track)
        parts.append(costs)
        exits.append(ex)
        events += ev
        bad += bd
    comp = np.vstack(parts)
    total = comp.sum(axis=1)
    means = comp.mean(axis=0)
    mean = float(total.mean())
    stderr = float(total.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else float("inf")
    per_path = np.column_stack([total, comp]) if keep_paths else None
    return SimReport(
        strategy=getattr(strategy, "name", type(strategy).__name__),
        n_paths=n_paths, n_steps=n_steps, seed=int(seed),
        x0=float(x0), s0=float(s0), t0=float(t0),
        mean_cost=mean, stderr=stderr,
        terminal=float(means[0]), purchase=float(means[1]), internal=float(means[2]),
        exit_fraction=float(np.concatenate(exits).mean()),
        purchase_events=events, purchases_outside_buy_region=bad,
        per_path=per_path if keep_paths else None,
    )


@dataclass(frozen=True)
class ValueCheck:
    x0: float
    s0: float
    t0: float
    phi: float
    mean_cost: float
    stderr: float
    difference: float
    tolerance: float
    status: str                       # PASS, FAIL or INCONCLUSIVE

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    def line(self) -> str:
        return (
            f"verify x0={self.x0:.6g} s0={self.s0:.6g} t0={self.t0:.6g} phi={self.phi:.15g} "
            f"mc={self.mean_cost:.15g} stderr={self.stderr:.6g} diff={self.difference:.6g} "
            f"tol={self.tolerance:.6g} status={self.status}"
        )


def phi_at(phi: ValueSurface, x0: float, s0: float, t0: float) -> float:
    if phi.kind != "phi":
        raise MissingSurface(f"expected a kind-'phi' surface, got {phi.kind!r}")
    return float(interpolate(phi, x0, math.log(s0), phi.grid.spec.T - t0))


def verify_value(
    report: SimReport,
    phi: ValueSurface,
    x0: float,
    s0: float,
    t0: float = 0.0,
    rel_tol: float = 0.02,
) -> ValueCheck:
    """Compare the replayed mean cost with the value surface.

    PASS when ``|mc - phi| <= max(3 stderr, rel_tol * phi)``. With too few
    paths, or a standard error too coarse to resolve the value (``3 stderr``
    above half of ``max(phi, 0.01 s0)``), the verdict is INCONCLUSIVE. Runs
    whose paths leave the box too often fail.
    """
    val = phi_at(phi, x0, s0, t0)
    diff = abs(report.mean_cost - val)
    tol = max(3.0 * report.stderr, rel_tol * val)
    if report.n_paths < MIN_PATHS_FOR_VERDICT or 3.0 * report.stderr > 0.5 * max(val, 0.01 * s0):
        status = "INCONCLUSIVE"
    elif not report.valid:
        status = "FAIL"
    else:
        status = "PASS" if diff <= tol else "FAIL"
    return ValueCheck(x0, s0, t0, val, report.mean_cost, report.stderr, diff, tol, status)


@dataclass(frozen=True)
class DominanceRow:
    x0: float
    s0: float
    alternative: str
    policy_mean: float
    alternative_mean: float
    combined_stderr: float
    paired_stderr: float

    @property
    def margin(self) -> float:
        return self.alternative_mean - self.policy_mean

    @property
    def holds(self) -> bool:
        """Policy no worse than the alternative beyond noise."""
        return self.policy_mean <= self.alternative_mean + 3.0 * self.combined_stderr

    @property
    def strict(self) -> bool:
        """Policy better by more than three combined standard errors."""
        return self.margin > 3.0 * self.combined_stderr

    def line(self) -> str:
        return (
            f"dominance x0={self.x0:.6g} s0={self.s0:.6g} alternative={self.alternative} "
            f"policy={self.policy_mean:.15g} alt={self.alternative_mean:.15g} "
            f"margin={self.margin:.6g} combined_stderr={self.combined_stderr:.6g} "
            f"paired_stderr={self.paired_stderr:.6g} holds={self.holds} strict={self.strict}"
        )


def strategy_dominance(
    points,
    strategies,
    policy: Policy,
    n_paths: int = 10_000,
    n_steps: int = 400,
    seed: int = 0,
    t0: float = 0.0,
) -> list[DominanceRow]:
    """Policy against each alternative at each point, under common random numbers.

    ``combined_stderr`` is ``sqrt(se_policy^2 + se_alt^2)``; the tighter
    paired standard error of the per-path differences is reported alongside.
    """
    rows = []
    params = policy.params
    for x0, s0 in points:
        ref = simulate_paths(policy, params, x0, s0, t0, n_paths, n_steps, seed, keep_paths=True)
        for alt in strategies:
            rep = simulate_paths(alt, params, x0, s0, t0, n_paths, n_steps, seed, keep_paths=True)
            d = rep.per_path[:, 0] - ref.per_path[:, 0]
            paired = float(d.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else float("inf")
            rows.append(
                DominanceRow(
                    float(x0), float(s0), rep.strategy, ref.mean_cost, rep.mean_cost,
                    math.hypot(ref.stderr, rep.stderr), paired,
                )
            )
    return rows
