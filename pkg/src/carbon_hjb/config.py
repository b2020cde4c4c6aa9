"""Run configuration: UTF-8 ``key = value`` lines, ``#`` comments, dotted sections.

Bare keys (``mu``, ``sigma``, ``nu``, ``r``, ``m``, ``T``) are model
parameters; every other key lives in a section such as ``grid.nx`` or
``sim.paths``. Missing keys take the defaults below.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from carbon_hjb.errors import ParseError, ValidationError
from carbon_hjb.grid import GridSpec
from carbon_hjb.model import BASELINE, BoundConstants, ModelParams, PenaltyConfig, validate_params
from carbon_hjb.penalty_solver import SolverConfig


@dataclass(frozen=True)
class SimSettings:
    paths: int = 10_000
    steps: int = 400
    seed: int = 0
    points: tuple[tuple[float, float], ...] = ((1.0, 1.0), (0.0, 1.0), (-1.0, 2.0))
    constant_rate: float = 5.0
    rel_tol: float = 0.02

    def __post_init__(self):
        if self.paths < 1 or self.steps < 1:
            raise ValidationError("sim.paths and sim.steps must be >= 1")
        if self.seed < 0:
            raise ValidationError("sim.seed must be nonnegative")
        if any(s <= 0 for _, s in self.points):
            raise ValidationError("sim.points need positive prices")


@dataclass(frozen=True)
class FigureSettings:
    x0_min: float = -3.0
    x0_max: float = 6.0
    x0_n: int = 37
    s0_min: float = 0.2
    s0_max: float = 5.0
    s0_n: int = 25
    probe_x: float = 1.0
    probe_s: float = 1.0
    m: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    nu: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7)
    mu: tuple[float, ...] = (0.04, 0.045, 0.05, 0.055, 0.06)
    sigma: tuple[float, ...] = (0.1, 0.15, 0.2, 0.25, 0.3)

    def __post_init__(self):
        if self.x0_n < 2 or self.s0_n < 2:
            raise ValidationError("figure meshes need at least two points per axis")
        if not 0 < self.s0_min < self.s0_max or not self.x0_min < self.x0_max:
            raise ValidationError("figure ranges must be increasing with positive prices")
        if self.probe_s <= 0:
            raise ValidationError("figures.probe_s must be positive")


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams = field(default_factory=ModelParams)
    grid: GridSpec = field(default_factory=GridSpec)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(store_every=4))
    kappa: float | None = None
    a_const: float = 1.0
    sim: SimSettings = field(default_factory=SimSettings)
    figures: FigureSettings = field(default_factory=FigureSettings)
    output_dir: str = "out"
    export_every: int = 100

    @property
    def eps_schedule(self) -> tuple[float, ...]:
        return self.solver.penalty.epsilon_schedule

    def consts(self) -> BoundConstants:
        return BoundConstants.from_params(self.params, self.kappa, self.a_const)

    def to_text(self, prefixes: tuple[str, ...] | None = None) -> str:
        """Canonical dump of the resolved keys; parses back to an equal config."""
        lines = [f"{k} = {_fmt(getattr(self.params, k))}" for k in BASELINE]
        for key, (section, attr, _) in _KEYS.items():
            if prefixes is None or key.startswith(prefixes):
                lines.append(f"{key} = {_fmt(_get(self, section, attr))}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        """Digest of everything that shapes the outputs (not where they are written)."""
        keys = tuple(k for k in _KEYS if not k.startswith("output.dir"))
        return _digest(self.to_text(keys))

    def solve_hash(self) -> str:
        """Digest of the settings the PDE surfaces depend on."""
        return _digest(self.to_text(SOLVE_PREFIXES))


SOLVE_PREFIXES = ("grid.", "solver.", "bounds.", "output.export_every")


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _floats(text: str) -> tuple[float, ...]:
    vals = tuple(float(t) for t in text.split(",") if t.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _points(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in text.split(";"):
        if not item.strip():
            continue
        x, s = item.split(":")
        out.append((float(x), float(s)))
    if not out:
        raise ValueError("empty point list")
    return tuple(out)


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "default") else float(text)


# dotted key -> (section, attribute, converter)
_KEYS = {
    "grid.x_min": ("grid", "x_min", float),
    "grid.x_max": ("grid", "x_max", float),
    "grid.y_min": ("grid", "y_min", float),
    "grid.y_max": ("grid", "y_max", float),
    "grid.nx": ("grid", "nx", int),
    "grid.ny": ("grid", "ny", int),
    "grid.nt": ("grid", "nt", int),
    "solver.eps": ("penalty", "epsilon_schedule", _floats),
    "solver.newton_tol": ("solver", "newton_tol", float),
    "solver.newton_max_iter": ("solver", "newton_max_iter", int),
    "solver.store_every": ("solver", "store_every", int),
    "solver.u_refine": ("solver", "u_refine", int),
    "bounds.kappa": ("top", "kappa", _opt_float),
    "bounds.a": ("top", "a_const", float),
    "sim.paths": ("sim", "paths", int),
    "sim.steps": ("sim", "steps", int),
    "sim.seed": ("sim", "seed", int),
    "sim.points": ("sim", "points", _points),
    "sim.constant_rate": ("sim", "constant_rate", float),
    "sim.rel_tol": ("sim", "rel_tol", float),
    "figures.x0_min": ("figures", "x0_min", float),
    "figures.x0_max": ("figures", "x0_max", float),
    "figures.x0_n": ("figures", "x0_n", int),
    "figures.s0_min": ("figures", "s0_min", float),
    "figures.s0_max": ("figures", "s0_max", float),
    "figures.s0_n": ("figures", "s0_n", int),
    "figures.probe_x": ("figures", "probe_x", float),
    "figures.probe_s": ("figures", "probe_s", float),
    "figures.m": ("figures", "m", _floats),
    "figures.nu": ("figures", "nu", _floats),
    "figures.mu": ("figures", "mu", _floats),
    "figures.sigma": ("figures", "sigma", _floats),
    "output.dir": ("top", "output_dir", str),
    "output.export_every": ("top", "export_every", int),
}


def _get(cfg: RunConfig, section: str, attr: str):
    if section == "top":
        return getattr(cfg, attr)
    if section == "penalty":
        return getattr(cfg.solver.penalty, attr)
    return getattr(getattr(cfg, section), attr)


def _fmt(val) -> str:
    if val is None:
        return "none"
    if isinstance(val, tuple):
        if val and isinstance(val[0], tuple):
            return ";".join(f"{_fmt(x)}:{_fmt(s)}" for x, s in val)
        return ",".join(_fmt(v) for v in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def parse_config(text: str) -> RunConfig:
    """Parse a config document; unknown or malformed keys raise :class:`ParseError`."""
    params: dict[str, float] = {}
    sections: dict[str, dict] = {"grid": {}, "solver": {}, "penalty": {}, "top": {}, "sim": {}, "figures": {}}
    seen: set[str] = set()
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(n, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ParseError(n, f"duplicate key {key!r}")
        seen.add(key)
        if key in BASELINE:
            try:
                params[key] = float(value)
            except ValueError:
                raise ParseError(n, f"{key} expects a number, got {value!r}") from None
            continue
        if key not in _KEYS:
            raise ParseError(n, f"unknown key {key!r}")
        section, attr, conv = _KEYS[key]
        try:
            sections[section][attr] = conv(value)
        except ValueError:
            raise ParseError(n, f"{key}: cannot parse {value!r}") from None
    p = validate_params(params)
    grid = GridSpec(**{**sections["grid"], "T": p.T})
    grid.validate()
    pen = PenaltyConfig(epsilon=min(sections["penalty"].get("epsilon_schedule", (0.01,))),
                        **sections["penalty"])
    try:
        solver = SolverConfig(penalty=pen, **{"store_every": 4, **sections["solver"]})
        sim = SimSettings(**sections["sim"])
        figures = FigureSettings(**sections["figures"])
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc)) from None
    top = sections["top"]
    if top.get("export_every", 1) < 1:
        raise ValidationError("output.export_every must be >= 1")
    cfg = RunConfig(params=p, grid=grid, solver=solver, sim=sim, figures=figures, **top)
    cfg.consts()                                 # validates kappa and a
    for name in ("m", "nu", "mu", "sigma"):
        for val in getattr(figures, name):
            p.replace(**{name: val})
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return parse_config("")
    return parse_config(Path(path).read_text(encoding="utf-8"))


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(cfg, **changes)
