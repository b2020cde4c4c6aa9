"""Truncated computational box in (x, y = log s, t = T - theta)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from carbon_hjb.errors import EmptySurface, InvalidSpec, SliceNotStored
from carbon_hjb.model import BoundConstants, ModelParams

SURFACE_KINDS = ("v", "u", "phi")


class ContainmentWarning(UserWarning):
    """The free boundary may leave the truncated box."""


@dataclass(frozen=True)
class GridSpec:
    """Box and node counts. The default x-range keeps dx = 0.05 and is wide
    enough that the free boundary stays inside for ``y <= 2`` and ``T = 1``
    under the baseline parameters (it reaches x ~ 24.5 at y = 2)."""

    x_min: float = -3.0
    x_max: float = 27.0
    y_min: float = -2.0
    y_max: float = 2.0
    nx: int = 601
    ny: int = 81
    nt: int = 400
    T: float = 1.0

    def validate(self) -> None:
        if not (self.x_min < 0.0 < self.x_max):
            raise InvalidSpec(f"need x_min < 0 < x_max, got [{self.x_min}, {self.x_max}]")
        if not self.y_min < self.y_max:
            raise InvalidSpec(f"need y_min < y_max, got [{self.y_min}, {self.y_max}]")
        if self.nx < 3 or self.ny < 3:
            raise InvalidSpec(f"need nx, ny >= 3, got nx={self.nx}, ny={self.ny}")
        if self.nt < 1:
            raise InvalidSpec(f"need nt >= 1, got {self.nt}")
        if not self.T > 0.0:
            raise InvalidSpec(f"need T > 0, got {self.T}")

    def refined(self, factor: int = 2, refine_y: bool = False) -> "GridSpec":
        """Same box with ``factor`` times finer x and t spacing."""
        ny = (self.ny - 1) * factor + 1 if refine_y else self.ny
        return GridSpec(
            self.x_min, self.x_max, self.y_min, self.y_max,
            (self.nx - 1) * factor + 1, ny, self.nt * factor, self.T,
        )


def containment_bound(y_max: float, T: float, consts: BoundConstants) -> float:
    """Largest x the free boundary can reach on ``y <= y_max``, ``t <= T``."""
    return 3.0 * (consts.a_const + math.exp(y_max)) / consts.delta * math.exp(consts.kappa * T)


@dataclass(frozen=True, eq=False)
class Grid:
    spec: GridSpec
    x_nodes: np.ndarray
    y_nodes: np.ndarray
    t_nodes: np.ndarray
    containment_ok: bool = True

    @property
    def dx(self) -> float:
        return (self.spec.x_max - self.spec.x_min) / (self.spec.nx - 1)

    @property
    def dy(self) -> float:
        return (self.spec.y_max - self.spec.y_min) / (self.spec.ny - 1)

    @property
    def dt(self) -> float:
        return self.spec.T / self.spec.nt

    @property
    def shape(self) -> tuple[int, int]:
        return self.spec.nx, self.spec.ny

    def same_as(self, other: "Grid") -> bool:
        return self.spec == other.spec


def build_grid(
    spec: GridSpec,
    params: ModelParams | None = None,
    consts: BoundConstants | None = None,
) -> Grid:
    """Uniform tensor mesh; warns when the box may not contain the free boundary."""
    spec.validate()
    x = np.linspace(spec.x_min, spec.x_max, spec.nx)
    y = np.linspace(spec.y_min, spec.y_max, spec.ny)
    t = np.linspace(0.0, spec.T, spec.nt + 1)
    ok = True
    if params is not None:
        consts = consts or BoundConstants.from_params(params)
        bound = containment_bound(spec.y_max, spec.T, consts)
        if spec.x_max < bound:
            ok = False
            warnings.warn(
                f"x_max={spec.x_max} below containment bound {bound:.4g}; "
                "the free boundary may exit the box",
                ContainmentWarning,
                stacklevel=2,
            )
    return Grid(spec=spec, x_nodes=x, y_nodes=y, t_nodes=t, containment_ok=ok)


def to_physical(x, y, t, T: float):
    """(x, y, t) -> (x, s = e^y, theta = T - t)."""
    return x, np.exp(y), T - np.asarray(t)


def from_physical(x, s, theta, T: float):
    return x, np.log(s), T - np.asarray(theta)


@dataclass(eq=False)
class ValueSurface:
    """Node field of shape ``(n_slices, nx, ny)`` at grid time indices ``t_index``."""

    grid: Grid
    kind: str
    data: np.ndarray
    t_index: np.ndarray
    eps: float | None = None
    clip_count: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}")
        self.t_index = np.asarray(self.t_index, dtype=int)
        if self.data.ndim != 3 or self.data.shape[1:] != self.grid.shape:
            raise ValueError(f"data shape {self.data.shape} does not match grid {self.grid.shape}")
        if self.data.shape[0] != len(self.t_index):
            raise ValueError("one stored time index per slice required")

    @property
    def t_values(self) -> np.ndarray:
        return self.grid.t_nodes[self.t_index]

    def slice_at(self, t_index: int) -> np.ndarray:
        hits = np.nonzero(self.t_index == t_index)[0]
        if len(hits) == 0:
            raise SliceNotStored(f"time index {t_index} not stored")
        return self.data[hits[0]]

    def final(self) -> np.ndarray:
        return self.data[-1]


def _locate(nodes: np.ndarray, q: np.ndarray):
    """Cell index and weight for uniform or sorted nodes, with clamp flag."""
    lo, hi = nodes[0], nodes[-1]
    outside = (q < lo) | (q > hi)
    qc = np.clip(q, lo, hi)
    if len(nodes) == 1:
        return np.zeros(q.shape, int), np.zeros(q.shape), outside
    idx = np.searchsorted(nodes, qc, side="right") - 1
    idx = np.clip(idx, 0, len(nodes) - 2)
    w = (qc - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    return idx, w, outside


def interpolate(surface: ValueSurface, x, y, t, return_flag: bool = False):
    """Trilinear interpolation over (x, y, stored t).

    Queries outside the box are clamped to the nearest face; for ``kind='v'``
    an x beyond the box returns the asymptotic value (0 left, 1 right).
    """
    if surface.data.size == 0:
        raise EmptySurface("surface has no stored slices")
    x, y, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, t)))
    g = surface.grid
    ix, wx, ox = _locate(g.x_nodes, x)
    iy, wy, oy = _locate(g.y_nodes, y)
    it, wt, ot = _locate(surface.t_values, t)
    d = surface.data
    ns = d.shape[0]
    it1 = np.minimum(it + 1, ns - 1)

    def plane(k):
        c00 = d[k, ix, iy] * (1 - wx) + d[k, ix + 1, iy] * wx
        c01 = d[k, ix, iy + 1] * (1 - wx) + d[k, ix + 1, iy + 1] * wx
        return c00 * (1 - wy) + c01 * wy

    val = plane(it) * (1 - wt) + plane(it1) * wt
    if surface.kind == "v":
        val = np.where(x < g.x_nodes[0], 0.0, np.where(x > g.x_nodes[-1], 1.0, val))
    flag = ox | oy | ot
    if val.ndim == 0:
        val, flag = float(val), bool(flag)
    return (val, flag) if return_flag else val


def write_surface(surface: ValueSurface, path: str | Path, comment: str | None = None) -> None:
    """Comma-separated export: ``x,y,t,value`` per node, 15 significant digits."""
    g = surface.grid
    X, Y = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
    blocks = []
    for k, tv in enumerate(surface.t_values):
        blocks.append(
            np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, tv), surface.data[k].ravel()])
        )
    table = np.vstack(blocks)
    write_table(path, ["x", "y", "t", "value"], table, comment)


def write_table(path, columns, table, comment: str | None = None) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(columns) + "\n")
        np.savetxt(fh, np.atleast_2d(table), fmt="%.15g", delimiter=",")


def read_surface(path: str | Path, grid: Grid, kind: str, eps: float | None = None) -> ValueSurface:
    """Inverse of :func:`write_surface` on a known grid."""
    table = read_table(path)[1]
    nx, ny = grid.shape
    per_slice = nx * ny
    if table.shape[0] == 0 or table.shape[0] % per_slice:
        raise EmptySurface(f"{path}: {table.shape[0]} rows do not tile a {nx}x{ny} grid")
    n_slices = table.shape[0] // per_slice
    data = table[:, 3].reshape(n_slices, nx, ny)
    t_vals = table[::per_slice, 2]
    t_index = np.rint(t_vals / grid.dt).astype(int)
    return ValueSurface(grid, kind, data, t_index, eps=eps)


def read_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a table written by :func:`write_table`; returns (columns, rows)."""
    with open(path, encoding="utf-8") as fh:
        line = fh.readline()
        while line.startswith("#"):
            line = fh.readline()
        columns = line.strip().split(",")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    return columns, rows
