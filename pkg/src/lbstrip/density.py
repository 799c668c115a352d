"""Grids, sojourn-time accumulators and scalar fields on the strip.

Arrays are indexed ``[ix, iy]`` with ``ix`` along the strip (``n_x`` cells)
and ``iy`` across it. Masked cells (fully inside an obstacle) hold NaN in
every field.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import DomainConfig, Rect


@dataclass(frozen=True)
class GridSpec:
    n_x: int
    n_y: int
    length_x: float = 4.0
    length_y: float = 1.0

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError(f"grid needs at least one cell per axis, got {self.n_x} x {self.n_y}")
        hx = self.length_x / self.n_x
        hy = self.length_y / self.n_y
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise ValueError(f"cells must be square: {hx} x {hy}")

    @classmethod
    def for_domain(cls, config: DomainConfig, n_x: int, n_y: int) -> "GridSpec":
        return cls(n_x, n_y, config.length_x, config.length_y)

    @property
    def cell(self) -> float:
        return self.length_x / self.n_x

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_y)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates as two ``(n_x, n_y)`` arrays."""
        h = self.cell
        xs = (np.arange(self.n_x) + 0.5) * h
        ys = (np.arange(self.n_y) + 0.5) * h
        return np.meshgrid(xs, ys, indexing="ij")


def obstacle_coverage(config: DomainConfig, spec: GridSpec, sub: int = 8) -> np.ndarray:
    """Fraction of each cell covered by obstacles, from ``sub x sub`` point sampling."""
    cov = np.zeros(spec.shape)
    if not config.obstacles:
        return cov
    h = spec.cell
    X, Y = spec.centers()
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    for ox in offs:
        for oy in offs:
            cov += config.inside_obstacle(X + ox * h, Y + oy * h)
    return cov / (sub * sub)


def obstacle_mask(config: DomainConfig, spec: GridSpec) -> np.ndarray:
    return obstacle_coverage(config, spec) >= 1.0


def straddle_cells(config: DomainConfig, spec: GridSpec) -> np.ndarray:
    """Cells cut by an obstacle boundary; unmasked but with biased sojourn estimates."""
    cov = obstacle_coverage(config, spec)
    return (cov > 0.0) & (cov < 1.0)


def dilate(mask: np.ndarray, cells: int = 1) -> np.ndarray:
    out = mask.copy()
    for _ in range(cells):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        out = grown
    return out


@dataclass
class SojournGrid:
    spec: GridSpec
    time_sum: np.ndarray
    obstacle_mask: np.ndarray

    @classmethod
    def empty(cls, config: DomainConfig, spec: GridSpec) -> "SojournGrid":
        return cls(spec, np.zeros(spec.shape), obstacle_mask(config, spec))

    @property
    def total_time(self) -> float:
        return float(self.time_sum.sum())


@dataclass
class ScalarField:
    spec: GridSpec
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != self.spec.shape or self.mask.shape != self.spec.shape:
            raise ValueError(f"field arrays must have shape {self.spec.shape}")

    @classmethod
    def from_function(cls, spec: GridSpec, fn, mask: Optional[np.ndarray] = None) -> "ScalarField":
        if mask is None:
            mask = np.zeros(spec.shape, dtype=bool)
        X, Y = spec.centers()
        values = np.where(mask, np.nan, fn(X, Y) + 0.0 * X)
        return cls(spec, values, mask)

    def masked_values(self) -> np.ndarray:
        return np.where(self.mask, np.nan, self.values)


NORMALIZATIONS = ("column", "cell", "extrapolate")


def _extrapolated_left_value(grid: SojournGrid, config: DomainConfig, skip: int, n_fit: int) -> float:
    # column means of an obstacle-free stretch are linear in x for the limit
    # problem; fit them away from the injection boundary layer
    spec = grid.spec
    h = spec.cell
    x_block = min((ob.bounds[0] for ob in config.obstacles), default=spec.length_x / 2.0)
    cols = [i for i in range(skip, skip + n_fit) if (i + 1) * h <= x_block - h]
    if len(cols) < 3:
        raise ValueError("too few obstacle-free columns next to the left side to extrapolate")
    xs = (np.array(cols) + 0.5) * h
    means = grid.time_sum[cols].mean(axis=1)
    slope, intercept = np.polyfit(xs, means, 1)
    return float(intercept)


def normalize(
    grid: SojournGrid,
    config: DomainConfig,
    mode: str = "column",
    skip: int = 3,
    n_fit: int = 25,
) -> ScalarField:
    """Scale sojourn times into a density whose left boundary value is ``rho_left``.

    ``mode="column"`` matches the mean of the leftmost cell column,
    ``mode="cell"`` matches the single middle cell of that column, and
    ``mode="extrapolate"`` matches the value at ``x = 0`` of a straight line
    fitted to the column means of columns ``skip .. skip + n_fit - 1``
    (obstacle-free ones only).
    """
    if mode == "column":
        left = grid.time_sum[0][~grid.obstacle_mask[0]]
        ref = float(left.mean()) if left.size else 0.0
    elif mode == "cell":
        j = grid.spec.n_y // 2
        ref = 0.0 if grid.obstacle_mask[0, j] else float(grid.time_sum[0, j])
    elif mode == "extrapolate":
        ref = _extrapolated_left_value(grid, config, skip, n_fit)
    else:
        raise ValueError(f"unknown normalization mode {mode!r}; expected one of {NORMALIZATIONS}")
    if not ref > 0:
        raise ValueError("insufficient statistics for normalization")
    c = config.rho_left / ref
    values = np.where(grid.obstacle_mask, np.nan, c * grid.time_sum)
    return ScalarField(grid.spec, values, grid.obstacle_mask.copy())


def corner_distance(config: DomainConfig, spec: GridSpec) -> np.ndarray:
    """Chebyshev distance, in cells, from each cell to the nearest obstacle corner."""
    h = spec.cell
    i = np.arange(spec.n_x)[:, None]
    j = np.arange(spec.n_y)[None, :]
    best = np.full(spec.shape, np.inf)
    for ob in config.obstacles:
        if not isinstance(ob, Rect):
            continue
        x0, x1, y0, y1 = ob.bounds
        # snap round-off so corners on grid lines give exact distances
        gx = [round(v, 9) for v in (x0 / h, x1 / h)]
        gy = [round(v, 9) for v in (y0 / h, y1 / h)]
        for cx in gx:
            for cy in gy:
                dx = np.maximum(0.0, np.maximum(i - cx, cx - (i + 1)))
                dy = np.maximum(0.0, np.maximum(j - cy, cy - (j + 1)))
                best = np.minimum(best, np.maximum(dx, dy))
    return best


def relative_error(field: ScalarField, reference: ScalarField) -> ScalarField:
    if field.spec != reference.spec:
        raise ValueError(f"grid mismatch: {field.spec} vs {reference.spec}")
    mask = field.mask | reference.mask
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.abs(field.values - reference.values) / np.abs(reference.values)
    return ScalarField(field.spec, np.where(mask, np.nan, err), mask)


def column_average(field: ScalarField) -> np.ndarray:
    """Mean over unmasked cells of each column; NaN for fully masked columns."""
    vals = np.where(field.mask, 0.0, field.values)
    counts = (~field.mask).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = vals.sum(axis=1) / counts
    out[counts == 0] = np.nan
    return out


def error_summary(err: ScalarField, exclude: Optional[np.ndarray] = None) -> dict:
    vals = err.masked_values()
    if exclude is not None:
        vals = np.where(exclude, np.nan, vals)
    return {"max": float(np.nanmax(vals)), "mean": float(np.nanmean(vals))}


# --- CSV -----------------------------------------------------------------


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else repr(float(x))


def comment_header(meta: Optional[dict]) -> str:
    if not meta:
        return ""
    return "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n" for k, v in meta.items())


def write_field_csv(path, field: ScalarField, meta: Optional[dict] = None) -> None:
    """Row per x-column of cells (``n_x`` rows of ``n_y`` values); masked cells as ``nan``."""
    s = field.spec
    lines = [comment_header(meta), "nx,ny,Lx,Ly\n", f"{s.n_x},{s.n_y},{_fmt(s.length_x)},{_fmt(s.length_y)}\n"]
    vals = field.masked_values()
    for row in vals:
        lines.append(",".join(_fmt(v) for v in row) + "\n")
    Path(path).write_text("".join(lines))


def read_field_csv(path) -> ScalarField:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if rows[0].strip() != "nx,ny,Lx,Ly":
        raise ValueError(f"{path}: missing field header")
    nx, ny, lx, ly = rows[1].split(",")
    spec = GridSpec(int(nx), int(ny), float(lx), float(ly))
    values = np.array([[float(v) for v in r.split(",")] for r in rows[2:]])
    return ScalarField(spec, values, np.isnan(values))
