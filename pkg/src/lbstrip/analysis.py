"""Residence-time experiments: obstacle sweeps, L/C/R split, local residence maps.

Only particles entering on the left and leaving on the right ("crossers")
enter the headline statistics.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .density import GridSpec, ScalarField, comment_header
from .geometry import DomainConfig, Rect, validate
from .rng import derive_seed
from .scattering import LEFT, RIGHT, KernelParams
from .transport import BatchResult, RegionDecomposition, TrajectoryOutcome, run_batch

PARAMETERS = ("obstacle_height", "obstacle_width", "obstacle_center_x", "obstacle_side")


@dataclass(frozen=True)
class SweepSpec:
    base_config: DomainConfig
    varied_parameter: str
    values: tuple
    template: Rect = Rect.from_size(2.0, 0.5, 0.8, 0.8)

    def __post_init__(self):
        if self.varied_parameter not in PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.varied_parameter!r}; expected one of {PARAMETERS}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def obstacle(self, value: float) -> Rect:
        t = self.template
        if self.varied_parameter == "obstacle_height":
            return Rect(t.cx, t.cy, t.half_w, value / 2.0)
        if self.varied_parameter == "obstacle_width":
            return Rect(t.cx, t.cy, value / 2.0, t.half_h)
        if self.varied_parameter == "obstacle_center_x":
            return Rect(value, t.cy, t.half_w, t.half_h)
        return Rect(t.cx, t.cy, value / 2.0, value / 2.0)

    def config(self, value: float) -> DomainConfig:
        return self.base_config.with_obstacles([self.obstacle(value)])

    def check(self) -> None:
        for v in self.values:
            problems = validate(self.config(v))
            if problems:
                raise ValueError(f"sweep value {self.varied_parameter}={v}: " + "; ".join(problems))


@dataclass
class ResidenceRow:
    value: float
    mean_time: float
    stderr: float
    crossers: int
    right_exits: int
    region_times: tuple[float, float, float]
    seed: int
    aborted: int = 0


@dataclass
class ResidenceReport:
    parameter: str
    rows: list
    baseline: ResidenceRow

    def to_csv(self, path, meta: Optional[dict] = None) -> None:
        cols = ["value", "mean_time", "stderr", "crossers", "right_exits", "t_L", "t_C", "t_R", "seed", "aborted"]
        lines = [comment_header(meta), f"# parameter: {self.parameter}\n", ",".join(cols) + "\n"]
        for label, row in [("baseline", self.baseline)] + [(repr(r.value), r) for r in self.rows]:
            vals = [label, repr(row.mean_time), repr(row.stderr), str(row.crossers), str(row.right_exits),
                    *(repr(x) for x in row.region_times), str(row.seed), str(row.aborted)]
            lines.append(",".join(vals) + "\n")
        Path(path).write_text("".join(lines))

    def summary(self) -> str:
        b = self.baseline
        out = [f"residence time vs {self.parameter}",
               f"  empty strip: {b.mean_time:.4f} +- {b.stderr:.4f} ({b.crossers} crossers)"]
        for r in self.rows:
            z = (r.mean_time - b.mean_time) / math.hypot(r.stderr, b.stderr)
            out.append(f"  {r.value:8.4g}: {r.mean_time:.4f} +- {r.stderr:.4f} "
                       f"({r.crossers} crossers, {z:+.1f} sigma vs empty)")
        return "\n".join(out)


def region_times(
    outcomes: Union[BatchResult, Sequence[TrajectoryOutcome]],
    decomposition: RegionDecomposition,
) -> tuple[float, float, float]:
    """Mean ``(t_L, t_C, t_R)`` over left-to-right crossers.

    For a batch run with the same decomposition the per-trajectory sums are
    used directly; otherwise the split is read off the per-column crosser
    times (linear within a partially covered column).
    """
    if isinstance(outcomes, BatchResult):
        n = outcomes.crossers
        if n == 0:
            raise ValueError("no crossing statistics")
        if decomposition == outcomes.decomposition:
            return tuple(float(s / n) for s in outcomes.region_sums())
        col = outcomes.local_time.sum(axis=1)
        h = outcomes.sojourn_grid.spec.cell
        edges = np.concatenate([[0.0], np.cumsum(col)])
        left = float(np.interp(decomposition.x_left / h, np.arange(len(edges)), edges))
        upto_right = float(np.interp(decomposition.x_right / h, np.arange(len(edges)), edges))
        total = float(edges[-1])
        t_l = left / n
        t_r = (total - upto_right) / n
        return t_l, total / n - t_l - t_r, t_r
    cross = [o for o in outcomes if o.entry_side == "left" and o.exit_side == "right"]
    if not cross:
        raise ValueError("no crossing statistics")
    arr = np.array([o.region_times for o in cross])
    return tuple(float(v) for v in arr.mean(axis=0))


def local_residence_map(batch: BatchResult) -> ScalarField:
    """Mean time a crossing particle spends in each cell, over crossers that visit it."""
    n = batch.local_count
    mask = batch.sojourn_grid.obstacle_mask | (n == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(mask, np.nan, batch.local_time / n)
    return ScalarField(batch.sojourn_grid.spec, vals, mask)


def local_residence_stderr(batch: BatchResult) -> ScalarField:
    n = batch.local_count.astype(float)
    mask = batch.sojourn_grid.obstacle_mask | (n < 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = batch.local_time / n
        var = (batch.local_time_sq / n - mean * mean) * n / (n - 1)
        se = np.sqrt(np.maximum(var, 0.0) / n)
    return ScalarField(batch.sojourn_grid.spec, np.where(mask, np.nan, se), mask)


def _row(value: float, batch: BatchResult) -> ResidenceRow:
    return ResidenceRow(
        value=value,
        mean_time=batch.mean_time(LEFT, RIGHT),
        stderr=batch.mean_time_stderr(LEFT, RIGHT),
        crossers=batch.crossers,
        right_exits=batch.right_exits,
        region_times=region_times(batch, batch.decomposition),
        seed=batch.seed,
        aborted=batch.aborted,
    )


def run_sweep(
    spec: SweepSpec,
    params: KernelParams,
    n_particles: int,
    seed: int,
    grid_spec: Optional[GridSpec] = None,
    workers: int = 1,
    progress=None,
) -> ResidenceReport:
    """One batch per sweep value (seed derived from its index) plus an empty-strip baseline.

    The baseline runs with ``seed`` itself, so it equals a standalone
    empty-strip batch with that seed; its L/C/R split uses the template's
    x-extent.
    """
    spec.check()
    base = spec.base_config.with_obstacles([])
    if grid_spec is None:
        grid_spec = GridSpec.for_domain(base, 200, 50)
    template_split = RegionDecomposition.for_domain(base.with_obstacles([spec.template]))
    empty = run_batch(base, params, n_particles, grid_spec, seed, workers=workers, decomposition=template_split)
    baseline = _row(math.nan, empty)
    if progress:
        progress(f"baseline: {baseline.mean_time:.4f} +- {baseline.stderr:.4f}")
    rows = []
    for i, value in enumerate(spec.values):
        cfg = spec.config(value)
        batch = run_batch(cfg, params, n_particles, grid_spec, derive_seed(seed, i), workers=workers)
        rows.append(_row(value, batch))
        if progress:
            progress(f"{spec.varied_parameter}={value}: {rows[-1].mean_time:.4f} +- {rows[-1].stderr:.4f}")
    rows.sort(key=lambda r: r.value)
    return ResidenceReport(spec.varied_parameter, rows, baseline)


def replace_values(spec: SweepSpec, values) -> SweepSpec:
    return dataclasses.replace(spec, values=tuple(values))
