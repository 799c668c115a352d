"""End-to-end pipelines shared by the command line and the acceptance tests."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .density import (
    GridSpec,
    ScalarField,
    column_average,
    corner_distance,
    dilate,
    error_summary,
    normalize,
    relative_error,
    straddle_cells,
)
from .geometry import DomainConfig
from .laplace import SolverSettings, flux_profile, solve
from .scattering import LEFT, RIGHT, KernelParams, diffusion_coefficient
from .transport import BatchResult, MSDResult, fit_diffusion, msd_curve, quasi_free_domain, run_batch


@dataclass
class StationaryResult:
    batch: BatchResult
    density: ScalarField
    oracle: Optional[ScalarField]
    oracle_note: str
    error: Optional[ScalarField]
    summary: dict


def exit_summary(batch: BatchResult) -> dict:
    c = batch.counts
    injected_left = int(c[LEFT].sum())
    return {
        "particles": batch.n_particles,
        "injected_left": injected_left,
        "injected_right": int(c[RIGHT].sum()),
        "left_to_left": int(c[LEFT, LEFT]),
        "left_to_right": int(c[LEFT, RIGHT]),
        "right_to_left": int(c[RIGHT, LEFT]),
        "right_to_right": int(c[RIGHT, RIGHT]),
        "aborted": batch.aborted,
        "crossing_fraction": c[LEFT, RIGHT] / injected_left if injected_left else float("nan"),
    }


def error_report(density: ScalarField, oracle: ScalarField, config: DomainConfig) -> tuple[ScalarField, dict]:
    """Relative error field and its max/mean over several cell selections."""
    err = relative_error(density, oracle)
    spec = density.spec
    near_faces = dilate(err.mask | straddle_cells(config, spec), 1) & ~err.mask
    near_corners = corner_distance(config, spec) < 2
    out = {
        "all_cells": error_summary(err),
        "beyond_2_cells_of_corners": error_summary(err, near_corners),
        "beyond_1_cell_of_obstacles": error_summary(err, near_faces),
    }
    col = column_average(density)
    ref = column_average(oracle)
    with np.errstate(invalid="ignore"):
        out["column_average"] = {
            "max": float(np.nanmax(np.abs(col - ref) / ref)),
            "mean": float(np.nanmean(np.abs(col - ref) / ref)),
        }
    return err, out


def run_stationary(
    config: DomainConfig,
    params: KernelParams,
    grid: GridSpec,
    n_particles: int,
    seed: int,
    workers: int = 1,
    normalization: str = "extrapolate",
    solver: SolverSettings = SolverSettings(),
    batch: Optional[BatchResult] = None,
) -> StationaryResult:
    """Sojourn-time density, Laplace reference and their relative error.

    Pass ``batch`` to reuse an existing simulation of the same setup.
    """
    if batch is None:
        batch = run_batch(config, params, n_particles, grid, seed, workers=workers)
    density = normalize(batch.sojourn_grid, config, normalization)
    summary = {"normalization": normalization, "exits": exit_summary(batch)}
    try:
        oracle = solve(config, grid, solver)
        note = "finite-difference solution on the simulation grid"
    except ValueError as exc:
        oracle, note = None, f"no reference available: {exc}"
    err = None
    if oracle is not None:
        err, summary["relative_error"] = error_report(density, oracle, config)
        if normalization != "column":
            _, alt = error_report(normalize(batch.sojourn_grid, config, "column"), oracle, config)
            summary["relative_error_column_normalization"] = alt
    summary["oracle"] = note
    return StationaryResult(batch, density, oracle, note, err, summary)


@dataclass
class OracleResult:
    field: ScalarField
    flux: np.ndarray

    @property
    def flux_spread(self) -> float:
        f = self.flux[np.isfinite(self.flux)]
        return float((f.max() - f.min()) / abs(f.mean()))


def run_oracle(config: DomainConfig, grid: GridSpec, solver: SolverSettings = SolverSettings()) -> OracleResult:
    field = solve(config, grid, solver)
    return OracleResult(field, flux_profile(field))


@dataclass
class MSDCheck:
    curve: MSDResult
    fitted: float
    expected: float
    t_min: float

    @property
    def relative_deviation(self) -> float:
        return abs(self.fitted - self.expected) / self.expected


def run_msd_check(
    params: KernelParams,
    n_particles: int,
    seed: int,
    t_min_factor: float = 50.0,
    t_max_factor: float = 200.0,
    n_times: int = 40,
) -> MSDCheck:
    """Fit ``D`` from the MSD slope over ``[t_min_factor, t_max_factor] * t_m``.

    The box is large enough that no particle reaches its open sides, so the
    walls never matter: the geometry is effectively free space.
    """
    t_m = params.mean_flight_time
    t_min = t_min_factor * t_m
    t_max = t_max_factor * t_m
    times = np.linspace(t_min / 2.0, t_max, n_times)
    curve = msd_curve(quasi_free_domain(t_max), params, n_particles, times, seed)
    return MSDCheck(curve, fit_diffusion(curve, t_min), diffusion_coefficient(params), t_min)
