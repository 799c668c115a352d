"""Finite-difference reference solution of the mixed Laplace problem.

Unknowns live at cell centers of the same square grid used for sojourn
times. Open sides carry Dirichlet data through ghost cells
(``ghost = 2 rho_b - u``); walls and obstacle faces are mirrored, which
drops the face from the 5-point stencil. Obstacles must be rectangles
whose edges fall on grid lines.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .density import GridSpec, ScalarField
from .geometry import DomainConfig, Rect


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-8
    max_iterations: int = 10**6
    relaxation: float = 1.9
    # largest allowed distance, in cells, between an obstacle edge and a grid line
    snap_tolerance: float = 0.25

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.relaxation < 2:
            raise ValueError("relaxation must lie in (0, 2)")


def grid_mask(config: DomainConfig, spec: GridSpec, snap_tolerance: float = 0.25) -> np.ndarray:
    """Cells covered by obstacles after snapping their edges to grid lines."""
    mask = np.zeros(spec.shape, dtype=bool)
    h = spec.cell
    for k, ob in enumerate(config.obstacles):
        if not isinstance(ob, Rect):
            raise ValueError(f"obstacle {k}: only rectangles are supported by the Laplace solver")
        edges = np.array(ob.bounds) / h
        snapped = np.rint(edges)
        off = np.abs(edges - snapped).max()
        if off > snap_tolerance:
            raise ValueError(
                f"obstacle {k} is not aligned to the {spec.n_x}x{spec.n_y} grid "
                f"(edge off by {off:.3f} cells); refine the grid so its edges fall on cell boundaries"
            )
        i0, i1, j0, j1 = snapped.astype(int)
        if i1 <= i0 or j1 <= j0:
            raise ValueError(f"obstacle {k} is thinner than one cell; refine the grid")
        mask[i0:i1, j0:j1] = True
    return mask


@njit(cache=True)
def _sweep(u, mask, rho_l, rho_r, omega):
    nx, ny = u.shape
    for i in range(nx):
        for j in range(ny):
            if mask[i, j]:
                continue
            s = 0.0
            w = 0.0
            if i == 0:
                s += 2.0 * rho_l
                w += 2.0
            elif not mask[i - 1, j]:
                s += u[i - 1, j]
                w += 1.0
            if i == nx - 1:
                s += 2.0 * rho_r
                w += 2.0
            elif not mask[i + 1, j]:
                s += u[i + 1, j]
                w += 1.0
            if j > 0 and not mask[i, j - 1]:
                s += u[i, j - 1]
                w += 1.0
            if j < ny - 1 and not mask[i, j + 1]:
                s += u[i, j + 1]
                w += 1.0
            u[i, j] += omega * (s / w - u[i, j])


@njit(cache=True)
def _residual(u, mask, rho_l, rho_r):
    """Max over free cells of the 5-point stencil residual, without the 1/h^2 factor."""
    nx, ny = u.shape
    worst = 0.0
    for i in range(nx):
        for j in range(ny):
            if mask[i, j]:
                continue
            r = 0.0
            c = u[i, j]
            if i == 0:
                r += 2.0 * (rho_l - c)
            elif not mask[i - 1, j]:
                r += u[i - 1, j] - c
            if i == nx - 1:
                r += 2.0 * (rho_r - c)
            elif not mask[i + 1, j]:
                r += u[i + 1, j] - c
            if j > 0 and not mask[i, j - 1]:
                r += u[i, j - 1] - c
            if j < ny - 1 and not mask[i, j + 1]:
                r += u[i, j + 1] - c
            worst = max(worst, abs(r))
    return worst


@njit(cache=True)
def _solve(u, mask, rho_l, rho_r, omega, tol_scaled, max_iter, check_every):
    it = 0
    res = _residual(u, mask, rho_l, rho_r)
    while it < max_iter:
        _sweep(u, mask, rho_l, rho_r, omega)
        it += 1
        if it % check_every == 0:
            res = _residual(u, mask, rho_l, rho_r)
            if res < tol_scaled:
                break
    return it, res


def solve(config: DomainConfig, spec: GridSpec, settings: SolverSettings = SolverSettings()) -> ScalarField:
    """Cell-centered solution; converged when ``max |Laplacian| < settings.tolerance``."""
    mask = grid_mask(config, spec, settings.snap_tolerance)
    X, _ = spec.centers()
    rl, rr = config.rho_left, config.rho_right
    u = rl + (rr - rl) * X / spec.length_x
    u[mask] = 0.0
    h2 = spec.cell**2
    it, res = _solve(u, mask, rl, rr, settings.relaxation, settings.tolerance * h2, settings.max_iterations, 10)
    if not res < settings.tolerance * h2:
        raise ConvergenceError(
            f"SOR did not converge in {it} sweeps (residual {res / h2:.3e})", res / h2, it
        )
    u[mask] = np.nan
    return ScalarField(spec, u, mask)


def flux_through(field: ScalarField, column_index: int) -> float:
    """Total x-flux ``-int d(rho)/dx dx2`` through a cell column.

    Uses the centered difference on every free cell of the column, with
    mirrored values across obstacle faces, times the cell height.
    """
    nx = field.spec.n_x
    i = column_index
    if not 1 <= i <= nx - 2:
        raise ValueError(f"column {i} is not strictly between the Dirichlet columns")
    free = ~field.mask[i]
    if not free.any():
        raise ValueError(f"column {i} is fully blocked by an obstacle (disconnected cut)")
    u = field.values
    c = u[i]
    left = np.where(field.mask[i - 1], c, u[i - 1])
    right = np.where(field.mask[i + 1], c, u[i + 1])
    grad = (right - left) / (2.0 * field.spec.cell)
    return float(-(grad[free]).sum() * field.spec.cell)


def flux_profile(field: ScalarField) -> np.ndarray:
    """``flux_through`` for every interior column; NaN where the column is blocked."""
    out = np.full(field.spec.n_x, np.nan)
    for i in range(1, field.spec.n_x - 1):
        if (~field.mask[i]).any():
            out[i] = flux_through(field, i)
    return out
