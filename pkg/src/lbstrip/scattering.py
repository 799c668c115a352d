"""Velocity-jump collision kernel and the sampling laws of the simulator.

A collision is an elastic bounce off a unit hard disk hit with impact
parameter ``delta`` uniform on [-1, 1]. With ``alpha = arcsin|delta|`` the
velocity turns by ``pi - 2 alpha``; positive ``delta`` turns it
counterclockwise. Particles move at unit speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import DomainConfig
from .rng import RngStream

LEFT = 0
RIGHT = 1
SIDE_NAMES = ("left", "right")


@dataclass(frozen=True)
class KernelParams:
    """``mean_flight_time`` may be ``math.inf`` to switch scattering off."""

    mean_flight_time: float

    def __post_init__(self):
        if not self.mean_flight_time > 0:
            raise ValueError(f"mean_flight_time must be positive, got {self.mean_flight_time}")


@njit(cache=True, error_model="numpy")
def scatter_nb(vx, vy, delta):
    # rotation by pi - 2 asin|delta|, signed by delta:
    # cos = 2 delta^2 - 1, sin = 2 delta sqrt(1 - delta^2)
    c = 2.0 * delta * delta - 1.0
    s = 2.0 * delta * math.sqrt(max(1.0 - delta * delta, 0.0))
    return c * vx - s * vy, s * vx + c * vy


@njit(cache=True, error_model="numpy")
def flight_time_nb(u, mean_flight_time):
    return -mean_flight_time * math.log(u)


@njit(cache=True, error_model="numpy")
def entry_nb(u_side, u_pos, u_angle, lx, ly, rho_left, rho_right):
    """Injection state ``(side, x, y, vx, vy)`` from three uniforms."""
    theta = math.pi * (u_angle - 0.5)
    y = u_pos * ly
    if u_side * (rho_left + rho_right) < rho_left:
        return LEFT, 0.0, y, math.cos(theta), math.sin(theta)
    return RIGHT, lx, y, -math.cos(theta), math.sin(theta)


@njit(cache=True, error_model="numpy")
def scatter_many(vx, vy, deltas):
    """Scatter one velocity with each impact parameter in ``deltas``; returns an ``(n, 2)`` array."""
    out = np.empty((deltas.shape[0], 2))
    for i in range(deltas.shape[0]):
        out[i, 0], out[i, 1] = scatter_nb(vx, vy, deltas[i])
    return out


def scatter(v, delta: float) -> np.ndarray:
    if abs(delta) > 1.0:
        raise ValueError(f"impact parameter must lie in [-1, 1], got {delta}")
    vx, vy = scatter_nb(float(v[0]), float(v[1]), float(delta))
    return np.array([vx, vy])


def sample_impact(rng: RngStream) -> float:
    return 2.0 * rng.uniform_pair()[0] - 1.0


def sample_impacts(rng: RngStream, n: int) -> np.ndarray:
    return 2.0 * rng.uniforms(n) - 1.0


def sample_flight_time(params: KernelParams, rng: RngStream) -> float:
    return flight_time_nb(rng.uniform_pair()[0], params.mean_flight_time)


def sample_flight_times(params: KernelParams, rng: RngStream, n: int) -> np.ndarray:
    return -params.mean_flight_time * np.log(rng.uniforms(n))


def sample_entry(config: DomainConfig, rng: RngStream) -> tuple[str, np.ndarray, np.ndarray]:
    """Reservoir injection: side by density ratio, uniform height, uniform inward angle.

    Consumes two blocks, the same way the transport kernel does for a fresh stream.
    """
    if not config.rho_left + config.rho_right > 0:
        raise ValueError("rho_left + rho_right must be positive")
    u_side, u_pos = rng.uniform_pair()
    u_angle, _ = rng.uniform_pair()
    side, x, y, vx, vy = entry_nb(
        u_side, u_pos, u_angle, config.length_x, config.length_y, config.rho_left, config.rho_right
    )
    return SIDE_NAMES[side], np.array([x, y]), np.array([vx, vy])


def diffusion_coefficient(params: KernelParams) -> float:
    """Diffusion coefficient of the jump process at unit speed: ``3 t_m / 8``.

    The mean cosine of the deflection is -1/3, so velocity correlations decay
    at rate ``4 / (3 t_m)``; in two dimensions ``D = (1/2) * (3 t_m / 4)``.
    """
    return 0.375 * params.mean_flight_time
