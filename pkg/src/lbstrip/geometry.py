"""Strip-with-obstacles domain: configuration, validation and ray queries.

The strip is ``(0, length_x) x (0, length_y)``. The vertical sides are open
(particles leave through them), the horizontal sides and every obstacle
boundary reflect specularly.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numba import njit

# hit kinds, shared with the numba kernels
NO_HIT = 0
ELASTIC = 1
OPEN_LEFT = 2
OPEN_RIGHT = 3
KIND_NAMES = {ELASTIC: "elastic", OPEN_LEFT: "open_left", OPEN_RIGHT: "open_right"}

RECT = 0
DISK = 1

NUDGE = 1e-12
VALIDATION_GRID = (400, 100)


@dataclass(frozen=True)
class StripSpec:
    length_x: float = 4.0
    length_y: float = 1.0

    def __post_init__(self):
        if not (self.length_x > 0 and self.length_y > 0):
            raise ValueError(f"strip lengths must be positive, got {self.length_x} x {self.length_y}")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by center and half sizes."""

    cx: float
    cy: float
    half_w: float
    half_h: float

    @classmethod
    def from_size(cls, cx: float, cy: float, width: float, height: float) -> "Rect":
        return cls(cx, cy, width / 2.0, height / 2.0)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.cx - self.half_w, self.cx + self.half_w, self.cy - self.half_h, self.cy + self.half_h)

    def contains(self, x, y):
        return (np.abs(x - self.cx) < self.half_w) & (np.abs(y - self.cy) < self.half_h)

    def packed(self) -> list[float]:
        return [RECT, self.cx, self.cy, self.half_w, self.half_h]


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    radius: float

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        r = self.radius
        return (self.cx - r, self.cx + r, self.cy - r, self.cy + r)

    def contains(self, x, y):
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 < self.radius**2

    def packed(self) -> list[float]:
        return [DISK, self.cx, self.cy, self.radius, 0.0]


Obstacle = Union[Rect, Disk]


@dataclass(frozen=True)
class DomainConfig:
    strip: StripSpec = field(default_factory=StripSpec)
    obstacles: tuple = ()
    rho_left: float = 1.0
    rho_right: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    @property
    def length_x(self) -> float:
        return self.strip.length_x

    @property
    def length_y(self) -> float:
        return self.strip.length_y

    def packed_obstacles(self) -> np.ndarray:
        """Obstacles as an ``(n, 5)`` array ``[kind, cx, cy, a, b]`` for the kernels."""
        if not self.obstacles:
            return np.zeros((0, 5), dtype=np.float64)
        return np.array([ob.packed() for ob in self.obstacles], dtype=np.float64)

    def inside_obstacle(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        for ob in self.obstacles:
            inside |= ob.contains(x, y)
        return inside

    def with_obstacles(self, obstacles) -> "DomainConfig":
        return DomainConfig(self.strip, tuple(obstacles), self.rho_left, self.rho_right)


@dataclass(frozen=True)
class BoundaryHit:
    time: float
    point: tuple[float, float]
    inward_normal: tuple[float, float]
    kind: str


def _gap_rect_rect(a: Rect, b: Rect) -> float:
    dx = max(abs(a.cx - b.cx) - a.half_w - b.half_w, 0.0)
    dy = max(abs(a.cy - b.cy) - a.half_h - b.half_h, 0.0)
    return math.hypot(dx, dy)


def _gap_rect_disk(r: Rect, d: Disk) -> float:
    qx = min(max(d.cx, r.cx - r.half_w), r.cx + r.half_w)
    qy = min(max(d.cy, r.cy - r.half_h), r.cy + r.half_h)
    inside = abs(d.cx - r.cx) <= r.half_w and abs(d.cy - r.cy) <= r.half_h
    if inside:
        return 0.0
    return max(math.hypot(d.cx - qx, d.cy - qy) - d.radius, 0.0)


def obstacle_gap(a: Obstacle, b: Obstacle) -> float:
    """Euclidean distance between two obstacles (0 when they touch or overlap)."""
    if isinstance(a, Rect) and isinstance(b, Rect):
        return _gap_rect_rect(a, b)
    if isinstance(a, Disk) and isinstance(b, Disk):
        return max(math.hypot(a.cx - b.cx, a.cy - b.cy) - a.radius - b.radius, 0.0)
    if isinstance(a, Disk):
        a, b = b, a
    return _gap_rect_disk(a, b)


def _flood_connected(config: DomainConfig, nx: int, ny: int) -> bool:
    hx = config.length_x / nx
    hy = config.length_y / ny
    xs = (np.arange(nx) + 0.5) * hx
    ys = (np.arange(ny) + 0.5) * hy
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    free = ~config.inside_obstacle(X, Y)
    n_free = int(free.sum())
    if n_free == 0:
        return False
    start = tuple(np.argwhere(free)[0])
    seen = np.zeros_like(free)
    seen[start] = True
    queue = deque([start])
    count = 1
    while queue:
        i, j = queue.popleft()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a < nx and 0 <= b < ny and free[a, b] and not seen[a, b]:
                seen[a, b] = True
                count += 1
                queue.append((a, b))
    return count == n_free


def validate(config: DomainConfig) -> list[str]:
    """Return a list of human-readable violations (empty when the domain is valid)."""
    problems = []
    if not (config.length_x > 0 and config.length_y > 0):
        problems.append("strip: lengths must be positive")
        return problems
    if config.rho_left < 0 or config.rho_right < 0:
        problems.append("reservoirs: densities must be nonnegative")
    if not config.rho_left + config.rho_right > 0:
        problems.append("reservoirs: rho_left + rho_right must be positive")
    for i, ob in enumerate(config.obstacles):
        if isinstance(ob, Rect):
            if not (ob.half_w > 0 and ob.half_h > 0):
                problems.append(f"obstacle {i}: rectangle must have positive size")
                continue
        elif isinstance(ob, Disk):
            if not ob.radius > 0:
                problems.append(f"obstacle {i}: disk must have positive radius")
                continue
        else:
            problems.append(f"obstacle {i}: unsupported shape {type(ob).__name__}")
            continue
        x0, x1, y0, y1 = ob.bounds
        sides = []
        if x0 <= 0:
            sides.append("left")
        if x1 >= config.length_x:
            sides.append("right")
        if y0 <= 0:
            sides.append("bottom")
        if y1 >= config.length_y:
            sides.append("top")
        if sides:
            problems.append(
                f"obstacle {i}: obstacle touches strip boundary ({', '.join(sides)} side)"
            )
    obs = config.obstacles
    for i in range(len(obs)):
        for j in range(i + 1, len(obs)):
            if isinstance(obs[i], (Rect, Disk)) and isinstance(obs[j], (Rect, Disk)):
                if obstacle_gap(obs[i], obs[j]) <= 0:
                    problems.append(f"obstacles {i} and {j}: obstacles touch or overlap")
    if not problems and obs and not _flood_connected(config, *VALIDATION_GRID):
        problems.append("domain: free region is not connected")
    return problems


def check(config: DomainConfig) -> None:
    problems = validate(config)
    if problems:
        raise ValueError("invalid domain: " + "; ".join(problems))


# --- numba kernels -------------------------------------------------------


@njit(cache=True, error_model="numpy")
def reflect_nb(vx, vy, nx, ny):
    d = 2.0 * (nx * vx + ny * vy)
    return vx - d * nx, vy - d * ny


@njit(cache=True, error_model="numpy")
def _rect_entry(ox, oy, dx, dy, cx, cy, hw, hh):
    """Entry time and outward normal of a ray into a rectangle, or (inf, 0, 0)."""
    inf = np.inf
    x0 = cx - hw
    x1 = cx + hw
    y0 = cy - hh
    y1 = cy + hh
    if dx != 0.0:
        ta = (x0 - ox) / dx
        tb = (x1 - ox) / dx
        if ta < tb:
            txn, txf, fnx = ta, tb, -1.0
        else:
            txn, txf, fnx = tb, ta, 1.0
    else:
        if ox <= x0 or ox >= x1:
            return inf, 0.0, 0.0
        txn, txf, fnx = -inf, inf, 0.0
    if dy != 0.0:
        ta = (y0 - oy) / dy
        tb = (y1 - oy) / dy
        if ta < tb:
            tyn, tyf, fny = ta, tb, -1.0
        else:
            tyn, tyf, fny = tb, ta, 1.0
    else:
        if oy <= y0 or oy >= y1:
            return inf, 0.0, 0.0
        tyn, tyf, fny = -inf, inf, 0.0
    t_in = max(txn, tyn)
    t_out = min(txf, tyf)
    if t_in <= 0.0 or t_in > t_out:
        return inf, 0.0, 0.0
    if txn > tyn:
        return t_in, fnx, 0.0
    if tyn > txn:
        return t_in, 0.0, fny
    # exact corner: send the particle straight back
    return t_in, -dx, -dy


@njit(cache=True, error_model="numpy")
def _disk_entry(ox, oy, dx, dy, cx, cy, r):
    px = ox - cx
    py = oy - cy
    b = px * dx + py * dy
    if b >= 0.0:
        return np.inf, 0.0, 0.0
    c = px * px + py * py - r * r
    disc = b * b - c
    if disc <= 0.0:
        return np.inf, 0.0, 0.0
    t = -b - math.sqrt(disc)
    if t < 0.0:
        t = 0.0
    hx = px + t * dx
    hy = py + t * dy
    norm = math.sqrt(hx * hx + hy * hy)
    return t, hx / norm, hy / norm


@njit(cache=True, error_model="numpy")
def first_hit_nb(ox, oy, dx, dy, max_t, lx, ly, obs):
    """Earliest boundary event along a ray within ``max_t``.

    Returns ``(t, nx, ny, kind)`` with ``n`` the normal pointing into the free
    region; ``kind == NO_HIT`` when the segment stays interior.
    """
    t_best = max_t
    kind = NO_HIT
    bnx = 0.0
    bny = 0.0
    if dy > 0.0:
        t = (ly - oy) / dy
        if t < 0.0:
            t = 0.0
        if t <= t_best:
            t_best, kind, bnx, bny = t, ELASTIC, 0.0, -1.0
    elif dy < 0.0:
        t = -oy / dy
        if t < 0.0:
            t = 0.0
        if t <= t_best:
            t_best, kind, bnx, bny = t, ELASTIC, 0.0, 1.0
    if dx > 0.0:
        t = (lx - ox) / dx
        if t < 0.0:
            t = 0.0
        if t <= t_best:
            t_best, kind, bnx, bny = t, OPEN_RIGHT, -1.0, 0.0
    elif dx < 0.0:
        t = -ox / dx
        if t < 0.0:
            t = 0.0
        if t <= t_best:
            t_best, kind, bnx, bny = t, OPEN_LEFT, 1.0, 0.0
    for k in range(obs.shape[0]):
        if obs[k, 0] == 0.0:
            t, nx, ny = _rect_entry(ox, oy, dx, dy, obs[k, 1], obs[k, 2], obs[k, 3], obs[k, 4])
        else:
            t, nx, ny = _disk_entry(ox, oy, dx, dy, obs[k, 1], obs[k, 2], obs[k, 3])
        if t <= t_best:
            t_best, kind, bnx, bny = t, ELASTIC, nx, ny
    return t_best, bnx, bny, kind


# --- Python API ----------------------------------------------------------


def reflect(v, n) -> np.ndarray:
    """Specular reflection ``v - 2 (n.v) n``."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    return v - 2.0 * np.dot(n, v) * n


def first_hit(config: DomainConfig, origin, direction, max_time: float) -> Optional[BoundaryHit]:
    """First boundary crossed by ``origin + t * direction`` for ``0 <= t <= max_time``."""
    ox, oy = map(float, origin)
    dx, dy = map(float, direction)
    t, nx, ny, kind = first_hit_nb(
        ox, oy, dx, dy, float(max_time), config.length_x, config.length_y, config.packed_obstacles()
    )
    if kind == NO_HIT:
        return None
    return BoundaryHit(t, (ox + t * dx, oy + t * dy), (nx, ny), KIND_NAMES[kind])
