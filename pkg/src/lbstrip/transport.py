"""Trajectory engine: injection, free flight with specular reflections,
velocity jumps at exponential times, and exit through an open side.

Every straight sub-segment of a trajectory is sliced exactly over the
square cells of the grid (grid traversal), so cell times add up to the
residence time. Batches split the particle index range into a fixed number
of chunks; particle ``p`` always uses stream ``p``, and chunk accumulators
are merged in chunk order, which makes results independent of the number
of worker processes.
"""
from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .density import GridSpec, SojournGrid, obstacle_mask
from .geometry import (
    ELASTIC,
    NO_HIT,
    NUDGE,
    OPEN_LEFT,
    OPEN_RIGHT,
    DomainConfig,
    StripSpec,
    check,
    first_hit_nb,
    reflect_nb,
)
from .rng import RngStream, as_u64, philox_uniform_pair
from .scattering import LEFT, RIGHT, SIDE_NAMES, KernelParams, entry_nb, scatter_nb

MAX_EVENTS = 10**7
SNAP = 1e-9  # a hit this close to y = 0 or y = L2 is a wall hit
N_CHUNKS = 20
ABORTED = -1

# per-chunk statistics layout
S_COUNT = 0  # 4 entries, index entry * 2 + exit
S_TIME = 4
S_TIME2 = 8
S_REGION = 12  # t_L, t_C, t_R summed over left->right crossers
S_SCATTERS = 15
S_EVENTS = 16
S_ABORTED = 17
N_STATS = 18


@dataclass(frozen=True)
class RegionDecomposition:
    """``L = {x < x_left}``, ``R = {x > x_right}``, ``C`` the rest."""

    x_left: float
    x_right: float

    def __post_init__(self):
        if not self.x_left <= self.x_right:
            raise ValueError(f"x_left must not exceed x_right ({self.x_left} > {self.x_right})")

    @classmethod
    def for_domain(cls, config: DomainConfig) -> "RegionDecomposition":
        """Bounding-box x-extent of the obstacles; the strip midpoint when there are none."""
        if not config.obstacles:
            mid = config.length_x / 2.0
            return cls(mid, mid)
        x0 = min(ob.bounds[0] for ob in config.obstacles)
        x1 = max(ob.bounds[1] for ob in config.obstacles)
        return cls(x0, x1)


@dataclass
class TrajectoryOutcome:
    entry_side: str
    exit_side: Optional[str]  # None for aborted trajectories
    residence_time: float
    region_times: tuple[float, float, float]
    n_scatters: int
    n_events: int

    @property
    def aborted(self) -> bool:
        return self.exit_side is None


# --- kernels -------------------------------------------------------------


@njit(cache=True, error_model="numpy")
def _region_split(x0, dx, T, xl, xr):
    if dx == 0.0:
        if x0 < xl:
            return T, 0.0
        if x0 > xr:
            return 0.0, T
        return 0.0, 0.0
    tl = (xl - x0) / dx
    tr = (xr - x0) / dx
    tl = min(max(tl, 0.0), T)
    tr = min(max(tr, 0.0), T)
    if dx > 0.0:
        return tl, T - tr
    return T - tl, tr


@njit(cache=True, error_model="numpy")
def _deposit(x0, y0, dx, dy, T, nx, ny, hx, hy, cell_time, touched, n_touched):
    """Slice the segment ``x0 + t d, 0 <= t <= T`` over the grid cells."""
    if T <= 0.0:
        return n_touched
    ix = int(x0 / hx)
    iy = int(y0 / hy)
    ix = min(max(ix, 0), nx - 1)
    iy = min(max(iy, 0), ny - 1)
    inf = np.inf
    if dx > 0.0:
        sx = 1
        tmx = ((ix + 1) * hx - x0) / dx
        tdx = hx / dx
    elif dx < 0.0:
        sx = -1
        tmx = (ix * hx - x0) / dx
        tdx = -hx / dx
    else:
        sx = 0
        tmx = inf
        tdx = inf
    if dy > 0.0:
        sy = 1
        tmy = ((iy + 1) * hy - y0) / dy
        tdy = hy / dy
    elif dy < 0.0:
        sy = -1
        tmy = (iy * hy - y0) / dy
        tdy = -hy / dy
    else:
        sy = 0
        tmy = inf
        tdy = inf
    t = 0.0
    while True:
        step_x = tmx < tmy
        tn = tmx if step_x else tmy
        if tn > T:
            tn = T
        if tn > t:
            k = ix * ny + iy
            if cell_time[k] == 0.0:
                touched[n_touched] = k
                n_touched += 1
            cell_time[k] += tn - t
            t = tn
        if tn >= T:
            return n_touched
        if step_x:
            ix += sx
            tmx += tdx
            if ix < 0 or ix >= nx:
                ix -= sx
                tmx = inf
        else:
            iy += sy
            tmy += tdy
            if iy < 0 or iy >= ny:
                iy -= sy
                tmy = inf


@njit(cache=True, error_model="numpy")
def _trajectory(
    x, y, vx, vy, seed, stream, counter, t_m, lx, ly, obs, nx, ny, hx, hy, xl, xr, max_events,
    cell_time, touched,
):
    """Run one particle from ``(x, y, vx, vy)`` until it leaves the strip.

    Returns ``(exit_side, residence, t_L, t_C, t_R, n_scatters, n_events,
    n_touched, counter)``; ``exit_side == ABORTED`` past ``max_events``.
    """
    clock = 0.0
    t_left = 0.0
    t_right = 0.0
    n_touched = 0
    n_scatters = 0
    n_events = 0
    one = np.uint64(1)
    while True:
        u_flight, u_delta = philox_uniform_pair(seed, stream, counter)
        counter += one
        remaining = -t_m * math.log(u_flight)
        while True:
            t, nnx, nny, kind = first_hit_nb(x, y, vx, vy, remaining, lx, ly, obs)
            seg = remaining if kind == NO_HIT else t
            n_touched = _deposit(x, y, vx, vy, seg, nx, ny, hx, hy, cell_time, touched, n_touched)
            a, b = _region_split(x, vx, seg, xl, xr)
            t_left += a
            t_right += b
            clock += seg
            x += vx * seg
            y += vy * seg
            if kind == NO_HIT:
                break
            if kind == OPEN_LEFT or kind == OPEN_RIGHT:
                side = LEFT if kind == OPEN_LEFT else RIGHT
                return (side, clock, t_left, clock - t_left - t_right, t_right,
                        n_scatters, n_events, n_touched, counter)
            # elastic; snap onto the wall only for wall hits, not obstacle faces
            if nnx == 0.0:
                if nny < 0.0 and abs(y - ly) < SNAP:
                    y = ly
                elif nny > 0.0 and abs(y) < SNAP:
                    y = 0.0
            vx, vy = reflect_nb(vx, vy, nnx, nny)
            x += NUDGE * vx
            y += NUDGE * vy
            remaining -= t
            n_events += 1
            if n_events > max_events:
                return (ABORTED, clock, t_left, clock - t_left - t_right, t_right,
                        n_scatters, n_events, n_touched, counter)
        vx, vy = scatter_nb(vx, vy, 2.0 * u_delta - 1.0)
        n_scatters += 1
        n_events += 1
        if n_events > max_events:
            return (ABORTED, clock, t_left, clock - t_left - t_right, t_right,
                    n_scatters, n_events, n_touched, counter)


@njit(cache=True, error_model="numpy")
def _run_chunk(
    seed, start, stop, t_m, lx, ly, obs, rho_l, rho_r, nx, ny, xl, xr, max_events
):
    ncell = nx * ny
    hx = lx / nx
    hy = ly / ny
    sojourn = np.zeros(ncell)
    loc_t = np.zeros(ncell)
    loc_t2 = np.zeros(ncell)
    loc_n = np.zeros(ncell, dtype=np.int64)
    stats = np.zeros(N_STATS)
    cell_time = np.zeros(ncell)
    touched = np.zeros(ncell, dtype=np.int64)
    for p in range(start, stop):
        stream = np.uint64(p)
        u_side, u_pos = philox_uniform_pair(seed, stream, np.uint64(0))
        u_ang, _ = philox_uniform_pair(seed, stream, np.uint64(1))
        entry, x, y, vx, vy = entry_nb(u_side, u_pos, u_ang, lx, ly, rho_l, rho_r)
        res = _trajectory(x, y, vx, vy, seed, stream, np.uint64(2), t_m, lx, ly, obs,
                          nx, ny, hx, hy, xl, xr, max_events, cell_time, touched)
        exit_side = res[0]
        n_touched = res[7]
        stats[S_EVENTS] += res[6]
        if exit_side == ABORTED:
            stats[S_ABORTED] += 1
            for k in range(n_touched):
                cell_time[touched[k]] = 0.0
            continue
        crosser = entry == LEFT and exit_side == RIGHT
        for k in range(n_touched):
            c = touched[k]
            tc = cell_time[c]
            sojourn[c] += tc
            if crosser:
                loc_t[c] += tc
                loc_t2[c] += tc * tc
                loc_n[c] += 1
            cell_time[c] = 0.0
        cls = entry * 2 + exit_side
        stats[S_COUNT + cls] += 1
        stats[S_TIME + cls] += res[1]
        stats[S_TIME2 + cls] += res[1] * res[1]
        stats[S_SCATTERS] += res[5]
        if crosser:
            stats[S_REGION] += res[2]
            stats[S_REGION + 1] += res[3]
            stats[S_REGION + 2] += res[4]
    return sojourn, loc_t, loc_t2, loc_n, stats


# --- single trajectory API -------------------------------------------------


def simulate_particle(
    config: DomainConfig,
    params: KernelParams,
    rng: RngStream,
    deposit: Optional[SojournGrid] = None,
    decomposition: Optional[RegionDecomposition] = None,
    start: Optional[tuple] = None,
    max_events: int = MAX_EVENTS,
) -> TrajectoryOutcome:
    """Simulate one trajectory and add its cell times to ``deposit``.

    Without ``start`` the particle is injected from a reservoir using the
    stream's first two blocks, exactly like particle ``rng.stream_id`` of a
    batch. ``start = (position, velocity)`` places it by hand; the entry side
    is then the nearer open side.
    """
    if decomposition is None:
        decomposition = RegionDecomposition.for_domain(config)
    lx, ly = config.length_x, config.length_y
    if start is None:
        u_side, u_pos = rng.uniform_pair()
        u_ang, _ = rng.uniform_pair()
        entry, x, y, vx, vy = entry_nb(u_side, u_pos, u_ang, lx, ly, config.rho_left, config.rho_right)
    else:
        (x, y), (vx, vy) = start
        entry = LEFT if x <= lx / 2 else RIGHT
    if deposit is not None:
        nx, ny = deposit.spec.n_x, deposit.spec.n_y
    else:
        nx, ny = 1, 1
    cell_time = np.zeros(nx * ny)
    touched = np.zeros(nx * ny, dtype=np.int64)
    res = _trajectory(
        float(x), float(y), float(vx), float(vy), np.uint64(rng.seed), np.uint64(rng.stream_id),
        np.uint64(rng.counter), params.mean_flight_time, lx, ly, config.packed_obstacles(),
        nx, ny, lx / nx, ly / ny, decomposition.x_left, decomposition.x_right, max_events,
        cell_time, touched,
    )
    exit_side, clock, t_l, t_c, t_r, n_sc, n_ev, _, counter = res
    rng.counter = int(counter)
    if deposit is not None and exit_side != ABORTED:
        deposit.time_sum += cell_time.reshape(nx, ny)
    return TrajectoryOutcome(
        entry_side=SIDE_NAMES[entry],
        exit_side=None if exit_side == ABORTED else SIDE_NAMES[exit_side],
        residence_time=clock,
        region_times=(t_l, t_c, t_r),
        n_scatters=int(n_sc),
        n_events=int(n_ev),
    )


# --- batches ---------------------------------------------------------------


@dataclass
class BatchResult:
    sojourn_grid: SojournGrid
    local_time: np.ndarray
    local_time_sq: np.ndarray
    local_count: np.ndarray
    chunk_stats: np.ndarray  # (n_chunks, N_STATS)
    n_particles: int
    decomposition: RegionDecomposition
    seed: int
    mean_flight_time: float

    @property
    def stats(self) -> np.ndarray:
        return self.chunk_stats.sum(axis=0)

    @property
    def counts(self) -> np.ndarray:
        """``counts[entry, exit]`` with 0 = left, 1 = right."""
        return self.stats[S_COUNT:S_COUNT + 4].reshape(2, 2).astype(np.int64)

    @property
    def time_sums(self) -> np.ndarray:
        return self.stats[S_TIME:S_TIME + 4].reshape(2, 2)

    @property
    def aborted(self) -> int:
        return int(self.stats[S_ABORTED])

    @property
    def n_events(self) -> int:
        return int(self.stats[S_EVENTS])

    @property
    def crossers(self) -> int:
        return int(self.counts[LEFT, RIGHT])

    @property
    def right_exits(self) -> int:
        return int(self.counts[:, RIGHT].sum())

    def mean_time(self, entry: int = LEFT, exit: int = RIGHT) -> float:
        n = self.counts[entry, exit]
        if n == 0:
            raise ValueError("no crossing statistics")
        return float(self.time_sums[entry, exit] / n)

    def mean_time_stderr(self, entry: int = LEFT, exit: int = RIGHT) -> float:
        """Batch-means standard error of :meth:`mean_time` over the chunks."""
        cls = entry * 2 + exit
        n_k = self.chunk_stats[:, S_COUNT + cls]
        t_k = self.chunk_stats[:, S_TIME + cls]
        return ratio_stderr(t_k, n_k)

    def region_sums(self) -> np.ndarray:
        return self.stats[S_REGION:S_REGION + 3]


def ratio_stderr(num: np.ndarray, den: np.ndarray) -> float:
    """Standard error of ``sum(num) / sum(den)`` from per-batch sums."""
    k = len(den)
    total = den.sum()
    if k < 2 or total == 0:
        return math.nan
    r = num.sum() / total
    resid = num - r * den
    return float(math.sqrt(k / (k - 1) * np.sum(resid * resid)) / total)


def chunk_bounds(n_particles: int, n_chunks: int = N_CHUNKS) -> list[tuple[int, int]]:
    k = min(n_chunks, n_particles)
    return [(i * n_particles // k, (i + 1) * n_particles // k) for i in range(k)]


def _chunk_job(args):
    return _run_chunk(*args)


def run_batch(
    config: DomainConfig,
    params: KernelParams,
    n_particles: int,
    grid_spec: GridSpec,
    seed: int,
    workers: int = 1,
    decomposition: Optional[RegionDecomposition] = None,
    max_events: int = MAX_EVENTS,
    n_chunks: int = N_CHUNKS,
) -> BatchResult:
    """Simulate particles ``0 .. n_particles - 1`` and merge their accumulators."""
    if n_particles < 1:
        raise ValueError("n_particles must be at least 1")
    check(config)
    if abs(grid_spec.length_x - config.length_x) > 1e-12 or abs(grid_spec.length_y - config.length_y) > 1e-12:
        raise ValueError("grid does not cover the strip")
    if decomposition is None:
        decomposition = RegionDecomposition.for_domain(config)
    obs = config.packed_obstacles()
    nx, ny = grid_spec.n_x, grid_spec.n_y
    jobs = [
        (as_u64(seed), a, b, params.mean_flight_time, config.length_x, config.length_y, obs,
         config.rho_left, config.rho_right, nx, ny, decomposition.x_left, decomposition.x_right,
         max_events)
        for a, b in chunk_bounds(n_particles, n_chunks)
    ]
    if workers > 1 and len(jobs) > 1:
        # compile in the parent so forked workers inherit the machine code
        _run_chunk(*jobs[0][:1], 0, 0, *jobs[0][3:])
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            parts = list(pool.map(_chunk_job, jobs))
    else:
        parts = [_run_chunk(*job) for job in jobs]
    sojourn = np.zeros(nx * ny)
    loc_t = np.zeros(nx * ny)
    loc_t2 = np.zeros(nx * ny)
    loc_n = np.zeros(nx * ny, dtype=np.int64)
    for s, lt, lt2, ln, _ in parts:
        sojourn += s
        loc_t += lt
        loc_t2 += lt2
        loc_n += ln
    shape = (nx, ny)
    grid = SojournGrid(grid_spec, sojourn.reshape(shape), obstacle_mask(config, grid_spec))
    return BatchResult(
        sojourn_grid=grid,
        local_time=loc_t.reshape(shape),
        local_time_sq=loc_t2.reshape(shape),
        local_count=loc_n.reshape(shape),
        chunk_stats=np.array([p[4] for p in parts]),
        n_particles=n_particles,
        decomposition=decomposition,
        seed=int(seed),
        mean_flight_time=params.mean_flight_time,
    )


# --- mean square displacement -------------------------------------------


@njit(cache=True, error_model="numpy")
def _msd_chunk(seed, start, stop, t_m, lx, ly, obs, x0, y0, times, max_events):
    nt = times.shape[0]
    sx = np.zeros(nt)
    sy = np.zeros(nt)
    s4 = np.zeros(nt)
    lost = 0
    one = np.uint64(1)
    for p in range(start, stop):
        stream = np.uint64(p)
        u_ang, _ = philox_uniform_pair(seed, stream, np.uint64(0))
        phi = 2.0 * math.pi * u_ang
        vx = math.cos(phi)
        vy = math.sin(phi)
        x = x0
        y = y0
        clock = 0.0
        k = 0
        counter = one
        n_events = 0
        ok = True
        while k < nt and ok:
            u_flight, u_delta = philox_uniform_pair(seed, stream, counter)
            counter += one
            remaining = -t_m * math.log(u_flight)
            while k < nt:
                t, nnx, nny, kind = first_hit_nb(x, y, vx, vy, remaining, lx, ly, obs)
                seg = remaining if kind == NO_HIT else t
                while k < nt and times[k] <= clock + seg:
                    dt = times[k] - clock
                    ddx = x + vx * dt - x0
                    ddy = y + vy * dt - y0
                    sx[k] += ddx * ddx
                    sy[k] += ddy * ddy
                    r2 = ddx * ddx + ddy * ddy
                    s4[k] += r2 * r2
                    k += 1
                if k >= nt:
                    break
                clock += seg
                x += vx * seg
                y += vy * seg
                if kind == NO_HIT:
                    break
                if kind != ELASTIC:
                    ok = False
                    break
                vx, vy = reflect_nb(vx, vy, nnx, nny)
                x += NUDGE * vx
                y += NUDGE * vy
                remaining -= t
                n_events += 1
            vx, vy = scatter_nb(vx, vy, 2.0 * u_delta - 1.0)
            n_events += 1
            if n_events > max_events:
                ok = False
        if not ok:
            lost += 1
    return sx, sy, s4, lost


@dataclass
class MSDResult:
    times: np.ndarray
    msd_x: np.ndarray
    msd_y: np.ndarray
    msd: np.ndarray
    msd_stderr: np.ndarray
    n_particles: int
    lost: int


def msd_curve(
    config: DomainConfig,
    params: KernelParams,
    n_particles: int,
    times,
    seed: int,
    origin: Optional[tuple] = None,
    max_events: int = MAX_EVENTS,
) -> MSDResult:
    """Mean square displacement of particles released isotropically at ``origin``.

    Meant for a domain large enough that the open sides are never reached
    over the sampled horizon; particles that do reach them raise an error.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("sample times must be sorted")
    if origin is None:
        origin = (config.length_x / 2.0, config.length_y / 2.0)
    sx, sy, s4, lost = _msd_chunk(
        as_u64(seed), 0, n_particles, params.mean_flight_time, config.length_x, config.length_y,
        config.packed_obstacles(), float(origin[0]), float(origin[1]), times, max_events,
    )
    if lost:
        raise RuntimeError(f"{lost} particles left the domain or aborted; enlarge the domain")
    n = n_particles
    msd = (sx + sy) / n
    var = s4 / n - msd * msd
    return MSDResult(times, sx / n, sy / n, msd, np.sqrt(np.maximum(var, 0.0) / n), n, int(lost))


def fit_diffusion(result: MSDResult, t_min: float) -> float:
    """``D`` from a least-squares line ``MSD = 4 D t + b`` over ``t >= t_min``."""
    sel = result.times >= t_min
    if sel.sum() < 2:
        raise ValueError("need at least two sample times past t_min")
    slope, _ = np.polyfit(result.times[sel], result.msd[sel], 1)
    return float(slope / 4.0)


def quasi_free_domain(t_max: float) -> DomainConfig:
    """Square box that a unit-speed particle released at its center cannot leave by ``t_max``."""
    side = 2.0 * (t_max + 1.0)
    return DomainConfig(StripSpec(side, side), (), 1.0, 0.0)
