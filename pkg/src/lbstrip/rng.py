"""Counter-based random streams (Philox4x32-10).

Every draw is a pure function of ``(seed, stream_id, counter)``, so a
trajectory simulated on any worker sees exactly the same numbers. The
transport kernels call :func:`philox_uniform_pair` directly with a local
counter; :class:`RngStream` is the Python-side handle used by the API and
the tests.
"""
from __future__ import annotations

import numpy as np
from numba import njit

MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_S32 = np.uint64(32)
_S5 = np.uint64(5)
_S6 = np.uint64(6)
_TWO26 = 67108864.0
_TWO_M53 = 1.0 / 9007199254740992.0


@njit(cache=True, error_model="numpy")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on a 128-bit counter; all words uint64 holding 32 bits."""
    for r in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & MASK32
        hi1 = p1 >> _S32
        lo1 = p1 & MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        if r < 9:
            k0 = (k0 + _W0) & MASK32
            k1 = (k1 + _W1) & MASK32
    return c0, c1, c2, c3


@njit(cache=True, error_model="numpy")
def _to_unit(a, b):
    # 53 random bits, mapped to the open interval (0, 1)
    k = (a >> _S5) * _TWO26 + (b >> _S6)
    return (k + 0.5) * _TWO_M53


@njit(cache=True, error_model="numpy")
def philox_uniform_pair(seed, stream, counter):
    """Two independent uniforms on (0, 1) from block ``counter`` of a stream.

    ``seed`` is the key, ``stream`` and ``counter`` fill the 128-bit counter.
    All three are uint64.
    """
    r0, r1, r2, r3 = philox4x32(
        counter & MASK32,
        counter >> _S32,
        stream & MASK32,
        stream >> _S32,
        seed & MASK32,
        seed >> _S32,
    )
    return _to_unit(r0, r1), _to_unit(r2, r3)


@njit(cache=True, error_model="numpy")
def _fill_uniforms(seed, stream, start, out):
    n = out.shape[0]
    blk = start
    i = 0
    while i < n:
        u0, u1 = philox_uniform_pair(seed, stream, blk)
        out[i] = u0
        if i + 1 < n:
            out[i + 1] = u1
        i += 2
        blk += np.uint64(1)
    return blk


def as_u64(value: int) -> np.uint64:
    """Wrap any Python int into the uint64 range."""
    return np.uint64(int(value) & 0xFFFFFFFFFFFFFFFF)


def derive_seed(seed: int, index: int) -> int:
    """Child seed for sub-experiment ``index``; stable under adding more indices."""
    r0, r1, _, _ = philox4x32(
        as_u64(index) & MASK32,
        as_u64(index) >> _S32,
        np.uint64(0x5EED),
        np.uint64(0),
        as_u64(seed) & MASK32,
        as_u64(seed) >> _S32,
    )
    return int(r0) | (int(r1) << 32)


class RngStream:
    """One independent stream keyed by ``(seed, stream_id)``.

    Draws are consumed in blocks of two uniforms. Do not share one instance
    between concurrently running trajectories.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        self.counter = 0

    def uniform_pair(self) -> tuple[float, float]:
        u0, u1 = philox_uniform_pair(
            np.uint64(self.seed), np.uint64(self.stream_id), np.uint64(self.counter)
        )
        self.counter += 1
        return u0, u1

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` uniforms on (0, 1); consumes ``ceil(n / 2)`` blocks."""
        out = np.empty(n, dtype=np.float64)
        nxt = _fill_uniforms(
            np.uint64(self.seed), np.uint64(self.stream_id), np.uint64(self.counter), out
        )
        self.counter = int(nxt)
        return out

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"
