"""Counter-based random numbers (Philox4x32-10) usable from numba kernels.

Every draw is a pure function of ``(seed, stream, index, k)``: ``index`` is the
path (or sample) number and ``k`` the position of the draw inside that path.
Nothing is stateful, so the numbers a path sees never depend on how paths are
split across workers.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

# stream ids, one per consumer so different uses never share numbers
STREAM_SDE = 1
STREAM_W_COUNT = 2
STREAM_W_EXPO = 3
STREAM_BOOTSTRAP = 4
STREAM_HIT_BASE = 16  # hitting runs use 16 + 2 i (normals) and 17 + 2 i (bridge uniforms)

_TWO_PI = 2.0 * math.pi
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds. All arguments are uint32 values held in uint64."""
    c0 = np.uint64(c0)
    c1 = np.uint64(c1)
    c2 = np.uint64(c2)
    c3 = np.uint64(c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def _block(seed, stream, index, block):
    s = np.uint64(seed)
    b = np.uint64(block)
    i = np.uint64(index)
    return philox4x32(b & _MASK, b >> _S32, i & _MASK, np.uint64(stream) & _MASK,
                      s & _MASK, s >> _S32)


@njit(cache=True, nogil=True)
def _u53(a, b):
    return float((a >> np.uint64(5)) * np.uint64(67108864) + (b >> np.uint64(6))) * _INV53


@njit(cache=True, nogil=True)
def uniform_pair(seed, stream, index, block):
    """Two independent U[0, 1) doubles (53-bit) from one Philox block."""
    w0, w1, w2, w3 = _block(seed, stream, index, block)
    return _u53(w0, w1), _u53(w2, w3)


@njit(cache=True, nogil=True)
def uniform(seed, stream, index, k):
    u0, u1 = uniform_pair(seed, stream, index, k >> 1)
    if k & 1:
        return u1
    return u0


@njit(cache=True, nogil=True)
def normal_pair(seed, stream, index, block):
    """Box-Muller on one block; gives draws 2*block and 2*block + 1."""
    u0, u1 = uniform_pair(seed, stream, index, block)
    rad = math.sqrt(-2.0 * math.log(1.0 - u0))
    ang = _TWO_PI * u1
    return rad * math.cos(ang), rad * math.sin(ang)


@njit(cache=True, nogil=True)
def normal(seed, stream, index, k):
    z0, z1 = normal_pair(seed, stream, index, k >> 1)
    if k & 1:
        return z1
    return z0


@njit(cache=True, nogil=True)
def exponential(seed, stream, index, k):
    return -math.log(1.0 - uniform(seed, stream, index, k))


@njit(cache=True)
def normals(seed, stream, index, n):
    out = np.empty(n)
    for k in range(n):
        out[k] = normal(seed, stream, index, k)
    return out


@njit(cache=True)
def uniforms(seed, stream, index, n):
    out = np.empty(n)
    for k in range(n):
        out[k] = uniform(seed, stream, index, k)
    return out


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        from .errors import BadParameter

        raise BadParameter(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed
