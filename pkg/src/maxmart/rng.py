"""Counter-based random streams.

Every path is driven by Philox4x64-10 keyed with ``(master, stream)``.  A
draw is a pure function of ``(key, block counter, word)``, so a path can be
regenerated in isolation and the output of a batch does not depend on how
its streams are distributed over workers.  The block function reproduces
``numpy.random.Philox`` bit for bit (numpy pre-increments its counter, so
numpy's first block is our block 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
from llvmlite import ir
from numba import types
from numba.extending import intrinsic

_PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
_PHILOX_M1 = np.uint64(0xCA5A826395121157)
_PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
_PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_C1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_C2 = np.uint64(0x94D049BB133111EB)

_TWO_M53 = 2.0**-53
_U11 = np.uint64(11)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)

MASK64 = (1 << 64) - 1


@intrinsic
def _mulhi64(typingctx, a, b):
    # high word of the full 128-bit product; lowers to a single multiply
    if a != types.uint64 or b != types.uint64:
        return None
    sig = types.uint64(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        i128 = ir.IntType(128)
        p = builder.mul(builder.zext(args[0], i128), builder.zext(args[1], i128))
        return builder.trunc(builder.lshr(p, ir.Constant(i128, 64)), ir.IntType(64))

    return sig, codegen


@nb.njit(inline="always", cache=True)
def _round(x0, x1, x2, x3, k0, k1):
    hi0 = _mulhi64(_PHILOX_M0, x0)
    lo0 = _PHILOX_M0 * x0
    hi1 = _mulhi64(_PHILOX_M1, x2)
    lo1 = _PHILOX_M1 * x2
    return hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0


@nb.njit(cache=True)
def philox_block(key0, key1, c0, c1):
    """One Philox4x64-10 block for counter ``(c0, c1, 0, 0)``."""
    x0, x1, x2, x3 = _round(c0, c1, _ZERO, _ZERO, key0, key1)
    k0 = key0 + _PHILOX_W0
    k1 = key1 + _PHILOX_W1
    x0, x1, x2, x3 = _round(x0, x1, x2, x3, k0, k1)
    k0 += _PHILOX_W0
    k1 += _PHILOX_W1
    x0, x1, x2, x3 = _round(x0, x1, x2, x3, k0, k1)
    k0 += _PHILOX_W0
    k1 += _PHILOX_W1
    x0, x1, x2, x3 = _round(x0, x1, x2, x3, k0, k1)
    k0 += _PHILOX_W0
    k1 += _PHILOX_W1
    x0, x1, x2, x3 = _round(x0, x1, x2, x3, k0, k1)
    k0 += _PHILOX_W0
    k1 += _PHILOX_W1
    x0, x1, x2, x3 = _round(x0, x1, x2, x3, k0, k1)
    k0 += _PHILOX_W0
    k1 += _PHILOX_W1
    x0, x1, x2, x3 = _round(x0, x1, x2, x3, k0, k1)
    k0 += _PHILOX_W0
    k1 += _PHILOX_W1
    x0, x1, x2, x3 = _round(x0, x1, x2, x3, k0, k1)
    k0 += _PHILOX_W0
    k1 += _PHILOX_W1
    x0, x1, x2, x3 = _round(x0, x1, x2, x3, k0, k1)
    k0 += _PHILOX_W0
    k1 += _PHILOX_W1
    return _round(x0, x1, x2, x3, k0, k1)


@nb.njit(inline="always", cache=True)
def to_open_unit(x):
    """Map 64 random bits to (0, 1]; safe under ``log``."""
    return ((x >> _U11) + _ONE) * _TWO_M53


@nb.njit(cache=True)
def splitmix64(x):
    z = x + _SM_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _SM_C1
    z = (z ^ (z >> np.uint64(27))) * _SM_C2
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class Seed:
    """Philox key of one path: ``master`` selects the experiment, ``stream`` the path."""

    master: int
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master", int(self.master) & MASK64)
        object.__setattr__(self, "stream", int(self.stream) & MASK64)

    @property
    def key(self) -> tuple[np.uint64, np.uint64]:
        return np.uint64(self.master), np.uint64(self.stream)

    def child(self, label: int) -> int:
        """Master seed for a derived family of streams (e.g. inner continuations)."""
        return derive_master(self.master, self.stream, label)


def derive_master(master: int, stream: int, label: int) -> int:
    h = splitmix64(np.uint64(int(master) & MASK64))
    h = splitmix64(h ^ np.uint64(int(stream) & MASK64))
    h = splitmix64(h ^ np.uint64(int(label) & MASK64))
    return int(h)


@nb.njit(cache=True)
def _uniform_stream(key0, key1, n):
    out = np.empty(n)
    nblocks = (n + 3) // 4
    for b in range(nblocks):
        w = philox_block(key0, key1, np.uint64(b), _ZERO)
        for j in range(4):
            i = 4 * b + j
            if i < n:
                out[i] = to_open_unit(w[j])
    return out


def uniforms(seed: Seed, n: int) -> np.ndarray:
    """First ``n`` uniforms on (0, 1] of a stream, in counter order."""
    k0, k1 = seed.key
    return _uniform_stream(k0, k1, int(n))


def raw_blocks(seed: Seed, nblocks: int, start: int = 0) -> np.ndarray:
    """Raw 64-bit Philox output for blocks ``start .. start + nblocks - 1``."""
    k0, k1 = seed.key
    out = np.empty((nblocks, 4), dtype=np.uint64)
    for b in range(nblocks):
        out[b] = philox_block(k0, k1, np.uint64(start + b), _ZERO)
    return out
