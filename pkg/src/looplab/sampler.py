"""Seeded, stateless edge openness.

Every edge's status is a pure function of (seed, canonical edge bytes):
a 128-bit keyed block mix (MurmurHash3-x64-128 layout) is applied to the
edge's fixed-width serialization, the top 53 bits of the first output
lane become a uniform u in [0, 1), and the edge is open iff u < p.
There is no sequential stream state, so any subset of edges can be
queried in any order, in O(1) each, with bit-identical results.

Two implementations live here and must agree bit for bit:

- `_mm3_bytes`: byte-oriented pure Python, the readable reference
- numba kernels operating on coordinate words directly (hot path)

Replica seeds are derived from a master seed through the same mix with
a distinct message tag, so replica streams never collide with edge
hashing.
"""

from __future__ import annotations

from dataclasses import dataclass
import struct

import numpy as np
from numba import njit

from .lattice import GeometryError, LatticeSpec, canonical_edge, serialize_edge

__all__ = [
    "EdgeConfig",
    "edge_u",
    "edge_u_array",
    "edge_is_open",
    "derive_replica_seed",
]

_MASK64 = (1 << 64) - 1

# block mix constants (MurmurHash3 x64 128)
_C1 = 0x87C37B91114253D5
_C2 = 0x4CF5AD432745937F
_F1 = 0xFF51AFD7ED558CCD
_F2 = 0xC4CEB9FE1A85EC53

# second key lane offset; golden ratio in 64 bits
_KEY2 = 0x9E3779B97F4A7C15

_REPLICA_TAG = b"REP1"


def _rotl(x, r):
    return ((x << r) | (x >> (64 - r))) & _MASK64


def _fmix(k):
    k ^= k >> 33
    k = (k * _F1) & _MASK64
    k ^= k >> 33
    k = (k * _F2) & _MASK64
    k ^= k >> 33
    return k


def _mm3_bytes(data: bytes, seed: int):
    """Reference 128-bit keyed mix over a byte string.

    Returns (h1, h2) as Python ints.  Key schedule: h1 = seed,
    h2 = seed xor golden ratio, so the full 64-bit seed keys both lanes.
    """
    seed &= _MASK64
    h1 = seed
    h2 = seed ^ _KEY2
    length = len(data)
    nblocks = length // 16
    for i in range(nblocks):
        k1, k2 = struct.unpack_from("<QQ", data, i * 16)
        k1 = (k1 * _C1) & _MASK64
        k1 = _rotl(k1, 31)
        k1 = (k1 * _C2) & _MASK64
        h1 ^= k1
        h1 = _rotl(h1, 27)
        h1 = (h1 + h2) & _MASK64
        h1 = (h1 * 5 + 0x52DCE729) & _MASK64
        k2 = (k2 * _C2) & _MASK64
        k2 = _rotl(k2, 33)
        k2 = (k2 * _C1) & _MASK64
        h2 ^= k2
        h2 = _rotl(h2, 31)
        h2 = (h2 + h1) & _MASK64
        h2 = (h2 * 5 + 0x38495AB5) & _MASK64
    tail = data[nblocks * 16 :]
    k1 = 0
    k2 = 0
    for j, b in enumerate(tail[8:16]):
        k2 |= b << (8 * j)
    for j, b in enumerate(tail[:8]):
        k1 |= b << (8 * j)
    if len(tail) > 8:
        k2 = (k2 * _C2) & _MASK64
        k2 = _rotl(k2, 33)
        k2 = (k2 * _C1) & _MASK64
        h2 ^= k2
    if len(tail) > 0:
        k1 = (k1 * _C1) & _MASK64
        k1 = _rotl(k1, 31)
        k1 = (k1 * _C2) & _MASK64
        h1 ^= k1
    h1 ^= length
    h2 ^= length
    h1 = (h1 + h2) & _MASK64
    h2 = (h2 + h1) & _MASK64
    h1 = _fmix(h1)
    h2 = _fmix(h2)
    h1 = (h1 + h2) & _MASK64
    h2 = (h2 + h1) & _MASK64
    return h1, h2


# ---------------------------------------------------------------------------
# compiled hot path
#
# The kernels below reproduce _mm3_bytes exactly for the specific message
# layouts used in this package (edge ids and replica derivation), working
# on 64-bit words assembled arithmetically instead of byte strings.

_U64 = np.uint64


@njit(cache=True, inline="always")
def _nb_fmix(k):
    k ^= k >> _U64(33)
    k *= _U64(0xFF51AFD7ED558CCD)
    k ^= k >> _U64(33)
    k *= _U64(0xC4CEB9FE1A85EC53)
    k ^= k >> _U64(33)
    return k


@njit(cache=True, inline="always")
def _nb_rotl(x, r):
    return (x << r) | (x >> (_U64(64) - r))


@njit(cache=True, inline="always")
def _nb_mm3_words(seed, words, nbytes):
    """128-bit mix of the little-endian byte string encoded in `words`.

    words[j] holds message bytes [8j, 8j+8), zero padded past nbytes.
    Returns the first output lane h1 (the only lane consumed here).
    """
    c1 = _U64(0x87C37B91114253D5)
    c2 = _U64(0x4CF5AD432745937F)
    h1 = _U64(seed)
    h2 = _U64(seed) ^ _U64(0x9E3779B97F4A7C15)
    nblocks = nbytes // 16
    i = 0
    for _ in range(nblocks):
        k1 = words[i]
        k2 = words[i + 1]
        i += 2
        k1 *= c1
        k1 = _nb_rotl(k1, _U64(31))
        k1 *= c2
        h1 ^= k1
        h1 = _nb_rotl(h1, _U64(27))
        h1 += h2
        h1 = h1 * _U64(5) + _U64(0x52DCE729)
        k2 *= c2
        k2 = _nb_rotl(k2, _U64(33))
        k2 *= c1
        h2 ^= k2
        h2 = _nb_rotl(h2, _U64(31))
        h2 += h1
        h2 = h2 * _U64(5) + _U64(0x38495AB5)
    tail_len = nbytes - 16 * nblocks
    if tail_len > 8:
        k2 = words[i + 1]
        k2 *= c2
        k2 = _nb_rotl(k2, _U64(33))
        k2 *= c1
        h2 ^= k2
    if tail_len > 0:
        k1 = words[i]
        k1 *= c1
        k1 = _nb_rotl(k1, _U64(31))
        k1 *= c2
        h1 ^= k1
    h1 ^= _U64(nbytes)
    h2 ^= _U64(nbytes)
    h1 += h2
    h2 += h1
    h1 = _nb_fmix(h1)
    h2 = _nb_fmix(h2)
    h1 += h2
    return h1


@njit(cache=True, inline="always")
def _nb_edge_h1(seed, coords, axis, d):
    """First output lane for the edge (coords, axis) of a d-dim lattice.

    Message layout matches lattice.serialize_edge: d int32 little-endian
    coordinates then one axis byte, total 4d+1 bytes.
    """
    nbytes = 4 * d + 1
    nwords = (nbytes + 7) // 8
    words = np.zeros(nwords, dtype=np.uint64)
    for i in range(d):
        w = _U64(np.uint32(coords[i]))
        j = i >> 1
        if i & 1:
            words[j] |= w << _U64(32)
        else:
            words[j] |= w
    byte_off = 4 * d
    words[byte_off >> 3] |= _U64(axis) << _U64(8 * (byte_off & 7))
    return _nb_mm3_words(_U64(seed), words, nbytes)


@njit(cache=True, inline="always")
def _nb_edge_u(seed, coords, axis, d):
    h1 = _nb_edge_h1(seed, coords, axis, d)
    return (h1 >> _U64(11)) * 1.1102230246251565e-16  # 2**-53


@njit(cache=True, inline="always")
def _nb_edge_u_buf(seed, coords, axis, d, words):
    """Allocation-free variant for kernels: words is caller scratch,
    length >= (4d+8)//8, overwritten here."""
    nbytes = 4 * d + 1
    nwords = (nbytes + 7) // 8
    for j in range(nwords):
        words[j] = _U64(0)
    for i in range(d):
        w = _U64(np.uint32(coords[i]))
        j = i >> 1
        if i & 1:
            words[j] |= w << _U64(32)
        else:
            words[j] |= w
    byte_off = 4 * d
    words[byte_off >> 3] |= _U64(axis) << _U64(8 * (byte_off & 7))
    h1 = _nb_mm3_words(_U64(seed), words, nbytes)
    return (h1 >> _U64(11)) * 1.1102230246251565e-16  # 2**-53


@njit(cache=True)
def _nb_derive_replica_seed(master, index):
    # message: b"REP1" + int64 LE index, 12 bytes
    words = np.zeros(2, dtype=np.uint64)
    words[0] = _U64(0x31504552) | (_U64(index) << _U64(32))
    words[1] = _U64(index) >> _U64(32)
    return _nb_mm3_words(_U64(master), words, 12)


@njit(cache=True)
def _nb_edge_u_block(seed, bases, axes, out):
    n, d = bases.shape
    words = np.zeros((4 * d + 8) // 8, dtype=np.uint64)
    for i in range(n):
        out[i] = _nb_edge_u_buf(_U64(seed), bases[i], axes[i], d, words)
    return out


@njit(cache=True)
def _nb_replica_seed_block(master, start, out):
    for i in range(out.shape[0]):
        out[i] = _nb_derive_replica_seed(_U64(master), _U64(start + i))
    return out


# ---------------------------------------------------------------------------
# public api


def _check_seed(seed):
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an int, got {type(seed).__name__}")
    if not 0 <= int(seed) < (1 << 64):
        raise ValueError(f"seed must fit an unsigned 64-bit int, got {seed}")
    return int(seed)


@dataclass(frozen=True)
class EdgeConfig:
    """A full percolation configuration: (lattice, edge probability, seed).

    The configuration is never materialized; edge status is evaluated on
    demand through the keyed hash.
    """

    spec: LatticeSpec
    p: float
    seed: int

    def __post_init__(self):
        if not isinstance(self.spec, LatticeSpec):
            raise TypeError("spec must be a LatticeSpec")
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        _check_seed(self.seed)

    def with_p(self, p):
        return EdgeConfig(self.spec, p, self.seed)

    def with_seed(self, seed):
        return EdgeConfig(self.spec, self.p, seed)

    def is_open(self, edge):
        return edge_u(self, edge) < self.p


def edge_u(cfg, edge):
    """Uniform u in [0,1) attached to an edge; open iff u < p.

    The edge may be a canonical (base, axis) id or an endpoint pair.
    Exposing u (not just the boolean) gives the monotone coupling: the
    open set at p is contained in the open set at p' >= p for the same
    seed.
    """
    base, axis = edge
    if isinstance(axis, tuple):
        base, axis = canonical_edge(cfg.spec, base, axis)
    base = cfg.spec.check_point(base)
    axis = cfg.spec.check_axis(axis)
    coords = np.asarray(base, dtype=np.int64)
    return float(_nb_edge_u(np.uint64(cfg.seed), coords, axis, cfg.spec.d))


def edge_is_open(cfg, edge):
    return edge_u(cfg, edge) < cfg.p


def edge_u_array(cfg, bases, axes):
    """Vectorized edge_u over arrays of base points and axes.

    bases: (n, d) integer array, axes: (n,) integer array.  Validation
    is per array, not per edge, so this is the path for bulk checks.
    """
    bases = np.ascontiguousarray(bases, dtype=np.int64)
    axes = np.ascontiguousarray(axes, dtype=np.int64)
    if bases.ndim != 2 or bases.shape[1] != cfg.spec.d:
        raise GeometryError(f"bases must have shape (n, {cfg.spec.d})")
    if axes.shape != (bases.shape[0],):
        raise GeometryError("axes must have shape (n,)")
    r = cfg.spec.working_radius
    if bases.size and (np.abs(bases).max() > r):
        raise GeometryError(f"coordinate out of range: working radius {r}")
    if axes.size and (axes.min() < 0 or axes.max() >= cfg.spec.d):
        raise GeometryError(f"axis out of range for d={cfg.spec.d}")
    out = np.empty(bases.shape[0], dtype=np.float64)
    return _nb_edge_u_block(np.uint64(cfg.seed), bases, axes, out)


def derive_replica_seed(master_seed, index):
    """Per-replica seed from a master seed; distinct tag domain from edges."""
    master = _check_seed(master_seed)
    if index < 0:
        raise ValueError(f"replica index must be >= 0, got {index}")
    return int(_nb_derive_replica_seed(np.uint64(master), np.uint64(index)))


def _edge_u_reference(cfg, edge):
    """Byte-level reference path, for cross-validation in tests."""
    h1, _ = _mm3_bytes(serialize_edge(cfg.spec, edge), cfg.seed)
    return (h1 >> 11) * 2.0**-53
