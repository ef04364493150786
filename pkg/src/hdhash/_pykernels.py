"""Numpy implementations of the hashing kernels.

Used when the compiled extension is unavailable or disabled.  Keys are
grouped by length so every Murmur3 round runs vectorized over all keys of
that length.
"""
from __future__ import annotations

import numpy as np

BACKEND = "numpy"

P61 = (1 << 61) - 1

_C1 = np.uint32(0xCC9E2D51)
_C2 = np.uint32(0x1B873593)
_M5 = np.uint32(5)
_N1 = np.uint32(0xE6546B64)
_F1 = np.uint32(0x85EBCA6B)
_F2 = np.uint32(0xC2B2AE35)


def _rotl(x, r):
    return (x << np.uint32(r)) | (x >> np.uint32(32 - r))


def _mix_k(k):
    k = k * _C1
    k = _rotl(k, 15)
    return k * _C2


def _murmur_block(block: np.ndarray, h: np.ndarray, expand: bool) -> np.ndarray:
    """Run Murmur3 over equal-length keys ``block`` (rows) with seeds ``h``."""
    length = block.shape[1]
    b = block.astype(np.uint32)
    h = h.copy()
    nblocks = length // 4
    for i in range(nblocks):
        c = 4 * i
        k = b[:, c] | (b[:, c + 1] << np.uint32(8)) | (b[:, c + 2] << np.uint32(16)) | (b[:, c + 3] << np.uint32(24))
        if expand:
            k = k[:, None]
        h ^= _mix_k(k)
        h = _rotl(h, 13)
        h = h * _M5 + _N1
    tail = length & 3
    if tail:
        c = 4 * nblocks
        k = np.zeros(b.shape[0], dtype=np.uint32)
        if tail >= 3:
            k ^= b[:, c + 2] << np.uint32(16)
        if tail >= 2:
            k ^= b[:, c + 1] << np.uint32(8)
        k ^= b[:, c]
        if expand:
            k = k[:, None]
        h ^= _mix_k(k)
    h ^= np.uint32(length & 0xFFFFFFFF)
    h ^= h >> np.uint32(16)
    h *= _F1
    h ^= h >> np.uint32(13)
    h *= _F2
    h ^= h >> np.uint32(16)
    return h


def murmur3_32(data, seed: int = 0) -> int:
    """Murmur3 x86 32-bit hash of ``data`` (bytes-like) as an unsigned int."""
    key = bytes(data)
    buf = np.frombuffer(key, dtype=np.uint8)
    offsets = np.array([0, len(key)], dtype=np.int64)
    return int(hash_matrix(buf, offsets, np.array([seed], dtype=np.uint32))[0, 0])


def _groups(offsets: np.ndarray):
    lengths = np.diff(offsets)
    for length in np.unique(lengths):
        rows = np.flatnonzero(lengths == length)
        yield int(length), rows


def _gather(buf: np.ndarray, offsets: np.ndarray, rows: np.ndarray, length: int) -> np.ndarray:
    if length == 0:
        return np.zeros((rows.size, 0), dtype=np.uint8)
    return buf[offsets[rows][:, None] + np.arange(length)]


def hash_matrix(buf: np.ndarray, offsets: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Hash every key with every seed; returns ``uint32[n_keys, n_seeds]``."""
    buf = np.asarray(buf, dtype=np.uint8)
    offsets = np.asarray(offsets, dtype=np.int64)
    seeds = np.asarray(seeds, dtype=np.uint32)
    n = offsets.size - 1
    out = np.empty((n, seeds.size), dtype=np.uint32)
    for length, rows in _groups(offsets):
        block = _gather(buf, offsets, rows, length)
        h = np.broadcast_to(seeds, (rows.size, seeds.size))
        out[rows] = _murmur_block(block, h, expand=True)
    return out


def hash_paired(buf: np.ndarray, offsets: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Hash key ``i`` with seed ``i``; returns ``uint32[n_keys]``."""
    buf = np.asarray(buf, dtype=np.uint8)
    offsets = np.asarray(offsets, dtype=np.int64)
    seeds = np.asarray(seeds, dtype=np.uint32)
    n = offsets.size - 1
    if seeds.size != n:
        raise ValueError("need one seed per key")
    out = np.empty(n, dtype=np.uint32)
    for length, rows in _groups(offsets):
        block = _gather(buf, offsets, rows, length)
        out[rows] = _murmur_block(block, seeds[rows], expand=False)
    return out


_LOW29 = np.uint64((1 << 29) - 1)
_LOW32 = np.uint64(0xFFFFFFFF)
_P = np.uint64(P61)


def _reduce61(x: np.ndarray) -> np.ndarray:
    x = (x & _P) + (x >> np.uint64(61))
    return np.where(x >= _P, x - _P, x)


def mulmod61(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a * b mod 2**61 - 1`` for uint64 arrays with entries below the prime."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    a1, a0 = a >> np.uint64(32), a & _LOW32
    b1, b0 = b >> np.uint64(32), b & _LOW32
    # 2**64 == 8 and 2**61 == 1 modulo the prime.
    high = (a1 * b1) << np.uint64(3)
    mid = a1 * b0 + a0 * b1
    mid_term = (mid >> np.uint64(29)) + ((mid & _LOW29) << np.uint64(32))
    low = _reduce61(a0 * b0)
    return _reduce61(_reduce61(high + mid_term) + low)


def poly_hash(xs: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Evaluate ``sum_j c[f, j] * x**j mod 2**61 - 1`` for every (x, f)."""
    xs = np.asarray(xs, dtype=np.uint64)[:, None]
    coeffs = np.asarray(coeffs, dtype=np.uint64)
    acc = np.zeros((xs.shape[0], coeffs.shape[0]), dtype=np.uint64)
    for j in range(coeffs.shape[1] - 1, -1, -1):
        acc = _reduce61(mulmod61(acc, xs) + coeffs[:, j][None, :])
    return acc
