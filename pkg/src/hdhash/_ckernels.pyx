# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hashing kernels.

Byte strings are passed packed: one contiguous ``uint8`` buffer plus an
``int64`` offsets array of length ``n + 1``.  Every function here has a
numpy twin in :mod:`hdhash._pykernels` with an identical signature.
"""
from libc.stdint cimport int64_t, uint8_t, uint32_t, uint64_t

import numpy as np

cdef extern from *:
    """
    static inline uint64_t hd_mulmod61(uint64_t a, uint64_t b) {
        unsigned __int128 z = (unsigned __int128)a * b;
        uint64_t lo = (uint64_t)(z & 0x1FFFFFFFFFFFFFFFULL);
        uint64_t hi = (uint64_t)(z >> 61);
        uint64_t r = lo + hi;
        if (r >= 0x1FFFFFFFFFFFFFFFULL) r -= 0x1FFFFFFFFFFFFFFFULL;
        return r;
    }
    """
    uint64_t hd_mulmod61(uint64_t a, uint64_t b) nogil

BACKEND = "cython"

cdef uint64_t P61 = 0x1FFFFFFFFFFFFFFF
cdef uint32_t C1 = 0xCC9E2D51
cdef uint32_t C2 = 0x1B873593
cdef uint32_t N1 = 0xE6546B64
cdef uint32_t F1 = 0x85EBCA6B
cdef uint32_t F2 = 0xC2B2AE35


cdef inline uint32_t _rotl32(uint32_t x, int r) noexcept nogil:
    return (x << r) | (x >> (32 - r))


cdef inline uint32_t _fmix32(uint32_t h) noexcept nogil:
    h ^= h >> 16
    h *= F1
    h ^= h >> 13
    h *= F2
    h ^= h >> 16
    return h


cdef uint32_t _murmur3_32(const uint8_t* data, Py_ssize_t n, uint32_t seed) noexcept nogil:
    cdef uint32_t c1 = C1
    cdef uint32_t c2 = C2
    cdef uint32_t h = seed
    cdef uint32_t k
    cdef Py_ssize_t nblocks = n // 4
    cdef Py_ssize_t i
    cdef const uint8_t* p
    for i in range(nblocks):
        p = data + 4 * i
        k = (<uint32_t>p[0]) | (<uint32_t>p[1] << 8) | (<uint32_t>p[2] << 16) | (<uint32_t>p[3] << 24)
        k *= c1
        k = _rotl32(k, 15)
        k *= c2
        h ^= k
        h = _rotl32(h, 13)
        h = h * 5 + N1
    p = data + 4 * nblocks
    k = 0
    cdef Py_ssize_t tail = n & 3
    if tail >= 3:
        k ^= <uint32_t>p[2] << 16
    if tail >= 2:
        k ^= <uint32_t>p[1] << 8
    if tail >= 1:
        k ^= <uint32_t>p[0]
        k *= c1
        k = _rotl32(k, 15)
        k *= c2
        h ^= k
    h ^= <uint32_t>n
    return _fmix32(h)


def murmur3_32(data, uint32_t seed=0):
    """Murmur3 x86 32-bit hash of ``data`` (bytes-like) as an unsigned int."""
    cdef const uint8_t[::1] view = memoryview(bytes(data)).cast("B")
    cdef Py_ssize_t n = view.shape[0]
    if n == 0:
        return _murmur3_32(NULL, 0, seed)
    return _murmur3_32(&view[0], n, seed)


def hash_matrix(const uint8_t[::1] buf, const int64_t[::1] offsets, const uint32_t[::1] seeds):
    """Hash every key with every seed; returns ``uint32[n_keys, n_seeds]``."""
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t k = seeds.shape[0]
    out = np.empty((n, k), dtype=np.uint32)
    cdef uint32_t[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef const uint8_t* base = &buf[0] if buf.shape[0] > 0 else NULL
    with nogil:
        for i in range(n):
            for j in range(k):
                o[i, j] = _murmur3_32(base + offsets[i], offsets[i + 1] - offsets[i], seeds[j])
    return out


def hash_paired(const uint8_t[::1] buf, const int64_t[::1] offsets, const uint32_t[::1] seeds):
    """Hash key ``i`` with seed ``i``; returns ``uint32[n_keys]``."""
    cdef Py_ssize_t n = offsets.shape[0] - 1
    if seeds.shape[0] != n:
        raise ValueError("need one seed per key")
    out = np.empty(n, dtype=np.uint32)
    cdef uint32_t[::1] o = out
    cdef Py_ssize_t i
    cdef const uint8_t* base = &buf[0] if buf.shape[0] > 0 else NULL
    with nogil:
        for i in range(n):
            o[i] = _murmur3_32(base + offsets[i], offsets[i + 1] - offsets[i], seeds[i])
    return out


def poly_hash(const uint64_t[::1] xs, const uint64_t[:, ::1] coeffs):
    """Evaluate ``sum_j c[f, j] * x**j mod 2**61 - 1`` for every (x, f).

    ``xs`` must already be reduced below the prime.  Returns ``uint64[n, k]``.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t k = coeffs.shape[0]
    cdef Py_ssize_t p = coeffs.shape[1]
    out = np.empty((n, k), dtype=np.uint64)
    cdef uint64_t[:, ::1] o = out
    cdef Py_ssize_t i, f, j
    cdef uint64_t acc, x
    with nogil:
        for i in range(n):
            x = xs[i]
            for f in range(k):
                acc = 0
                # Horner from the highest-order coefficient down.
                for j in range(p - 1, -1, -1):
                    acc = hd_mulmod61(acc, x) + coeffs[f, j]
                    if acc >= P61:
                        acc -= P61
                o[i, f] = acc
    return out
