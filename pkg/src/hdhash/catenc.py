"""Categorical encoders.

* :class:`Codebook` -- lazily sampled random +-1 codewords (the baseline whose
  memory grows with the alphabet).
* :func:`permutation_encode_symbol` -- cyclic shifts of one base codeword.
* :class:`DenseHashEncoder` -- +-1 codewords computed from ``d`` sign hashes.
* :class:`BloomEncoder` -- ``k`` bucket hashes per symbol, OR-bundled into a
  sparse binary vector.
"""
from __future__ import annotations

import threading
from typing import Sequence

import numpy as np

from hdhash.core import (
    CategoricalSet,
    DenseEmbedding,
    HashFamilyKind,
    HDError,
    Precision,
    SparseBatch,
    SparseBinaryEmbedding,
    Symbol,
    dot,
)
from hdhash.hashing import HashFamilyDraw, derive_seed, draw_family, murmur3_32, pack_keys


def _set_keys(sets: Sequence[CategoricalSet]) -> tuple[list[bytes], np.ndarray]:
    keys = [k for x in sets for k in x.keys()]
    counts = np.fromiter((len(x) for x in sets), dtype=np.int64, count=len(sets))
    return keys, counts


class Codebook:
    """Symbol -> +-1 codeword table, populated on first touch.

    Codewords are drawn from a generator seeded by ``(master_seed, symbol)``,
    so they do not depend on insertion order.  Rows live in fixed-size int8
    blocks, which keeps allocated memory linear in the number of entries.
    """

    def __init__(self, dim: int, master_seed: int = 0, block_rows: int = 4096):
        if dim < 1:
            raise HDError("dim must be >= 1")
        self.dim = dim
        self.master_seed = master_seed
        self.block_rows = block_rows
        self._index: dict[bytes, int] = {}
        self._blocks: list[np.ndarray] = []
        self._lock = threading.Lock()
        self._salt = (derive_seed(master_seed, "codebook", 0), derive_seed(master_seed, "codebook", 1))

    @property
    def entry_count(self) -> int:
        return len(self._index)

    def __len__(self) -> int:
        return self.entry_count

    def __contains__(self, sym: Symbol) -> bool:
        return sym.key() in self._index

    @property
    def nbytes(self) -> int:
        """Bytes held by codeword storage (allocated blocks)."""
        return sum(b.nbytes for b in self._blocks)

    def _sample(self, key: bytes) -> np.ndarray:
        seed = [self.master_seed, murmur3_32(key, self._salt[0]), murmur3_32(key, self._salt[1])]
        rng = np.random.default_rng(seed)
        return (rng.integers(0, 2, size=self.dim, dtype=np.int8) * 2 - 1).astype(np.int8)

    def _row(self, key: bytes) -> int:
        row = self._index.get(key)
        if row is not None:
            return row
        with self._lock:
            row = self._index.get(key)
            if row is None:
                row = len(self._index)
                b, r = divmod(row, self.block_rows)
                if b == len(self._blocks):
                    self._blocks.append(np.empty((self.block_rows, self.dim), dtype=np.int8))
                self._blocks[b][r] = self._sample(key)
                self._index[key] = row
        return row

    def codeword(self, sym: Symbol) -> np.ndarray:
        b, r = divmod(self._row(sym.key()), self.block_rows)
        return self._blocks[b][r]

    def encode_symbol(self, sym: Symbol) -> DenseEmbedding:
        return DenseEmbedding(self.dim, self.codeword(sym), Precision.SIGNED)

    def encode_set(self, x: CategoricalSet) -> DenseEmbedding:
        return DenseEmbedding(self.dim, self.encode_batch([x])[0], Precision.INTEGER)

    def encode_batch(self, sets: Sequence[CategoricalSet]) -> np.ndarray:
        """Element-wise codeword sums, shape ``(len(sets), dim)`` int32."""
        out = np.zeros((len(sets), self.dim), dtype=np.int32)
        for i, x in enumerate(sets):
            for sym in x:
                b, r = divmod(self._row(sym.key()), self.block_rows)
                out[i] += self._blocks[b][r]
        return out

    def matrix(self) -> np.ndarray:
        """All codewords in insertion order, ``(entry_count, dim)``."""
        if not self._blocks:
            return np.zeros((0, self.dim), dtype=np.int8)
        return np.concatenate(self._blocks)[: self.entry_count]


def codebook_encode_set(cb: Codebook, x: CategoricalSet) -> DenseEmbedding:
    return cb.encode_set(x)


def permutation_encode_symbol(base: DenseEmbedding, j: int) -> DenseEmbedding:
    """Cyclic right shift of ``base`` by ``j mod d`` positions."""
    if j < 0:
        raise HDError("symbol ordinal must be >= 0")
    return DenseEmbedding(base.dim, np.roll(base.values, j % base.dim), base.precision)


class PermutationEncoder:
    """Benchmark baseline: the ``j``-th distinct symbol gets ``shift(base, j)``.

    The ordinal table still grows with the alphabet and ``d >= m`` is not
    enforced, so distinct symbols past ``d`` reuse codewords.
    """

    def __init__(self, dim: int, master_seed: int = 0):
        rng = np.random.default_rng([master_seed, derive_seed(master_seed, "permutation", 0)])
        self.base = DenseEmbedding(dim, rng.integers(0, 2, size=dim, dtype=np.int8) * 2 - 1, Precision.SIGNED)
        self._ordinals: dict[bytes, int] = {}
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self.base.dim

    def ordinal(self, sym: Symbol) -> int:
        key = sym.key()
        j = self._ordinals.get(key)
        if j is None:
            with self._lock:
                j = self._ordinals.setdefault(key, len(self._ordinals))
        return j

    def encode_symbol(self, sym: Symbol) -> DenseEmbedding:
        return permutation_encode_symbol(self.base, self.ordinal(sym))

    def encode_set(self, x: CategoricalSet) -> DenseEmbedding:
        return DenseEmbedding(self.dim, self.encode_batch([x])[0], Precision.INTEGER)

    def encode_batch(self, sets: Sequence[CategoricalSet]) -> np.ndarray:
        out = np.zeros((len(sets), self.dim), dtype=np.int32)
        for i, x in enumerate(sets):
            for sym in x:
                out[i] += np.roll(self.base.values, self.ordinal(sym) % self.dim)
        return out


class DenseHashEncoder:
    """+-1 codewords from ``dim`` independent sign hashes; nothing is stored."""

    def __init__(self, dim: int, master_seed: int = 0, family=HashFamilyKind.MURMUR, p: int = 2):
        self.dim = dim
        self.family: HashFamilyDraw = draw_family(master_seed, "dense-hash", dim, 2, family, p)

    def signs(self, keys: Sequence[bytes]) -> np.ndarray:
        return self.family.signs(keys)

    def encode_symbol(self, sym: Symbol) -> DenseEmbedding:
        return DenseEmbedding(self.dim, self.signs([sym.key()])[0], Precision.SIGNED)

    def encode_set(self, x: CategoricalSet) -> DenseEmbedding:
        return DenseEmbedding(self.dim, self.encode_batch([x])[0], Precision.INTEGER)

    def encode_batch(self, sets: Sequence[CategoricalSet]) -> np.ndarray:
        keys, counts = _set_keys(sets)
        out = np.zeros((len(sets), self.dim), dtype=np.int32)
        if not keys:
            return out
        rows = np.repeat(np.arange(len(sets)), counts)
        np.add.at(out, rows, self.signs(keys).astype(np.int32))
        return out


def dense_hash_encode_symbol(enc: DenseHashEncoder, a: Symbol) -> DenseEmbedding:
    return enc.encode_symbol(a)


class BloomEncoder:
    """Sparse binary set encoder built from ``k`` bucket hashes into ``[d]``.

    State is the ``k`` seeds (or coefficient lists); it does not grow with the
    number of symbols seen.
    """

    def __init__(self, dim: int, k: int, master_seed: int = 0, family=HashFamilyKind.MURMUR, p: int = 2):
        if not 1 <= k:
            raise HDError("k must be >= 1")
        self.dim = dim
        self.k = k
        self.hashes: HashFamilyDraw = draw_family(master_seed, "bloom", k, dim, family, p)

    def state_size(self) -> int:
        return self.hashes.state_size()

    def encode_symbol(self, sym: Symbol) -> SparseBinaryEmbedding:
        return SparseBinaryEmbedding(self.dim, np.unique(self.hashes.buckets([sym.key()])[0]))

    def encode_set(self, x: CategoricalSet) -> SparseBinaryEmbedding:
        return self.encode_batch([x]).row(0)

    def encode_keys(self, keys, counts: np.ndarray) -> SparseBatch:
        """Encode pre-packed symbol keys; ``counts[i]`` keys belong to row ``i``."""
        n = counts.size
        if counts.size and np.all(counts == counts[0]):
            width = int(counts[0])
            b = self.hashes.buckets(keys).reshape(n, width * self.k) if width else np.zeros((n, 0), np.int64)
            return SparseBatch.from_sorted_matrix(self.dim, b)
        b = self.hashes.buckets(keys)
        rows = np.repeat(np.arange(n), counts * self.k)
        flat = b.ravel()
        order = np.lexsort((flat, rows))
        rows, flat = rows[order], flat[order]
        keep = np.ones(flat.size, dtype=bool)
        keep[1:] = (flat[1:] != flat[:-1]) | (rows[1:] != rows[:-1])
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows[keep], minlength=n), out=indptr[1:])
        return SparseBatch(self.dim, indptr, flat[keep])

    def encode_batch(self, sets: Sequence[CategoricalSet]) -> SparseBatch:
        keys, counts = _set_keys(sets)
        if not keys:
            return SparseBatch(self.dim, np.zeros(len(sets) + 1, np.int64), np.zeros(0, np.int64))
        packed = pack_keys(keys) if self.hashes.family is HashFamilyKind.MURMUR else keys
        return self.encode_keys(packed, counts)


def bloom_encode_symbol(enc: BloomEncoder, a: Symbol) -> SparseBinaryEmbedding:
    return enc.encode_symbol(a)


def bloom_encode_set(enc: BloomEncoder, x: CategoricalSet) -> SparseBinaryEmbedding:
    return enc.encode_set(x)


def bloom_member(enc: BloomEncoder, a: Symbol, set_emb: SparseBinaryEmbedding) -> bool:
    """Approximate membership: all of ``a``'s bits are set in ``set_emb``.

    Uses the thresholded dot product ``phi(a) . phi(x) >= k``; when ``a``'s own
    hashes collide it has fewer than ``k`` bits, so the threshold drops to its
    bit count (otherwise members could be rejected).
    """
    sym = enc.encode_symbol(a)
    return dot(sym, set_emb) >= min(enc.k, len(sym))


def bloom_intersection_estimate(
    e1: SparseBinaryEmbedding, e2: SparseBinaryEmbedding, k: int, s: int, d: int
) -> float:
    """Bias-corrected estimate of ``|x & x'|``: ``dot / k - s**2 k / (2d)``."""
    return dot(e1, e2) / k - s * s * k / (2.0 * d)


def bloom_intersection_batch(a: SparseBatch, b: SparseBatch, k: int, s: int) -> np.ndarray:
    """Row-wise :func:`bloom_intersection_estimate` for two aligned batches."""
    return sparse_row_dots(a, b) / k - s * s * k / (2.0 * a.dim)


def sparse_row_dots(a: SparseBatch, b: SparseBatch) -> np.ndarray:
    """Row-wise intersection sizes of two aligned sparse batches."""
    if a.n_rows != b.n_rows or a.dim != b.dim:
        raise HDError("batches must be aligned")
    n = a.n_rows
    ra = np.repeat(np.arange(n, dtype=np.int64), a.nnz())
    rb = np.repeat(np.arange(n, dtype=np.int64), b.nnz())
    ka = ra * a.dim + a.indices
    kb = rb * b.dim + b.indices
    common = np.intersect1d(ka, kb, assume_unique=True)
    return np.bincount(common // a.dim, minlength=n).astype(np.float64)
