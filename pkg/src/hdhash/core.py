"""Domain types shared by every encoder, plus the batch containers used for
training.

Single-record embeddings are immutable values.  ``SparseBinaryEmbedding``
keeps only its active coordinates; turning it into a length-``dim`` vector
is always an explicit call to :meth:`SparseBinaryEmbedding.to_dense`.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence, Union

import numpy as np


class HDError(ValueError):
    """Base class for invalid-argument errors raised by this package."""


class DimensionMismatch(HDError):
    pass


@dataclass(frozen=True, order=True)
class Symbol:
    """A categorical token namespaced by the field it came from."""

    field_index: int
    token: bytes

    def __post_init__(self):
        if self.field_index < 0:
            raise HDError(f"field_index must be >= 0, got {self.field_index}")
        if isinstance(self.token, str):
            object.__setattr__(self, "token", self.token.encode("utf-8"))

    def key(self) -> bytes:
        """Bytes fed to the hash functions: 4-byte LE field index + token."""
        return struct.pack("<I", self.field_index) + self.token


@dataclass(frozen=True)
class CategoricalSet:
    symbols: tuple[Symbol, ...] = ()

    def __post_init__(self):
        syms = tuple(self.symbols)
        if len(set(syms)) != len(syms):
            raise HDError("CategoricalSet contains duplicate symbols")
        object.__setattr__(self, "symbols", syms)

    @classmethod
    def from_tokens(cls, tokens: Iterable[Union[bytes, str]]) -> "CategoricalSet":
        """One symbol per field, field index = position."""
        return cls(tuple(Symbol(i, t) for i, t in enumerate(tokens)))

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def keys(self) -> list[bytes]:
        return [s.key() for s in self.symbols]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseBinaryEmbedding:
    dim: int
    active: np.ndarray

    def __post_init__(self):
        active = np.asarray(self.active, dtype=np.int64).ravel()
        if active.size:
            if np.any(np.diff(active) <= 0):
                active = np.unique(active)
            if active[0] < 0 or active[-1] >= self.dim:
                raise HDError(f"active index out of range [0, {self.dim})")
        object.__setattr__(self, "active", _frozen(active.copy()))

    @classmethod
    def from_indices(cls, dim: int, indices: Iterable[int]) -> "SparseBinaryEmbedding":
        return cls(dim, np.unique(np.fromiter(indices, dtype=np.int64)))

    def __len__(self) -> int:
        return int(self.active.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseBinaryEmbedding):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.active, other.active)

    def __hash__(self):
        return hash((self.dim, self.active.tobytes()))

    def to_dense(self) -> "DenseEmbedding":
        values = np.zeros(self.dim, dtype=np.int8)
        values[self.active] = 1
        return DenseEmbedding(self.dim, values, Precision.BINARY)


class Precision(str, Enum):
    BINARY = "binary01"
    SIGNED = "signed"
    INTEGER = "integer"
    REAL = "real"


def _check_precision(values: np.ndarray, precision: Precision) -> None:
    if precision is Precision.BINARY:
        ok = np.all((values == 0) | (values == 1))
    elif precision is Precision.SIGNED:
        ok = np.all(np.abs(values) == 1)
    elif precision is Precision.INTEGER:
        ok = np.all(np.mod(values, 1) == 0)
    else:
        ok = np.all(np.isfinite(values))
    if not ok:
        raise HDError(f"values inconsistent with precision tag {precision.value!r}")


@dataclass(frozen=True, eq=False)
class DenseEmbedding:
    dim: int
    values: np.ndarray
    precision: Precision = Precision.REAL

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1 or values.size != self.dim:
            raise DimensionMismatch(f"expected {self.dim} values, got shape {values.shape}")
        precision = Precision(self.precision)
        _check_precision(values, precision)
        object.__setattr__(self, "precision", precision)
        object.__setattr__(self, "values", _frozen(values.copy()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseEmbedding):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.dim, self.values.tobytes()))

    def to_dense(self) -> "DenseEmbedding":
        return self


Embedding = Union[SparseBinaryEmbedding, DenseEmbedding]


def dot(a: Embedding, b: Embedding) -> float:
    """Inner product of two embeddings.

    Sparse x sparse is the size of the active-set intersection; sparse x
    dense sums the dense values at the active indices.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension mismatch: {a.dim} vs {b.dim}")
    sa = isinstance(a, SparseBinaryEmbedding)
    sb = isinstance(b, SparseBinaryEmbedding)
    if sa and sb:
        return float(np.intersect1d(a.active, b.active, assume_unique=True).size)
    if sa:
        return float(np.sum(b.values[a.active]))
    if sb:
        return float(np.sum(a.values[b.active]))
    return float(np.dot(a.values.astype(np.float64), b.values.astype(np.float64)))


class BundleMethod(str, Enum):
    CONCAT = "concat"
    SUM = "sum"
    THRESHOLDED_SUM = "thresholded_sum"


class HashFamilyKind(str, Enum):
    MURMUR = "seeded-murmur"
    POLYNOMIAL = "polynomial-p-wise"


class NumericEncoderKind(str, Enum):
    DENSE_RP = "dense_rp"
    SJLT_HASH = "sjlt_hash"
    SJLT_RELAXED = "sjlt_relaxed"
    SPARSE_RP_TOPK = "sparse_rp_topk"
    SPARSE_RP_THRESHOLD = "sparse_rp_threshold"


class CategoricalEncoderKind(str, Enum):
    BLOOM = "bloom"
    CODEBOOK = "codebook"
    DENSE_HASH = "dense_hash"


@dataclass(frozen=True)
class EncoderConfig:
    """Every tunable of the encoding pipeline.

    Identical configs applied to identical records give bit-identical
    embeddings; all randomness derives from ``master_seed``.
    """

    d_cat: int = 10_000
    d_num: int = 10_000
    k_hash: int = 4
    k_sparse: int = 100
    hash_family: HashFamilyKind = HashFamilyKind.MURMUR
    independence: int = 2
    master_seed: int = 0
    bundling: BundleMethod = BundleMethod.CONCAT
    categorical_encoder: CategoricalEncoderKind = CategoricalEncoderKind.BLOOM
    numeric_encoder: NumericEncoderKind = NumericEncoderKind.DENSE_RP
    sjlt_blocks: int = 4
    sjlt_sparsity: float = 0.4
    sjlt_quantize: bool = True
    topk_signed: bool = False
    threshold: float | None = None
    numeric_scale: float = 1.0
    n_numeric: int = 13

    def __post_init__(self):
        for name, enum in (
            ("hash_family", HashFamilyKind),
            ("bundling", BundleMethod),
            ("categorical_encoder", CategoricalEncoderKind),
            ("numeric_encoder", NumericEncoderKind),
        ):
            object.__setattr__(self, name, enum(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.d_cat < 1 or self.d_num < 1:
            raise HDError("d_cat and d_num must be >= 1")
        if not 1 <= self.k_hash <= self.d_cat:
            raise HDError(f"k_hash must be in [1, d_cat], got {self.k_hash}")
        if not 1 <= self.k_sparse <= self.d_num:
            raise HDError(f"k_sparse must be in [1, d_num], got {self.k_sparse}")
        if self.numeric_encoder is NumericEncoderKind.SJLT_HASH and self.d_num % self.sjlt_blocks:
            raise HDError(f"d_num={self.d_num} not divisible by sjlt_blocks={self.sjlt_blocks}")
        if not 0.0 < self.sjlt_sparsity <= 1.0:
            raise HDError("sjlt_sparsity must be in (0, 1]")
        if self.independence < 1:
            raise HDError("independence must be >= 1")
        if self.bundling is not BundleMethod.CONCAT and self.d_cat != self.d_num:
            raise HDError("sum bundling requires d_num == d_cat")
        if not 0 <= self.master_seed < 2**64:
            raise HDError("master_seed must be a 64-bit unsigned integer")

    @property
    def output_dim(self) -> int:
        if self.bundling is BundleMethod.CONCAT:
            return self.d_num + self.d_cat
        return self.d_cat

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            out[name] = v.value if isinstance(v, Enum) else v
        return out


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseBatch:
    """Many sparse binary rows in CSR layout (sorted, unique per row)."""

    dim: int
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.indptr.size - 1

    def row(self, i: int) -> SparseBinaryEmbedding:
        return SparseBinaryEmbedding(self.dim, self.indices[self.indptr[i] : self.indptr[i + 1]])

    def rows(self) -> list[SparseBinaryEmbedding]:
        return [self.row(i) for i in range(self.n_rows)]

    def nnz(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_dense(self, dtype=np.int8) -> np.ndarray:
        out = np.zeros((self.n_rows, self.dim), dtype=dtype)
        rows = np.repeat(np.arange(self.n_rows), self.nnz())
        out[rows, self.indices] = 1
        return out

    @classmethod
    def from_rows(cls, dim: int, rows: Sequence[SparseBinaryEmbedding]) -> "SparseBatch":
        lengths = np.array([len(r) for r in rows], dtype=np.int64)
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        indices = np.concatenate([r.active for r in rows]) if rows else np.zeros(0, np.int64)
        return cls(dim, indptr, indices.astype(np.int64))

    @classmethod
    def from_sorted_matrix(cls, dim: int, values: np.ndarray) -> "SparseBatch":
        """Build from an ``(n, w)`` integer matrix, deduplicating each row."""
        n, w = values.shape
        if w == 0:
            return cls(dim, np.zeros(n + 1, np.int64), np.zeros(0, np.int64))
        v = np.sort(values.astype(np.int64), axis=1)
        keep = np.ones_like(v, dtype=bool)
        keep[:, 1:] = v[:, 1:] != v[:, :-1]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(keep.sum(axis=1), out=indptr[1:])
        return cls(dim, indptr, v[keep])


Block = Union[np.ndarray, SparseBatch]


@dataclass(frozen=True, eq=False)
class EmbeddingBatch:
    """A batch of embeddings stored as column blocks.

    Each block is either a dense ``(n, width)`` array or a :class:`SparseBatch`
    placed at a column offset.  Concatenation bundling produces a batch with
    two blocks; the learner only needs :meth:`dot` and :meth:`scatter`.
    """

    dim: int
    blocks: tuple[tuple[int, Block], ...] = field(default=())

    def __post_init__(self):
        n = None
        for offset, b in self.blocks:
            width = b.dim if isinstance(b, SparseBatch) else b.shape[1]
            rows = b.n_rows if isinstance(b, SparseBatch) else b.shape[0]
            if offset < 0 or offset + width > self.dim:
                raise DimensionMismatch("block exceeds batch dimension")
            if n is not None and rows != n:
                raise DimensionMismatch("blocks disagree on row count")
            n = rows
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def n_rows(self) -> int:
        if not self.blocks:
            return 0
        b = self.blocks[0][1]
        return b.n_rows if isinstance(b, SparseBatch) else b.shape[0]

    def __len__(self) -> int:
        return self.n_rows

    @classmethod
    def of(cls, block: Block) -> "EmbeddingBatch":
        dim = block.dim if isinstance(block, SparseBatch) else block.shape[1]
        return cls(dim, ((0, block),))

    @classmethod
    def from_embeddings(cls, embs: Sequence[Embedding]) -> "EmbeddingBatch":
        if not embs:
            raise HDError("empty embedding list")
        dim = embs[0].dim
        if any(e.dim != dim for e in embs):
            raise DimensionMismatch("embeddings disagree on dim")
        if all(isinstance(e, SparseBinaryEmbedding) for e in embs):
            return cls.of(SparseBatch.from_rows(dim, embs))
        dense = np.stack([np.asarray(e.to_dense().values, dtype=np.float64) for e in embs])
        return cls.of(dense)

    def dot(self, theta: np.ndarray) -> np.ndarray:
        """Per-row inner products with a length-``dim`` weight vector."""
        out = np.zeros(self.n_rows, dtype=np.float64)
        for offset, b in self.blocks:
            if isinstance(b, SparseBatch):
                row_ids = np.repeat(np.arange(b.n_rows), b.nnz())
                out += np.bincount(row_ids, weights=theta[offset + b.indices], minlength=b.n_rows)
            else:
                out += b @ theta[offset : offset + b.shape[1]]
        return out

    def scatter(self, coefs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``sum_i coefs[i] * row_i`` as (indices, values).

        Only coordinates of sparse blocks that are active in some row appear,
        so a sparse row touches just its active set.
        """
        idx_parts, val_parts = [], []
        for offset, b in self.blocks:
            if isinstance(b, SparseBatch):
                if b.indices.size == 0:
                    continue
                w = np.repeat(coefs, b.nnz())
                uniq, inv = np.unique(b.indices, return_inverse=True)
                idx_parts.append(uniq + offset)
                val_parts.append(np.bincount(inv, weights=w, minlength=uniq.size))
            else:
                idx_parts.append(np.arange(offset, offset + b.shape[1]))
                val_parts.append(coefs @ b)
        if not idx_parts:
            return np.zeros(0, np.int64), np.zeros(0)
        return np.concatenate(idx_parts), np.concatenate(val_parts)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.dim))
        for offset, b in self.blocks:
            if isinstance(b, SparseBatch):
                out[:, offset : offset + b.dim] += b.to_dense(np.float64)
            else:
                out[:, offset : offset + b.shape[1]] += b
        return out

    def row(self, i: int) -> Embedding:
        if len(self.blocks) == 1 and self.blocks[0][0] == 0:
            b = self.blocks[0][1]
            if isinstance(b, SparseBatch) and b.dim == self.dim:
                return b.row(i)
        return DenseEmbedding(self.dim, self.to_dense_row(i))

    def to_dense_row(self, i: int) -> np.ndarray:
        out = np.zeros(self.dim)
        for offset, b in self.blocks:
            if isinstance(b, SparseBatch):
                out[offset + b.indices[b.indptr[i] : b.indptr[i + 1]]] += 1
            else:
                out[offset : offset + b.shape[1]] += b[i]
        return out

    def take(self, rows: np.ndarray) -> "EmbeddingBatch":
        """Row subset, keeping block layout."""
        rows = np.asarray(rows, dtype=np.int64)
        blocks = []
        for offset, b in self.blocks:
            if isinstance(b, SparseBatch):
                parts = [b.indices[b.indptr[r] : b.indptr[r + 1]] for r in rows]
                lengths = np.array([p.size for p in parts], dtype=np.int64)
                indptr = np.zeros(rows.size + 1, dtype=np.int64)
                np.cumsum(lengths, out=indptr[1:])
                idx = np.concatenate(parts) if parts else np.zeros(0, np.int64)
                blocks.append((offset, SparseBatch(b.dim, indptr, idx)))
            else:
                blocks.append((offset, b[rows]))
        return EmbeddingBatch(self.dim, tuple(blocks))
