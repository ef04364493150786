"""Combine numeric and categorical embeddings into one vector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hdhash.core import (
    BundleMethod,
    DenseEmbedding,
    DimensionMismatch,
    Embedding,
    EmbeddingBatch,
    Precision,
    SparseBatch,
    SparseBinaryEmbedding,
)


@dataclass(frozen=True)
class BundleSpec:
    method: BundleMethod
    dim_num: int
    dim_cat: int

    def __post_init__(self):
        object.__setattr__(self, "method", BundleMethod(self.method))
        if self.method is not BundleMethod.CONCAT and self.dim_num != self.dim_cat:
            raise DimensionMismatch(f"{self.method.value} bundling needs equal dims, got {self.dim_num} and {self.dim_cat}")

    @property
    def dim(self) -> int:
        if self.method is BundleMethod.CONCAT:
            return self.dim_num + self.dim_cat
        return self.dim_num


def _values(e: Embedding) -> np.ndarray:
    return e.to_dense().values


def _concat_precision(a: DenseEmbedding, b: DenseEmbedding) -> Precision:
    if a.precision == b.precision:
        return a.precision
    if {a.precision, b.precision} <= {Precision.BINARY, Precision.SIGNED, Precision.INTEGER}:
        return Precision.INTEGER
    return Precision.REAL


def bundle(spec: BundleSpec, a: Embedding, b: Embedding) -> Embedding:
    """Bundle ``a`` (numeric) and ``b`` (categorical) per ``spec``.

    Sparse inputs stay sparse for concat and for thresholded sum; the plain
    sum is always returned dense.
    """
    if a.dim != spec.dim_num or b.dim != spec.dim_cat:
        raise DimensionMismatch(f"expected dims ({spec.dim_num}, {spec.dim_cat}), got ({a.dim}, {b.dim})")
    sparse = isinstance(a, SparseBinaryEmbedding) and isinstance(b, SparseBinaryEmbedding)
    if spec.method is BundleMethod.CONCAT:
        if sparse:
            return SparseBinaryEmbedding(spec.dim, np.concatenate([a.active, b.active + a.dim]))
        da, db = a.to_dense(), b.to_dense()
        return DenseEmbedding(spec.dim, np.concatenate([da.values.astype(np.float64), db.values.astype(np.float64)]), _concat_precision(da, db))
    if spec.method is BundleMethod.THRESHOLDED_SUM:
        if sparse:
            return SparseBinaryEmbedding(spec.dim, np.union1d(a.active, b.active))
        values = np.minimum(_values(a).astype(np.float64) + _values(b), 1.0)
        binary = np.all((values == 0) | (values == 1))
        return DenseEmbedding(spec.dim, values, Precision.BINARY if binary else Precision.REAL)
    values = _values(a).astype(np.float64) + _values(b)
    integral = np.all(np.mod(values, 1) == 0)
    return DenseEmbedding(spec.dim, values, Precision.INTEGER if integral else Precision.REAL)


def _union_rows(a: SparseBatch, b: SparseBatch) -> SparseBatch:
    n = a.n_rows
    ra = np.repeat(np.arange(n, dtype=np.int64), a.nnz())
    rb = np.repeat(np.arange(n, dtype=np.int64), b.nnz())
    keys = np.union1d(ra * a.dim + a.indices, rb * b.dim + b.indices)
    rows = keys // a.dim
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return SparseBatch(a.dim, indptr, keys % a.dim)


def _as_dense(block) -> np.ndarray:
    return block.to_dense(np.float64) if isinstance(block, SparseBatch) else np.asarray(block, dtype=np.float64)


def bundle_batch(spec: BundleSpec, a, b) -> EmbeddingBatch:
    """Batch form of :func:`bundle`; ``a`` and ``b`` are dense arrays or :class:`SparseBatch`."""
    wa = a.dim if isinstance(a, SparseBatch) else a.shape[1]
    wb = b.dim if isinstance(b, SparseBatch) else b.shape[1]
    if wa != spec.dim_num or wb != spec.dim_cat:
        raise DimensionMismatch(f"expected dims ({spec.dim_num}, {spec.dim_cat}), got ({wa}, {wb})")
    if spec.method is BundleMethod.CONCAT:
        return EmbeddingBatch(spec.dim, ((0, a), (spec.dim_num, b)))
    if spec.method is BundleMethod.THRESHOLDED_SUM:
        if isinstance(a, SparseBatch) and isinstance(b, SparseBatch):
            return EmbeddingBatch.of(_union_rows(a, b))
        return EmbeddingBatch.of(np.minimum(_as_dense(a) + _as_dense(b), 1.0))
    return EmbeddingBatch.of(_as_dense(a) + _as_dense(b))
