"""Numeric encoders based on random projection.

Conventions used throughout: ``sign(0) = +1``; top-k selection and the
threshold rule both act on ``|z|``; ties in top-k go to the lowest index.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hdhash.core import DenseEmbedding, DimensionMismatch, HDError, Precision, SparseBatch, SparseBinaryEmbedding
from hdhash.hashing import HashFamilyKind, derive_seed64, draw_family


def sign(z: np.ndarray) -> np.ndarray:
    """Elementwise sign with ``sign(0) = +1``, as int8."""
    return np.where(np.asarray(z) >= 0, 1, -1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """A ``(d, n)`` projection matrix.

    ``kind == "dense"`` rows are uniform on the unit sphere; ``kind ==
    "ternary"`` entries are +1/-1 with probability p/2 each and 0 otherwise.
    """

    values: np.ndarray
    kind: str
    seed: int
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("dense", "ternary"):
            raise HDError(f"unknown projection kind {self.kind!r}")
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise HDError("projection matrix must be 2-D")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @classmethod
    def dense(cls, d: int, n: int, seed: int = 0) -> "ProjectionMatrix":
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((d, n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return cls(g, "dense", seed)

    @classmethod
    def ternary(cls, d: int, n: int, p: float, seed: int = 0) -> "ProjectionMatrix":
        if not 0.0 < p <= 1.0:
            raise HDError("sparsity p must be in (0, 1]")
        rng = np.random.default_rng(seed)
        u = rng.random((d, n))
        m = np.zeros((d, n), dtype=np.int8)
        m[u < p / 2] = 1
        m[(u >= p / 2) & (u < p)] = -1
        return cls(m, "ternary", seed, p)

    def project(self, x: np.ndarray) -> np.ndarray:
        """``z = M x`` for one vector, or ``Z = X M^T`` for an ``(B, n)`` batch."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n:
            raise DimensionMismatch(f"input has {x.shape[-1]} features, matrix expects {self.n}")
        return x @ self.values.T


def matrix_seed(master_seed: int, role: str) -> int:
    return derive_seed64(master_seed, role, 0)


def dense_rp_encode(M: ProjectionMatrix, x: np.ndarray) -> DenseEmbedding:
    """``sign(M x)``."""
    return DenseEmbedding(M.d, sign(M.project(x)), Precision.SIGNED)


def dense_rp_batch(M: ProjectionMatrix, X: np.ndarray) -> np.ndarray:
    return sign(M.project(X))


class SjltHashEncoder:
    """Sparse JL transform from per-block sign and bucket hashes.

    Block ``j`` sends feature ``f`` to bucket ``eta_j(f)`` of width ``d/k``
    with sign ``sigma_j(f)``; the ``k`` blocks are concatenated and scaled by
    ``1/sqrt(k)`` so squared norms are preserved in expectation.
    """

    def __init__(self, d: int, n: int, k: int, master_seed: int = 0, family=HashFamilyKind.MURMUR, p: int = 2):
        if k < 1 or d % k:
            raise HDError(f"d={d} must be divisible by the block count k={k}")
        self.d, self.n, self.k = d, n, k
        self.width = d // k
        features = list(range(n))
        signs = draw_family(master_seed, "sjlt-sign", k, 2, family, p)
        buckets = draw_family(master_seed, "sjlt-bucket", k, self.width, family, p)
        # (k, n) tables; n is the small numeric width, so tabulating is cheap.
        self.signs = signs.signs(features).T.astype(np.float64)
        self.buckets = buckets.buckets(features).T
        self.columns = self.buckets + (np.arange(k) * self.width)[:, None]

    def encode(self, x: np.ndarray) -> DenseEmbedding:
        return DenseEmbedding(self.d, self.encode_batch(np.asarray(x)[None, :])[0], Precision.REAL)

    def encode_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.n:
            raise DimensionMismatch(f"input has {X.shape[1]} features, encoder expects {self.n}")
        out = np.zeros((X.shape[0], self.d))
        for j in range(self.k):
            for f in range(self.n):
                out[:, self.columns[j, f]] += self.signs[j, f] * X[:, f]
        return out / np.sqrt(self.k)


def sjlt_hash_encode(enc: SjltHashEncoder, x: np.ndarray) -> DenseEmbedding:
    return enc.encode(x)


def sjlt_relaxed_encode(M: ProjectionMatrix, x: np.ndarray, quantize: bool = True) -> DenseEmbedding:
    """``M x`` with a ternary ``M``; with ``quantize`` the output is ``sign(M x)``."""
    z = M.project(x)
    if quantize:
        return DenseEmbedding(M.d, sign(z), Precision.SIGNED)
    return DenseEmbedding(M.d, z, Precision.REAL)


def _topk_row(a: np.ndarray, k: int) -> np.ndarray:
    # Stable sort on -|z| keeps the lowest index first among equal values.
    return np.sort(np.argsort(-a, kind="stable")[:k])


def topk_indices(absz: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the ``k`` largest entries per row, ties to lowest index.

    Returns a sorted ``(B, k)`` int64 array.
    """
    B, d = absz.shape
    if not 1 <= k <= d:
        raise HDError(f"k must be in [1, {d}], got {k}")
    if k == d:
        return np.broadcast_to(np.arange(d), (B, d)).copy()
    part = np.argpartition(-absz, k - 1, axis=1)[:, :k]
    kth = np.take_along_axis(absz, part, axis=1).min(axis=1)
    out = np.sort(part, axis=1)
    # argpartition picks arbitrarily among values equal to the k-th; redo those rows.
    ties = np.flatnonzero((absz == kth[:, None]).sum(axis=1) > 1)
    for r in ties:
        out[r] = _topk_row(absz[r], k)
    return out.astype(np.int64)


def _scores(z: np.ndarray, signed: bool) -> np.ndarray:
    return z if signed else np.abs(z)


def sparse_rp_topk(M: ProjectionMatrix, x: np.ndarray, k: int, signed: bool = False) -> SparseBinaryEmbedding:
    """Active set = indices of the ``k`` largest ``|z_i|`` (or ``z_i`` with ``signed``).

    Absolute selection matches the threshold variant but maps ``x`` and
    ``-x`` to the same code; signed selection keeps them apart.
    """
    if not 1 <= k <= M.d:
        raise HDError(f"k must be in [1, {M.d}], got {k}")
    scores = _scores(M.project(x), signed)[None, :]
    return SparseBinaryEmbedding(M.d, topk_indices(scores, k)[0])


def sparse_rp_topk_batch(M: ProjectionMatrix, X: np.ndarray, k: int, signed: bool = False) -> SparseBatch:
    idx = topk_indices(_scores(M.project(X), signed), k)
    indptr = np.arange(idx.shape[0] + 1, dtype=np.int64) * k
    return SparseBatch(M.d, indptr, idx.ravel())


@dataclass(frozen=True)
class ThresholdCalibration:
    t: float
    target_rate: float
    sample_size: int
    achieved_rate: float


def calibrate_threshold(M: ProjectionMatrix, sample: Sequence[np.ndarray] | np.ndarray, target_rate: float) -> ThresholdCalibration:
    """Pick ``t`` as the ``1 - target_rate`` quantile of pooled ``|z|``.

    Quantiles use linear interpolation between order statistics (numpy's
    default "linear" method).
    """
    X = np.asarray(sample, dtype=np.float64)
    if X.size == 0:
        raise HDError("calibration sample is empty")
    if X.ndim == 1:
        X = X[None, :]
    if not 0.0 < target_rate <= 1.0:
        raise HDError("target rate must be in (0, 1]")
    pooled = np.abs(M.project(X)).ravel()
    t = float(np.quantile(pooled, 1.0 - target_rate, method="linear"))
    return ThresholdCalibration(t, target_rate, X.shape[0], float(np.mean(pooled >= t)))


def _threshold_of(cal: ThresholdCalibration | float) -> float:
    return cal.t if isinstance(cal, ThresholdCalibration) else float(cal)


def sparse_rp_threshold(M: ProjectionMatrix, x: np.ndarray, cal: ThresholdCalibration | float) -> SparseBinaryEmbedding:
    """Active set = ``{i : |z_i| >= t}``."""
    z = np.abs(M.project(x))
    return SparseBinaryEmbedding(M.d, np.flatnonzero(z >= _threshold_of(cal)))


def sparse_rp_threshold_batch(M: ProjectionMatrix, X: np.ndarray, cal: ThresholdCalibration | float) -> SparseBatch:
    mask = np.abs(M.project(X)) >= _threshold_of(cal)
    rows, cols = np.nonzero(mask)
    indptr = np.zeros(mask.shape[0] + 1, dtype=np.int64)
    np.cumsum(mask.sum(axis=1), out=indptr[1:])
    return SparseBatch(M.d, indptr, cols.astype(np.int64))
