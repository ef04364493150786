"""Record -> embedding pipeline assembled from an :class:`EncoderConfig`.

The numeric and categorical halves are encoded independently and bundled.
:func:`encode_stream` runs encoding ahead of the consumer on worker threads
with a bounded window; results come back in input order, so the worker
count never changes the output.
"""
from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Iterator, Sequence

import numpy as np

from hdhash.bundle import BundleSpec, bundle_batch
from hdhash.catenc import BloomEncoder, Codebook, DenseHashEncoder
from hdhash.core import (
    CategoricalEncoderKind,
    EmbeddingBatch,
    EncoderConfig,
    HDError,
    NumericEncoderKind,
    SparseBatch,
)
from hdhash.ingest import RawRecord, numeric_matrix, preprocess_numeric_batch, record_keys, record_symbols
from hdhash.hashing import pack_keys
from hdhash.numenc import (
    ProjectionMatrix,
    SjltHashEncoder,
    ThresholdCalibration,
    calibrate_threshold,
    matrix_seed,
    sign,
    sparse_rp_threshold_batch,
    sparse_rp_topk_batch,
)

NK = NumericEncoderKind


class RecordEncoder:
    def __init__(self, config: EncoderConfig, calibration_sample: np.ndarray | None = None):
        self.config = c = config
        seed = c.master_seed
        if c.categorical_encoder is CategoricalEncoderKind.BLOOM:
            self.cat = BloomEncoder(c.d_cat, c.k_hash, seed, c.hash_family, c.independence)
        elif c.categorical_encoder is CategoricalEncoderKind.CODEBOOK:
            self.cat = Codebook(c.d_cat, seed)
        else:
            self.cat = DenseHashEncoder(c.d_cat, seed, c.hash_family, c.independence)

        self.matrix: ProjectionMatrix | None = None
        self.sjlt: SjltHashEncoder | None = None
        kind = c.numeric_encoder
        if kind is NK.SJLT_HASH:
            self.sjlt = SjltHashEncoder(c.d_num, c.n_numeric, c.sjlt_blocks, seed, c.hash_family, c.independence)
        elif kind is NK.SJLT_RELAXED:
            self.matrix = ProjectionMatrix.ternary(c.d_num, c.n_numeric, c.sjlt_sparsity, matrix_seed(seed, "sjlt-relaxed"))
        else:
            self.matrix = ProjectionMatrix.dense(c.d_num, c.n_numeric, matrix_seed(seed, "dense-rp"))

        self.calibration: ThresholdCalibration | None = None
        if kind is NK.SPARSE_RP_THRESHOLD:
            if c.threshold is not None:
                self.calibration = ThresholdCalibration(float(c.threshold), c.k_sparse / c.d_num, 0, float("nan"))
            elif calibration_sample is not None:
                self.calibrate(calibration_sample)
        self.spec = BundleSpec(c.bundling, c.d_num, c.d_cat)

    @property
    def dim(self) -> int:
        return self.spec.dim

    def calibrate(self, raw_numeric: np.ndarray) -> ThresholdCalibration:
        """Fit the threshold on raw numeric rows (preprocessed here)."""
        X = preprocess_numeric_batch(raw_numeric)
        self.calibration = calibrate_threshold(self.matrix, X, self.config.k_sparse / self.config.d_num)
        return self.calibration

    def encode_numeric(self, X: np.ndarray):
        """Unit-norm numeric rows -> dense array or :class:`SparseBatch`."""
        kind = self.config.numeric_encoder
        if kind is NK.SPARSE_RP_TOPK:
            return sparse_rp_topk_batch(self.matrix, X, self.config.k_sparse, self.config.topk_signed)
        if kind is NK.SPARSE_RP_THRESHOLD:
            if self.calibration is None:
                raise HDError("threshold encoder needs a threshold or a calibration sample")
            return sparse_rp_threshold_batch(self.matrix, X, self.calibration)
        if kind is NK.SJLT_HASH:
            out = self.sjlt.encode_batch(X)
        elif kind is NK.SJLT_RELAXED and not self.config.sjlt_quantize:
            out = self.matrix.project(X)
        else:
            out = sign(self.matrix.project(X))
        if self.config.numeric_scale != 1.0:
            out = out * self.config.numeric_scale
        return out

    def encode_categorical(self, records: Sequence[RawRecord]):
        if isinstance(self.cat, BloomEncoder):
            keys = record_keys(records)
            counts = np.fromiter((len(r.categorical) for r in records), dtype=np.int64, count=len(records))
            if not keys:
                return SparseBatch(self.cat.dim, np.zeros(len(records) + 1, np.int64), np.zeros(0, np.int64))
            packed = pack_keys(keys) if self.cat.hashes.family.value == "seeded-murmur" else keys
            return self.cat.encode_keys(packed, counts)
        return self.cat.encode_batch([record_symbols(r) for r in records])

    def encode_records(self, records: Sequence[RawRecord]) -> EmbeddingBatch:
        if not records:
            raise HDError("empty record batch")
        X = preprocess_numeric_batch(numeric_matrix(records))
        return bundle_batch(self.spec, self.encode_numeric(X), self.encode_categorical(records))

    def encode_labeled(self, records: Sequence[RawRecord]) -> tuple[EmbeddingBatch, np.ndarray]:
        return self.encode_records(records), np.fromiter((r.label for r in records), dtype=np.float64, count=len(records))


def encode_stream(
    encoder: RecordEncoder,
    batches: Iterable[Sequence[RawRecord]],
    workers: int = 1,
    window: int | None = None,
) -> Iterator[tuple[EmbeddingBatch, np.ndarray]]:
    """Encode record batches, ``workers`` at a time, yielding in input order.

    At most ``window`` batches (default ``2 * workers``) are in flight, which
    bounds memory regardless of stream length.
    """
    if workers <= 1:
        for b in batches:
            yield encoder.encode_labeled(b)
        return
    window = window or 2 * workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        inflight: deque = deque()
        for b in batches:
            inflight.append(pool.submit(encoder.encode_labeled, b))
            if len(inflight) >= window:
                yield inflight.popleft().result()
        while inflight:
            yield inflight.popleft().result()
