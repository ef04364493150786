"""Hash-based hyperdimensional encoders for streaming classification.

Categorical symbols are Bloom-encoded into sparse binary vectors with no
per-symbol state; numeric vectors go through random projections.  The two
halves are bundled and fed to a streaming logistic regression.

Hot hash kernels come from a compiled extension when available and fall back
to numpy otherwise (``hdhash.kernels.BACKEND``; set ``HDHASH_PURE_PYTHON=1``
to force the fallback).
"""
from hdhash.bundle import BundleSpec, bundle, bundle_batch
from hdhash.catenc import (
    BloomEncoder,
    Codebook,
    DenseHashEncoder,
    PermutationEncoder,
    bloom_encode_set,
    bloom_encode_symbol,
    bloom_intersection_estimate,
    bloom_member,
)
from hdhash.core import (
    BundleMethod,
    CategoricalEncoderKind,
    CategoricalSet,
    DenseEmbedding,
    DimensionMismatch,
    EmbeddingBatch,
    EncoderConfig,
    HashFamilyKind,
    HDError,
    NumericEncoderKind,
    Precision,
    SparseBatch,
    SparseBinaryEmbedding,
    Symbol,
    dot,
)
from hdhash.hashing import HashFamilyDraw, HashFunction, derive_seed, draw_family, murmur3_32
from hdhash.kernels import BACKEND
from hdhash.learn import Model, TrainProtocol, auc, log_loss, predict_prob, run_training, sgd_step
from hdhash.numenc import (
    ProjectionMatrix,
    SjltHashEncoder,
    calibrate_threshold,
    dense_rp_encode,
    sjlt_relaxed_encode,
    sparse_rp_threshold,
    sparse_rp_topk,
)
from hdhash.pipeline import RecordEncoder, encode_stream

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
