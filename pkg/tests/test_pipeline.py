import numpy as np
import pytest

from hdhash.core import EncoderConfig, HDError, SparseBatch
from hdhash.ingest import RawRecord, SyntheticSpec, batched, generate_synthetic, numeric_matrix, preprocess_numeric_batch, record_symbols
from hdhash.pipeline import RecordEncoder, encode_stream

SMALL = dict(d_cat=256, d_num=256, k_sparse=16)


@pytest.fixture(scope="module")
def records():
    return list(generate_synthetic(SyntheticSpec(m=2600, records=300, seed=4)))


def _dense(batch):
    return batch.to_dense()


class TestRecordEncoder:
    @pytest.mark.parametrize("numeric", ["dense_rp", "sjlt_hash", "sjlt_relaxed", "sparse_rp_topk"])
    @pytest.mark.parametrize("categorical", ["bloom", "codebook", "dense_hash"])
    def test_kinds_shapes_and_determinism(self, records, numeric, categorical):
        cfg = EncoderConfig(numeric_encoder=numeric, categorical_encoder=categorical, **SMALL)
        a = RecordEncoder(cfg).encode_records(records[:20])
        b = RecordEncoder(cfg).encode_records(records[:20])
        assert a.dim == 512 and a.n_rows == 20
        np.testing.assert_array_equal(_dense(a), _dense(b))

    def test_seed_changes_output(self, records):
        a = RecordEncoder(EncoderConfig(master_seed=1, **SMALL)).encode_records(records[:5])
        b = RecordEncoder(EncoderConfig(master_seed=2, **SMALL)).encode_records(records[:5])
        assert not np.array_equal(_dense(a), _dense(b))

    def test_bloom_fast_path_matches_sets(self, records):
        enc = RecordEncoder(EncoderConfig(**SMALL))
        fast = enc.encode_categorical(records[:50])
        slow = enc.cat.encode_batch([record_symbols(r) for r in records[:50]])
        np.testing.assert_array_equal(fast.indptr, slow.indptr)
        np.testing.assert_array_equal(fast.indices, slow.indices)

    def test_bloom_fast_path_polynomial(self, records):
        enc = RecordEncoder(EncoderConfig(hash_family="polynomial-p-wise", independence=3, **SMALL))
        fast = enc.encode_categorical(records[:30])
        slow = enc.cat.encode_batch([record_symbols(r) for r in records[:30]])
        np.testing.assert_array_equal(fast.indices, slow.indices)

    def test_row_weight_bloom(self, records):
        cat = RecordEncoder(EncoderConfig(**SMALL)).encode_categorical(records[:40])
        assert isinstance(cat, SparseBatch)
        # at most s * k active bits per record
        assert cat.nnz().max() <= 26 * 4

    def test_records_without_categoricals(self):
        recs = [RawRecord(1, tuple(range(13)), ()) for _ in range(3)]
        enc = RecordEncoder(EncoderConfig(**SMALL))
        cat = enc.encode_categorical(recs)
        assert cat.n_rows == 3 and cat.indices.size == 0

    def test_empty_batch_rejected(self):
        with pytest.raises(HDError):
            RecordEncoder(EncoderConfig(**SMALL)).encode_records([])

    def test_numeric_scale(self, records):
        X = preprocess_numeric_batch(numeric_matrix(records[:4]))
        one = RecordEncoder(EncoderConfig(numeric_encoder="sjlt_relaxed", **SMALL)).encode_numeric(X)
        tenth = RecordEncoder(EncoderConfig(numeric_encoder="sjlt_relaxed", numeric_scale=0.1, **SMALL)).encode_numeric(X)
        np.testing.assert_allclose(tenth, 0.1 * one)

    def test_sum_bundling(self, records):
        cfg = EncoderConfig(bundling="sum", numeric_encoder="sparse_rp_topk", **SMALL)
        b = RecordEncoder(cfg).encode_records(records[:3])
        assert b.dim == 256


class TestThreshold:
    def test_needs_calibration(self, records):
        enc = RecordEncoder(EncoderConfig(numeric_encoder="sparse_rp_threshold", **SMALL))
        with pytest.raises(HDError):
            enc.encode_records(records[:2])

    def test_calibrated_rate(self, records):
        raw = numeric_matrix(records)
        enc = RecordEncoder(EncoderConfig(numeric_encoder="sparse_rp_threshold", **SMALL), calibration_sample=raw)
        cal = enc.calibration
        assert cal.sample_size == len(records)
        assert cal.achieved_rate == pytest.approx(16 / 256, abs=0.005)
        num = enc.encode_numeric(preprocess_numeric_batch(raw))
        assert num.indices.size / (len(records) * 256) == pytest.approx(16 / 256, abs=0.005)

    def test_fixed_threshold(self, records):
        enc = RecordEncoder(EncoderConfig(numeric_encoder="sparse_rp_threshold", threshold=1e9, **SMALL))
        assert enc.encode_numeric(preprocess_numeric_batch(numeric_matrix(records[:3]))).indices.size == 0


class TestStream:
    @pytest.mark.parametrize("workers", [2, 4])
    def test_worker_count_independent(self, records, workers):
        enc = RecordEncoder(EncoderConfig(**SMALL))
        serial = [(_dense(b), y) for b, y in encode_stream(enc, batched(records, 37), 1)]
        parallel = [(_dense(b), y) for b, y in encode_stream(enc, batched(records, 37), workers, window=3)]
        assert len(serial) == len(parallel) == 9
        for (a, ya), (b, yb) in zip(serial, parallel):
            np.testing.assert_array_equal(a, b)
            np.testing.assert_array_equal(ya, yb)

    def test_labels(self, records):
        enc = RecordEncoder(EncoderConfig(**SMALL))
        (_, y), = encode_stream(enc, [records[:10]])
        assert y.tolist() == [r.label for r in records[:10]]
