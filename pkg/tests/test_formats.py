import io
import json
import math

import numpy as np
import pytest

from hdhash.core import EmbeddingBatch, SparseBatch
from hdhash.formats import (
    EmbeddingWriter,
    FormatError,
    json_line,
    load_checkpoint,
    load_projection,
    read_embeddings,
    read_jsonl,
    record_to_dense,
    save_checkpoint,
    save_projection,
    write_jsonl,
)
from hdhash.learn import Model
from hdhash.numenc import ProjectionMatrix


def _mixed_batch(rng, n=7, d_num=5, d_cat=11):
    dense = rng.normal(size=(n, d_num))
    rows = [np.sort(rng.choice(d_cat, size=rng.integers(0, 4), replace=False)) for _ in range(n)]
    indptr = np.concatenate([[0], np.cumsum([r.size for r in rows])]).astype(np.int64)
    sparse = SparseBatch(d_cat, indptr, np.concatenate(rows).astype(np.int64))
    return EmbeddingBatch(d_num + d_cat, ((0, dense), (d_num, sparse)))


class TestEmbeddings:
    def test_round_trip_mixed_blocks(self, rng):
        batch = _mixed_batch(rng)
        labels = rng.integers(0, 2, size=batch.n_rows)
        buf = io.BytesIO()
        w = EmbeddingWriter(buf, {"dim": batch.dim, "note": "x"})
        w.write_batch(batch, labels)
        assert w.count == batch.n_rows
        buf.seek(0)
        header, recs = read_embeddings(buf)
        assert header == {"dim": batch.dim, "note": "x"}
        got = list(recs)
        assert [lab for lab, _ in got] == labels.tolist()
        expected = batch.to_dense()
        for i, (_, blocks) in enumerate(got):
            assert [b[0] for b in blocks] == ["dense", "sparse"]
            np.testing.assert_array_equal(record_to_dense(batch.dim, blocks), expected[i])

    def test_header_only(self):
        buf = io.BytesIO()
        EmbeddingWriter(buf, {"dim": 3})
        buf.seek(0)
        header, recs = read_embeddings(buf)
        assert header["dim"] == 3
        assert list(recs) == []

    def test_deterministic_bytes(self, rng):
        batch = _mixed_batch(rng)
        labels = np.zeros(batch.n_rows)
        outs = []
        for _ in range(2):
            buf = io.BytesIO()
            EmbeddingWriter(buf, {"dim": batch.dim, "b": 1, "a": 2}).write_batch(batch, labels)
            outs.append(buf.getvalue())
        assert outs[0] == outs[1]

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            read_embeddings(io.BytesIO(b"NOPE\x01\x00\x00\x00\x00"))

    def test_truncated_record(self, rng):
        batch = _mixed_batch(rng)
        buf = io.BytesIO()
        EmbeddingWriter(buf, {"dim": batch.dim}).write_batch(batch, np.ones(batch.n_rows))
        cut = io.BytesIO(buf.getvalue()[:-3])
        _, recs = read_embeddings(cut)
        with pytest.raises(FormatError):
            list(recs)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        m = Model(rng.normal(size=17), -0.25, step_size=0.1, batch_size=32, updates=9, weight_decay=1e-4)
        p = tmp_path / "m.ckpt"
        save_checkpoint(p, m, {"encoder": {"d_cat": 4}, "records_seen": 288})
        m2, header = load_checkpoint(p)
        np.testing.assert_array_equal(m2.theta, m.theta)
        assert m2.intercept == m.intercept
        assert (m2.step_size, m2.batch_size, m2.updates, m2.weight_decay) == (0.1, 32, 9, 1e-4)
        assert header["encoder"] == {"d_cat": 4}
        assert header["records_seen"] == 288

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "x.ckpt"
        p.write_bytes(b"HDEM\x01\x02\x00\x00\x00{}")
        with pytest.raises(FormatError):
            load_checkpoint(p)


class TestProjection:
    def test_dense_round_trip_f32(self, tmp_path):
        M = ProjectionMatrix.dense(6, 4, seed=3)
        p = tmp_path / "m.hdpm"
        save_projection(p, M)
        M2 = load_projection(p)
        assert (M2.kind, M2.seed, M2.d, M2.n) == ("dense", 3, 6, 4)
        np.testing.assert_array_equal(M2.values, M.values.astype(np.float32).astype(np.float64))

    def test_ternary_round_trip_exact(self, tmp_path):
        M = ProjectionMatrix.ternary(20, 13, 0.4, seed=5)
        p = tmp_path / "t.hdpm"
        save_projection(p, M)
        M2 = load_projection(p)
        assert M2.kind == M.kind and M2.p == M.p
        np.testing.assert_array_equal(M2.values, M.values)
        x = np.ones(13) / math.sqrt(13)
        np.testing.assert_array_equal(M2.project(x), M.project(x))


class TestJsonl:
    def test_round_trip_with_non_finite(self, tmp_path):
        rows = [{"a": 1, "b": float("nan")}, {"a": np.float64(2.5), "c": [np.int64(3), float("inf")]}]
        p = tmp_path / "r.jsonl"
        write_jsonl(p, rows)
        got = read_jsonl(p)
        assert got == [{"a": 1, "b": None}, {"a": 2.5, "c": [3, "inf"]}]

    def test_sorted_keys(self):
        assert json_line({"b": 1, "a": True}) == '{"a": true, "b": 1}'

    def test_writes_to_handle(self):
        buf = io.StringIO()
        write_jsonl(buf, [{"x": 1}])
        assert json.loads(buf.getvalue()) == {"x": 1}
