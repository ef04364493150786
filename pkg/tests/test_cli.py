import json
from pathlib import Path

import numpy as np
import pytest

from hdhash import cli, formats
from hdhash.ingest import SyntheticSpec, generate_synthetic, write_tsv

SMALL_INI = """
[run]
chunk_size = 200
[encoder]
d_num = 2000
d_cat = 2000
k_sparse = 16
numeric_encoder = sjlt_relaxed
numeric_scale = 0.1
[train]
step_size = 0.5
validate_every = 1000
[synthetic]
m = 2600
records = 2800
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL_INI)
    return str(p)


@pytest.fixture
def tsv(tmp_path):
    p = tmp_path / "data.tsv"
    write_tsv(generate_synthetic(SyntheticSpec(m=2600, records=140, seed=2)), p)
    return str(p)


def _emb(path):
    with open(path, "rb") as fh:
        header, recs = formats.read_embeddings(fh)
        return header, list(recs)


class TestExitCodes:
    def test_no_subcommand(self, capsys):
        with pytest.raises(SystemExit) as e:
            cli.main([])
        assert e.value.code == cli.EXIT_USAGE

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as e:
            cli.main(["encode", "--bogus"])
        assert e.value.code == cli.EXIT_USAGE

    def test_missing_required_output(self, tsv):
        assert cli.main(["encode", "--input", tsv]) == cli.EXIT_USAGE

    def test_bad_config(self, tmp_path, tsv):
        p = tmp_path / "bad.ini"
        p.write_text("[encoder]\nd_kat = 1\n")
        assert cli.main(["encode", "--config", str(p), "--input", tsv, "--output", str(tmp_path / "o")]) == cli.EXIT_USAGE

    def test_bad_workers(self, tmp_path, tsv):
        assert cli.main(["encode", "--workers", "0", "--input", tsv, "--output", str(tmp_path / "o")]) == cli.EXIT_USAGE

    def test_missing_input(self, tmp_path):
        assert cli.main(["encode", "--input", str(tmp_path / "nope.tsv"), "--output", str(tmp_path / "o")]) == cli.EXIT_DATA

    def test_missing_checkpoint(self, tmp_path, tsv, capsys):
        assert cli.main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--input", tsv]) == cli.EXIT_DATA
        assert "checkpoint" in capsys.readouterr().err

    def test_corrupt_checkpoint(self, tmp_path, tsv):
        p = tmp_path / "bad.ckpt"
        p.write_bytes(b"garbage!!")
        assert cli.main(["eval", "--checkpoint", str(p), "--input", tsv]) == cli.EXIT_DATA

    def test_unknown_suite(self):
        assert cli.main(["verify", "--suite", "nope"]) == cli.EXIT_USAGE

    def test_verification_failure(self, tmp_path, capsys):
        # at a large "tiny" d the bound holds, so the expected failure does not occur
        out = tmp_path / "v.jsonl"
        assert cli.main(["verify", "--suite", "theorem1", "--tiny-d", "4096", "--output", str(out)]) == cli.EXIT_VERIFY
        rows = formats.read_jsonl(out)
        assert [r["pass"] for r in rows] == [True, False]
        assert "FAIL theorem1_tiny_d (expected fail)" in capsys.readouterr().out


class TestEncode:
    def test_deterministic_bytes_across_workers(self, tmp_path, tsv, small_cfg):
        outs = []
        for w in ("1", "3"):
            o = tmp_path / f"e{w}.hdem"
            assert cli.main(["encode", "--config", small_cfg, "--input", tsv, "--output", str(o), "--workers", w]) == 0
            outs.append(o.read_bytes())
        assert outs[0] == outs[1]
        header, recs = _emb(tmp_path / "e1.hdem")
        assert header["dim"] == 4000 and len(recs) == 140
        assert header["encoder"]["numeric_encoder"] == "sjlt_relaxed"

    def test_seed_changes_output(self, tmp_path, tsv, small_cfg):
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(["encode", "--config", small_cfg, "--input", tsv, "--output", str(a), "--seed", "1"])
        cli.main(["encode", "--config", small_cfg, "--input", tsv, "--output", str(b), "--seed", "2"])
        assert a.read_bytes() != b.read_bytes()
        assert _emb(a)[0]["encoder"]["master_seed"] == 1

    def test_empty_input_header_only(self, tmp_path):
        src = tmp_path / "empty.tsv"
        src.write_text("")
        out = tmp_path / "o.hdem"
        assert cli.main(["encode", "--input", str(src), "--output", str(out)]) == 0
        header, recs = _emb(out)
        assert header["dim"] == 20_000 and recs == []

    def test_malformed_line_skipped(self, tmp_path, tsv, small_cfg, capsys):
        src = tmp_path / "mixed.tsv"
        lines = Path(tsv).read_text().splitlines()
        src.write_text("\n".join(lines[:3] + ["not\ta\trecord"] + lines[3:6]) + "\n")
        out = tmp_path / "o.hdem"
        assert cli.main(["encode", "--config", small_cfg, "--input", str(src), "--output", str(out)]) == 0
        assert len(_emb(out)[1]) == 6
        assert "line 4" in capsys.readouterr().err

    def test_fig6_default_configuration(self, tmp_path):
        # defaults: dense random projection at d=10000, Bloom with k=4
        cfg = tmp_path / "c.ini"
        cfg.write_text("[synthetic]\nm = 2600\nrecords = 50\n")
        out = tmp_path / "f6.hdem"
        assert cli.main(["encode", "--config", str(cfg), "--input", "synthetic", "--output", str(out)]) == 0
        header, recs = _emb(out)
        enc = header["encoder"]
        assert (enc["numeric_encoder"], enc["d_num"], enc["d_cat"], enc["k_hash"]) == ("dense_rp", 10_000, 10_000, 4)
        assert len(recs) == 50
        for _, blocks in recs:
            (k0, _, num), (k1, _, cat) = blocks
            assert (k0, num.size, k1) == ("dense", 10_000, "sparse")
            assert set(np.unique(num)) <= {-1.0, 1.0}
            assert 0 < cat.size <= 26 * 4

    def test_threshold_calibrated_into_header(self, tmp_path, tsv, small_cfg):
        out = tmp_path / "t.hdem"
        assert cli.main(["encode", "--config", small_cfg, "--input", tsv, "--output", str(out)]) == 0
        cfg = tmp_path / "thr.ini"
        cfg.write_text(SMALL_INI.replace("sjlt_relaxed", "sparse_rp_threshold"))
        assert cli.main(["encode", "--config", str(cfg), "--input", tsv, "--output", str(out)]) == 0
        assert _emb(out)[0]["encoder"]["threshold"] > 0


class TestTrainEval:
    def test_train_then_eval(self, tmp_path, small_cfg, capsys):
        ckpt = tmp_path / "m.ckpt"
        assert cli.main(["train", "--config", small_cfg, "--input", "synthetic", "--output", str(ckpt)]) == 0
        metrics = formats.read_jsonl(str(ckpt) + ".metrics.jsonl")
        assert metrics and {"records", "val_loss", "train_loss"} <= set(metrics[0])
        model, header = formats.load_checkpoint(ckpt)
        assert header["records_seen"] == 2400
        capsys.readouterr()

        out = tmp_path / "eval.json"
        assert cli.main(["eval", "--config", small_cfg, "--checkpoint", str(ckpt), "--input", "synthetic", "--output", str(out),
                         "--split", "all"]) == 0
        report = json.loads(out.read_text())
        assert report["records"] == 2800
        assert report["auc"] > 0.9
        assert report["chunk_auc_box"]["n"] == 14
        assert {"median", "q1", "q3", "whisker_low", "whisker_high"} <= set(report["chunk_auc_box"])

    def test_eval_single_chunk_warning(self, tmp_path, small_cfg, capsys):
        ckpt = tmp_path / "m.ckpt"
        cli.main(["train", "--config", small_cfg, "--input", "synthetic", "--output", str(ckpt)])
        capsys.readouterr()
        assert cli.main(["eval", "--config", small_cfg, "--checkpoint", str(ckpt), "--input", "synthetic", "--chunk-size", "100000"]) == 0
        cap = capsys.readouterr()
        assert "single chunk" in cap.err
        assert len(json.loads(cap.out)["chunk_auc"]) == 1

    def test_train_reproducible(self, tmp_path, small_cfg):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        cli.main(["train", "--config", small_cfg, "--input", "synthetic", "--output", str(a), "--workers", "1"])
        cli.main(["train", "--config", small_cfg, "--input", "synthetic", "--output", str(b), "--workers", "2"])
        assert a.read_bytes() == b.read_bytes()


class TestChunkedAuc:
    def test_perfect_scores_median_one(self):
        y = np.tile([0.0, 1.0], 500)
        aucs, notes = cli.chunked_auc(y.copy(), y, 100)
        assert len(aucs) == 10 and notes == []
        assert cli.box_stats(np.array(aucs))["median"] == 1.0

    def test_trailing_records_dropped(self):
        y = np.tile([0.0, 1.0], 55)
        aucs, notes = cli.chunked_auc(y, y, 50)
        assert len(aucs) == 2 and "dropped 10" in notes[0]

    def test_single_class_chunk_skipped(self):
        y = np.r_[np.zeros(10), np.tile([0.0, 1.0], 5)]
        aucs, notes = cli.chunked_auc(y, y, 10)
        assert aucs == [1.0] and "single class" in notes[0]

    def test_box_stats_whiskers(self):
        s = cli.box_stats(np.r_[np.arange(1.0, 10.0), 100.0])
        assert s["outliers"] == 1 and s["whisker_high"] == 9.0 and s["whisker_low"] == 1.0
        assert cli.box_stats(np.array([])) == {"n": 0}


class TestBenchVerifyReports:
    def test_bench_schema(self, tmp_path, monkeypatch, capsys):
        cfg = tmp_path / "b.ini"
        cfg.write_text("[bench]\nalphabets = 1000 10000\nbatch = 500\nmemory_alphabets = 100 1000\n")
        from hdhash import bench

        real = bench.backend_comparison
        monkeypatch.setattr(bench, "backend_comparison", lambda n_keys, seed: real(n_keys=2000, seed=seed, repeat=1))
        out = tmp_path / "bench.jsonl"
        assert cli.main(["bench", "--quick", "--config", str(cfg), "--output", str(out)]) == 0
        rows = formats.read_jsonl(out)
        enc_rows = [r for r in rows if r["suite"] != "backend"]
        assert enc_rows and all(tuple(r) == tuple(sorted(bench.SCHEMA)) for r in enc_rows)
        assert {r["suite"] for r in enc_rows} == {"throughput", "memory", "encoders"}
        assert all(r["matches_reference"] for r in rows if r["suite"] == "backend")

    def test_verify_report_fields(self, tmp_path, capsys):
        out = tmp_path / "v.jsonl"
        code = cli.main(["verify", "--quick", "--suite", "theorem1", "--suite", "gradient_check", "--output", str(out)])
        assert code == 0
        rows = formats.read_jsonl(out)
        for r in rows:
            assert {"suite", "params", "statistic", "bound", "pass", "expected_fail", "seconds"} <= set(r)
            assert r["bound"] is not None
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == len(rows) and all(l.startswith("PASS") for l in lines)
        assert any(r["expected_fail"] for r in rows)

    def test_verify_seeded_rows_reproducible(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for p in (a, b):
            cli.main(["verify", "--quick", "--seed", "3", "--suite", "theorem1", "--output", str(p)])
        strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
        assert strip(formats.read_jsonl(a)) == strip(formats.read_jsonl(b))
