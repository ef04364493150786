"""``hdhash`` command line: encode, train, eval, bench, verify.

Exit codes: 0 ok, 1 usage or configuration error, 2 data error,
3 verification failure.

``--input synthetic`` draws records from the ``[synthetic]`` config section
instead of reading a Criteo TSV file.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from hdhash import bench, formats, suites
from hdhash.config import ConfigError, RunConfig, load_run_config
from hdhash.core import EncoderConfig, HDError, NumericEncoderKind
from hdhash.ingest import (
    ParseStats,
    RawRecord,
    batched,
    count_lines,
    generate_synthetic,
    iter_split,
    numeric_matrix,
    read_tsv,
)
from hdhash.learn import Model, TrainProtocol, auc, evaluate, run_training
from hdhash.pipeline import RecordEncoder, encode_stream

log = logging.getLogger("hdhash")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3
CALIBRATION_RECORDS = 10_000


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Record sources
# ---------------------------------------------------------------------------


class Source:
    """Re-iterable record stream with a known length."""

    def __init__(self, cfg: RunConfig, path: str | None):
        if path is None:
            raise UsageError("--input is required")
        self.cfg = cfg
        self.path = path
        self.stats = ParseStats()
        if path == "synthetic":
            spec = cfg.synthetic
            if spec.n != cfg.encoder.n_numeric:
                raise UsageError(f"synthetic n={spec.n} does not match encoder n_numeric={cfg.encoder.n_numeric}")
            self.total = spec.records
        else:
            p = Path(path)
            if not p.is_file():
                raise DataError(f"cannot read input {path}")
            self.total = count_lines(p)

    def __iter__(self) -> Iterator[RawRecord]:
        if self.path == "synthetic":
            return generate_synthetic(self.cfg.synthetic)
        self.stats = ParseStats()
        return read_tsv(self.path, self.stats, n_numeric=self.cfg.encoder.n_numeric)

    def split(self, name: str) -> Iterator[RawRecord]:
        return iter_split(iter(self), self.total, name)


def _build_encoder(cfg: EncoderConfig, source: Source | None) -> RecordEncoder:
    enc = RecordEncoder(cfg)
    if cfg.numeric_encoder is NumericEncoderKind.SPARSE_RP_THRESHOLD and enc.calibration is None:
        if source is None:
            raise UsageError("threshold encoder needs 'threshold' or an input to calibrate on")
        sample = [r for _, r in zip(range(CALIBRATION_RECORDS), source.split("train"))]
        if not sample:
            raise DataError("no records to calibrate the threshold on")
        cal = enc.calibrate(numeric_matrix(sample))
        log.info("calibrated threshold t=%.6g (achieved rate %.4g)", cal.t, cal.achieved_rate)
    return enc


def _encoder_header(enc: RecordEncoder) -> dict:
    cfg = enc.config
    if enc.calibration is not None:
        cfg = replace(cfg, threshold=enc.calibration.t)
    return cfg.to_dict()


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_encode(cfg: RunConfig, args) -> int:
    out = args.output or cfg.run.output
    if not out:
        raise UsageError("--output is required")
    source = Source(cfg, args.input or cfg.run.input)
    enc = _build_encoder(cfg.encoder, source)
    header = {"dim": enc.dim, "encoder": _encoder_header(enc), "input": source.path}
    if source.path == "synthetic":
        header["synthetic"] = cfg.to_dict()["synthetic"]
    with open(out, "wb") as fh:
        w = formats.EmbeddingWriter(fh, header)
        for emb, y in encode_stream(enc, batched(source, 4096), cfg.run.workers):
            w.write_batch(emb, y)
    _report_parse(source)
    print(json.dumps({"records": w.count, "dim": enc.dim, "output": str(out)}))
    return EXIT_OK


def _report_parse(source: Source) -> None:
    if source.stats.errors:
        print(f"warning: skipped {len(source.stats.errors)} malformed line(s); first: {source.stats.errors[0]}", file=sys.stderr)


def cmd_train(cfg: RunConfig, args) -> int:
    out = args.output or cfg.run.checkpoint or cfg.run.output
    if not out:
        raise UsageError("--output (checkpoint path) is required")
    source = Source(cfg, args.input or cfg.run.input)
    enc = _build_encoder(cfg.encoder, source)
    t = cfg.train
    model = Model.zeros(enc.dim, step_size=t.step_size, batch_size=t.batch_size, weight_decay=t.weight_decay)
    protocol = TrainProtocol(t.validate_every, t.patience, t.max_records)
    # The validation split is 1/14 of the stream; it is held as raw records
    # and re-encoded every round.
    val_records = list(source.split("val"))
    if not val_records:
        raise DataError("input too small: validation split is empty")
    metrics_path = args.metrics or cfg.run.metrics or str(out) + ".metrics.jsonl"
    workers = cfg.run.workers
    with open(metrics_path, "w") as mfh:
        def on_metrics(rec):
            mfh.write(formats.json_line(rec) + "\n")
            mfh.flush()
            log.info("round %d: val_loss=%.5f val_auc=%.5f", rec["round"], rec["val_loss"], rec["val_auc"])

        train = encode_stream(enc, batched(source.split("train"), t.batch_size), workers)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = run_training(protocol, model, train, lambda: encode_stream(enc, batched(val_records, 1024), workers), on_metrics)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    formats.save_checkpoint(out, model, {"encoder": _encoder_header(enc), "records_seen": res.records_seen})
    _report_parse(source)
    summary = {
        "checkpoint": str(out),
        "metrics": metrics_path,
        "records_seen": res.records_seen,
        "updates": model.updates,
        "rounds": len(res.metrics),
        "stopped_early": res.stopped_early,
        "final_val_loss": res.metrics[-1]["val_loss"] if res.metrics else None,
        "final_val_auc": res.metrics[-1]["val_auc"] if res.metrics else None,
    }
    print(formats.json_line(summary))
    return EXIT_OK


def box_stats(values: np.ndarray) -> dict:
    """Median, quartiles and 1.5 IQR whiskers (Tukey)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        return {"n": 0}
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    return {
        "n": int(v.size),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": int(v.size - inside.size),
    }


def chunked_auc(scores: np.ndarray, labels: np.ndarray, chunk: int) -> tuple[list[float], list[str]]:
    notes = []
    if scores.size < chunk:
        notes.append(f"only {scores.size} records (< {chunk}); reporting a single chunk")
        bounds = [(0, scores.size)]
    else:
        bounds = [(lo, lo + chunk) for lo in range(0, scores.size - chunk + 1, chunk)]
        if scores.size % chunk:
            notes.append(f"dropped {scores.size % chunk} trailing records that do not fill a chunk")
    out = []
    for lo, hi in bounds:
        y = labels[lo:hi]
        if 0 < y.sum() < y.size:
            out.append(auc(scores[lo:hi], y))
        else:
            notes.append(f"chunk [{lo}, {hi}) has a single class; skipped")
    return out, notes


def cmd_eval(cfg: RunConfig, args) -> int:
    ckpt = args.checkpoint or cfg.run.checkpoint
    if not ckpt:
        raise UsageError("--checkpoint is required")
    if not Path(ckpt).is_file():
        raise DataError(f"checkpoint not found: {ckpt}")
    try:
        model, header = formats.load_checkpoint(ckpt)
    except formats.FormatError as e:
        raise DataError(f"{ckpt}: {e}") from None
    enc_cfg = EncoderConfig(**header["encoder"])
    source = Source(replace(cfg, encoder=enc_cfg), args.input or cfg.run.input)
    enc = RecordEncoder(enc_cfg)
    split = args.split or cfg.run.split
    records = iter(source) if split == "all" else source.split(split)
    loss, overall_auc, probs, y = evaluate(model, encode_stream(enc, batched(records, 4096), cfg.run.workers))
    if y.size == 0:
        raise DataError(f"no records in split {split!r}")
    chunk = args.chunk_size or cfg.run.chunk_size
    aucs, notes = chunked_auc(probs, y, chunk)
    for n in notes:
        print(f"warning: {n}", file=sys.stderr)
    report = {
        "checkpoint": str(ckpt),
        "split": split,
        "records": int(y.size),
        "log_loss": loss,
        "auc": overall_auc,
        "accuracy": float(np.mean((probs >= 0.5) == (y == 1))),
        "chunk_size": chunk,
        "chunk_auc": aucs,
        "chunk_auc_box": box_stats(np.array(aucs)),
        "warnings": notes,
    }
    _report_parse(source)
    text = formats.json_line(report)
    out = args.output or cfg.run.output
    if out:
        Path(out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _ints(text: str | None, default: tuple) -> tuple:
    if not text:
        return default
    return tuple(int(float(x)) for x in text.replace(",", " ").split())


def cmd_bench(cfg: RunConfig, args) -> int:
    b = cfg.extra.get("bench", {})
    seed = cfg.run.seed or 0
    quick = args.quick
    alphabets = _ints(b.get("alphabets"), (10_000, 100_000) if quick else (10_000, 100_000, 1_000_000, 10_000_000))
    batch = int(b.get("batch", 10_000 if quick else 100_000))
    mem = _ints(b.get("memory_alphabets"), (1_000, 10_000) if quick else (1_000, 10_000, 100_000))
    rows = bench.bloom_throughput(alphabets, batch=batch, seed=seed)
    rows += bench.codebook_memory(mem, d=int(b.get("memory_dim", 256)), seed=seed)
    rows += bench.encoder_comparison(batch=min(batch, 2_000 if quick else 10_000), seed=seed)
    backend_rows = bench.backend_comparison(n_keys=100_000 if quick else 1_000_000, seed=seed)
    print(bench.format_table(rows))
    print()
    print(bench.format_table(backend_rows))
    out = args.output or cfg.run.output
    if out:
        formats.write_jsonl(out, rows + backend_rows)
    return EXIT_OK


QUICK_OVERRIDES = {
    "bloom_intersection": dict(pairs=300),
    "bloom_membership": dict(probes=20_000, fp_probes=20_000),
    "distinct_hash": dict(trials=20_000),
    "distortion_scaling": dict(pairs=2_000),
    "sign_rp_angle": dict(draws=20, d=2048),
    "learning": dict(records=70_000),
    "throughput": dict(batch=20_000),
    "codebook_memory": dict(alphabets=(1_000, 10_000)),
    "gradient_check": {},
    "convex_oracle": {},
    "bundling_identities": dict(pairs=300),
    "sparse_overfitting": dict(steps=300),
    "theorem1": {},
}


def cmd_verify(cfg: RunConfig, args) -> int:
    names = args.suite or list(suites.SUITES)
    unknown = [n for n in names if n not in suites.SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(suites.SUITES)}")
    seed = cfg.run.seed or 0
    rows = []
    for name in names:
        kw = dict(QUICK_OVERRIDES.get(name, {})) if args.quick else {}
        if name == "theorem1" and args.tiny_d:
            kw["tiny_d"] = args.tiny_d
        if name == "learning":
            kw["workers"] = cfg.run.workers
        for row in suites.run_suite(name, seed=seed, **kw):
            rows.append(row)
            tag = "PASS" if row["pass"] else "FAIL"
            extra = " (expected fail)" if row["expected_fail"] else ""
            print(f"{tag} {row['suite']}{extra}: statistic={_short(row['statistic'])} bound={_short(row['bound'])}")
    out = args.output or cfg.run.output
    if out:
        formats.write_jsonl(out, rows)
    failed = [r["suite"] for r in rows if not r["pass"]]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--workers", type=int, help="encoding worker threads")
    common.add_argument("--input", help="Criteo TSV path, or 'synthetic'")
    common.add_argument("--output", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="hdhash", description="Hash-based hyperdimensional encoders for streaming classification.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("encode", parents=[common], help="write embeddings for every record")
    t = sub.add_parser("train", parents=[common], help="train logistic regression; --output is the checkpoint")
    t.add_argument("--metrics", help="metrics JSONL path (default: <output>.metrics.jsonl)")
    e = sub.add_parser("eval", parents=[common], help="chunked AUC of a checkpoint")
    e.add_argument("--checkpoint")
    e.add_argument("--split", choices=["train", "val", "test", "all"])
    e.add_argument("--chunk-size", type=int)
    b = sub.add_parser("bench", parents=[common], help="throughput and memory benchmarks")
    b.add_argument("--quick", action="store_true", help="smaller sizes")
    v = sub.add_parser("verify", parents=[common], help="run the verification suites")
    v.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    v.add_argument("--quick", action="store_true", help="smaller trial counts")
    v.add_argument("--tiny-d", type=int, help="dimension for the expected-fail Theorem-1 companion")
    return p


COMMANDS = {"encode": cmd_encode, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config).with_seed(args.seed)
        if args.workers is not None:
            if args.workers < 1:
                raise UsageError("--workers must be >= 1")
            cfg = replace(cfg, run=replace(cfg.run, workers=args.workers))
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as e:
        print(f"hdhash: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, HDError, OSError) as e:
        print(f"hdhash: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
