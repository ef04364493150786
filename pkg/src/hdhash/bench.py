"""Throughput and memory measurements.

* :func:`bloom_throughput` -- per-batch encode time as the number of
  distinct symbols in the stream grows.
* :func:`codebook_memory` -- codebook entries and bytes against distinct
  symbols (the linear-in-m baseline).
* :func:`backend_comparison` -- compiled kernels against the numpy fallback.
"""
from __future__ import annotations

import gc
import time
import tracemalloc
from typing import Sequence

import numpy as np

from hdhash import _pykernels, kernels
from hdhash.catenc import BloomEncoder, Codebook, DenseHashEncoder
from hdhash.core import CategoricalSet, Symbol
from hdhash.hashing import draw_family, pack_fixed

SCHEMA = ("suite", "encoder", "alphabet", "batch", "seconds", "records_per_s", "entries", "bytes")


def synthetic_keys(n_records: int, s: int, alphabet: int, seed: int = 0) -> np.ndarray:
    """``(n_records * s, 12)`` uint8 keys: field index (u32 LE) + 8 hex chars.

    Tokens are drawn uniformly from ``alphabet // s`` values per field, so the
    stream spans about ``alphabet`` distinct symbols.
    """
    rng = np.random.default_rng(seed)
    per_field = max(1, alphabet // s)
    ids = rng.integers(0, per_field, size=(n_records, s), dtype=np.uint64)
    field = np.broadcast_to(np.arange(s, dtype="<u4"), (n_records, s))
    hexd = np.frombuffer(b"0123456789abcdef", dtype=np.uint8)
    digits = (ids[..., None] >> (np.arange(7, -1, -1, dtype=np.uint64) * 4)) & np.uint64(15)
    out = np.empty((n_records, s, 12), dtype=np.uint8)
    out[..., :4] = field[..., None].view(np.uint8).reshape(n_records, s, 4)
    out[..., 4:] = hexd[digits.astype(np.intp)]
    return out.reshape(n_records * s, 12)


def _time(fn, repeat: int) -> float:
    best = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t0)
    return float(np.median(best))


def bloom_throughput(
    alphabets: Sequence[int] = (10_000, 100_000, 1_000_000, 10_000_000),
    batch: int = 100_000,
    s: int = 26,
    d: int = 10_000,
    k: int = 4,
    seed: int = 0,
    repeat: int = 3,
) -> list[dict]:
    enc = BloomEncoder(d, k, seed)
    rows = []
    counts = np.full(batch, s, dtype=np.int64)
    for m in alphabets:
        keys = pack_fixed(synthetic_keys(batch, s, m, seed))
        enc.encode_keys(keys, counts)  # warm-up
        sec = _time(lambda: enc.encode_keys(keys, counts), repeat)
        rows.append(_row("throughput", "bloom", m, batch, sec, enc.state_size(), None))
    return rows


def _sets_from_keys(keys: np.ndarray, s: int) -> list[CategoricalSet]:
    out = []
    for r in range(0, len(keys), s):
        out.append(CategoricalSet(tuple(Symbol(int.from_bytes(bytes(kk[:4]), "little"), bytes(kk[4:])) for kk in keys[r : r + s])))
    return out


def codebook_memory(
    alphabets: Sequence[int] = (1_000, 10_000, 100_000),
    d: int = 256,
    seed: int = 0,
    block_rows: int = 1024,
) -> list[dict]:
    """Fill a codebook with exactly ``m`` distinct symbols and measure its size.

    ``bytes`` is the traced allocation growth (codeword blocks plus the index
    table); ``entries`` is the exact entry count.
    """
    rows = []
    for m in alphabets:
        gc.collect()
        tracemalloc.start()
        base = tracemalloc.get_traced_memory()[0]
        cb = Codebook(d, seed, block_rows=block_rows)
        t0 = time.perf_counter()
        for i in range(m):
            cb.codeword(Symbol(i % 26, b"%08x" % i))
        sec = time.perf_counter() - t0
        used = tracemalloc.get_traced_memory()[0] - base
        tracemalloc.stop()
        rows.append(_row("memory", "codebook", m, m, sec, cb.entry_count, used))
        del cb
    return rows


def encoder_comparison(batch: int = 10_000, s: int = 26, d: int = 1_000, alphabet: int = 10_000, seed: int = 0) -> list[dict]:
    """Encode the same batch with each categorical encoder."""
    keys = synthetic_keys(batch, s, alphabet, seed)
    sets = _sets_from_keys(keys, s)
    rows = []
    for name, enc in (
        ("bloom", BloomEncoder(d, 4, seed)),
        ("dense_hash", DenseHashEncoder(d, seed)),
        ("codebook", Codebook(d, seed)),
    ):
        sec = _time(lambda: enc.encode_batch(sets), 1)
        entries = enc.entry_count if isinstance(enc, Codebook) else enc.family.state_size() if isinstance(enc, DenseHashEncoder) else enc.state_size()
        rows.append(_row("encoders", name, alphabet, batch, sec, entries, None))
    return rows


def backend_comparison(n_keys: int = 1_000_000, k: int = 4, key_len: int = 12, seed: int = 0, repeat: int = 3) -> list[dict]:
    """Time ``hash_matrix`` and ``poly_hash`` on each available backend."""
    rng = np.random.default_rng(seed)
    buf, offsets = pack_fixed(rng.integers(0, 256, size=(n_keys, key_len), dtype=np.uint8))
    seeds = draw_family(seed, "bench", k, 2).seeds()
    xs = rng.integers(0, 2**61 - 1, size=n_keys, dtype=np.uint64)
    coeffs = draw_family(seed, "bench", k, 2, "polynomial-p-wise", 2).coefficient_matrix()
    rows = []
    ref = None
    for name, mod in kernels.available_backends().items():
        sec = _time(lambda: mod.hash_matrix(buf, offsets, seeds), repeat)
        out = mod.hash_matrix(buf, offsets, seeds)
        if ref is None:
            ref = out
        rows.append({"suite": "backend", "kernel": "murmur3_matrix", "backend": name, "n": n_keys * k, "seconds": sec,
                     "hashes_per_s": n_keys * k / sec, "matches_reference": bool(np.array_equal(out, ref))})
        sec = _time(lambda: mod.poly_hash(xs, coeffs), repeat)
        rows.append({"suite": "backend", "kernel": "poly61", "backend": name, "n": n_keys * k, "seconds": sec,
                     "hashes_per_s": n_keys * k / sec,
                     "matches_reference": bool(np.array_equal(mod.poly_hash(xs[:1000], coeffs), _pykernels.poly_hash(xs[:1000], coeffs)))})
    return rows


def _row(suite, encoder, alphabet, batch, sec, entries, nbytes) -> dict:
    return {
        "suite": suite,
        "encoder": encoder,
        "alphabet": int(alphabet),
        "batch": int(batch),
        "seconds": float(sec),
        "records_per_s": float(batch / sec) if sec > 0 else float("inf"),
        "entries": entries,
        "bytes": nbytes,
    }


def format_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0].keys())
    cells = [[_cell(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)
