"""Compare the compiled hash kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--keys N] [--k K] [--json out.jsonl]

Also times the Bloom hashing of one 26-field record batch on each backend.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from hdhash import bench, formats, kernels
from hdhash.catenc import BloomEncoder
from hdhash.hashing import pack_fixed


def bloom_by_backend(batch: int, seed: int) -> list[dict]:
    keys = pack_fixed(bench.synthetic_keys(batch, 26, 1_000_000, seed))
    counts = np.full(batch, 26, dtype=np.int64)
    enc = BloomEncoder(10_000, 4, seed)
    rows = []
    seeds = enc.hashes.seeds()
    ref = None
    for name, mod in kernels.available_backends().items():
        t0 = time.perf_counter()
        out = mod.hash_matrix(keys[0], keys[1], seeds)
        sec = time.perf_counter() - t0
        ref = out if ref is None else ref
        rows.append({"suite": "backend", "kernel": "bloom_batch_hashes", "backend": name, "n": batch * 26 * 4,
                     "seconds": sec, "hashes_per_s": batch * 26 * 4 / sec, "matches_reference": bool(np.array_equal(out, ref))})
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--keys", type=int, default=1_000_000)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--batch", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json")
    args = ap.parse_args()
    rows = bench.backend_comparison(args.keys, args.k, seed=args.seed)
    rows += bloom_by_backend(args.batch, args.seed)
    print(f"active backend: {kernels.BACKEND}")
    print(bench.format_table(rows))
    by = {(r["kernel"], r["backend"]): r["seconds"] for r in rows}
    for kernel in sorted({r["kernel"] for r in rows}):
        if (kernel, "numpy") in by and (kernel, "cython") in by:
            print(f"{kernel}: cython is {by[(kernel, 'numpy')] / by[(kernel, 'cython')]:.1f}x faster")
    if args.json:
        formats.write_jsonl(args.json, rows)


if __name__ == "__main__":
    main()
