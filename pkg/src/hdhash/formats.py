"""Binary and line-delimited file formats.

Every binary file starts with a 4-byte magic, a version byte and a
little-endian u32 length followed by a JSON header (sorted keys), so equal
inputs give byte-identical files.

* Embeddings (``HDEM``): header, then per record ``label:u8 n_blocks:u8`` and
  per block ``kind:u8 offset:u32 count:u32`` with ``count`` u32 indices
  (sparse) or f64 values (dense).
* Checkpoint (``HDCK``): header, then ``theta`` as f64 and ``nu`` as f64.
* Projection matrix (``HDPM``): header with dims, kind, seed and sparsity,
  then the row-major payload (f32 dense or i8 ternary).
"""
from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from hdhash.core import EmbeddingBatch, HDError, SparseBatch
from hdhash.learn import Model
from hdhash.numenc import ProjectionMatrix

VERSION = 1
EMB_MAGIC = b"HDEM"
CKPT_MAGIC = b"HDCK"
PM_MAGIC = b"HDPM"

_SPARSE, _DENSE = 0, 1


class FormatError(HDError):
    pass


def _write_header(fh: BinaryIO, magic: bytes, header: dict) -> None:
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    fh.write(magic + bytes([VERSION]) + struct.pack("<I", len(blob)) + blob)


def _read_header(fh: BinaryIO, magic: bytes) -> dict:
    head = fh.read(9)
    if len(head) < 9 or head[:4] != magic:
        raise FormatError(f"not a {magic.decode()} file")
    if head[4] != VERSION:
        raise FormatError(f"unsupported version {head[4]}")
    (n,) = struct.unpack("<I", head[5:9])
    blob = fh.read(n)
    if len(blob) != n:
        raise FormatError("truncated header")
    return json.loads(blob)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise FormatError("truncated record")
    return b


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


class EmbeddingWriter:
    def __init__(self, fh: BinaryIO, header: dict):
        self.fh = fh
        self.dim = int(header["dim"])
        self.count = 0
        _write_header(fh, EMB_MAGIC, header)

    def write_batch(self, batch: EmbeddingBatch, labels: np.ndarray) -> None:
        parts = []
        for i in range(batch.n_rows):
            parts.append(struct.pack("<BB", int(labels[i]), len(batch.blocks)))
            for offset, b in batch.blocks:
                if isinstance(b, SparseBatch):
                    idx = b.indices[b.indptr[i] : b.indptr[i + 1]]
                    parts.append(struct.pack("<BII", _SPARSE, offset, idx.size))
                    parts.append(idx.astype("<u4").tobytes())
                else:
                    row = np.asarray(b[i], dtype="<f8")
                    parts.append(struct.pack("<BII", _DENSE, offset, row.size))
                    parts.append(row.tobytes())
        self.fh.write(b"".join(parts))
        self.count += batch.n_rows


def read_embeddings(fh: BinaryIO) -> tuple[dict, Iterator[tuple[int, list]]]:
    """Return the header and an iterator of ``(label, [(kind, offset, array), ...])``."""
    header = _read_header(fh, EMB_MAGIC)

    def records():
        while True:
            head = fh.read(2)
            if not head:
                return
            if len(head) < 2:
                raise FormatError("truncated record")
            label, nb = struct.unpack("<BB", head)
            blocks = []
            for _ in range(nb):
                kind, offset, count = struct.unpack("<BII", _read_exact(fh, 9))
                if kind == _SPARSE:
                    arr = np.frombuffer(_read_exact(fh, 4 * count), dtype="<u4").astype(np.int64)
                elif kind == _DENSE:
                    arr = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8").copy()
                else:
                    raise FormatError(f"unknown block kind {kind}")
                blocks.append(("sparse" if kind == _SPARSE else "dense", offset, arr))
            yield label, blocks

    return header, records()


def record_to_dense(dim: int, blocks: list) -> np.ndarray:
    out = np.zeros(dim)
    for kind, offset, arr in blocks:
        if kind == "sparse":
            out[offset + arr] += 1.0
        else:
            out[offset : offset + arr.size] += arr
    return out


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, model: Model, extra: dict | None = None) -> None:
    header = {
        "dim": model.dim,
        "updates": model.updates,
        "step_size": model.step_size,
        "batch_size": model.batch_size,
        "weight_decay": model.weight_decay,
        "clip": model.clip,
    }
    if extra:
        header.update(extra)
    with open(path, "wb") as fh:
        _write_header(fh, CKPT_MAGIC, header)
        fh.write(np.asarray(model.theta, dtype="<f8").tobytes())
        fh.write(struct.pack("<d", model.intercept))


def load_checkpoint(path: str | Path) -> tuple[Model, dict]:
    with open(path, "rb") as fh:
        header = _read_header(fh, CKPT_MAGIC)
        dim = int(header["dim"])
        theta = np.frombuffer(_read_exact(fh, 8 * dim), dtype="<f8").astype(np.float64)
        (nu,) = struct.unpack("<d", _read_exact(fh, 8))
    m = Model(
        theta,
        nu,
        step_size=header["step_size"],
        batch_size=header["batch_size"],
        updates=header["updates"],
        weight_decay=header["weight_decay"],
        clip=header["clip"],
    )
    return m, header


# ---------------------------------------------------------------------------
# Projection matrices
# ---------------------------------------------------------------------------


def save_projection(path: str | Path, M: ProjectionMatrix) -> None:
    header = {"d": M.d, "n": M.n, "kind": M.kind, "seed": M.seed, "p": M.p}
    payload = M.values.astype("<f4" if M.kind == "dense" else "i1").tobytes()
    with open(path, "wb") as fh:
        _write_header(fh, PM_MAGIC, header)
        fh.write(payload)


def load_projection(path: str | Path) -> ProjectionMatrix:
    with open(path, "rb") as fh:
        h = _read_header(fh, PM_MAGIC)
        dtype = "<f4" if h["kind"] == "dense" else "i1"
        size = h["d"] * h["n"] * np.dtype(dtype).itemsize
        vals = np.frombuffer(_read_exact(fh, size), dtype=dtype).reshape(h["d"], h["n"])
    return ProjectionMatrix(vals.astype(np.float64 if h["kind"] == "dense" else np.int8), h["kind"], h["seed"], h["p"])


# ---------------------------------------------------------------------------
# Line-delimited JSON
# ---------------------------------------------------------------------------


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return _clean(v.item())
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def json_line(record: dict) -> str:
    return json.dumps(_clean(record), sort_keys=True)


def write_jsonl(path_or_fh, records: Iterable[dict]) -> None:
    own = not hasattr(path_or_fh, "write")
    fh = open(path_or_fh, "w") if own else path_or_fh
    try:
        for r in records:
            fh.write(json_line(r) + "\n")
    finally:
        if own:
            fh.close()


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
