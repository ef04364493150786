"""Criteo-format TSV records, preprocessing, synthetic data and streaming splits.

A line is ``label`` followed by 13 integer fields and 26 hex tokens, all
tab-separated; an empty field is missing.
"""
from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from hdhash.core import CategoricalSet, HDError, Symbol

log = logging.getLogger(__name__)

N_NUMERIC = 13
N_CATEGORICAL = 26
MISSING_TOKEN = "∅".encode("utf-8")


class TsvFormatError(HDError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


@dataclass(frozen=True)
class RawRecord:
    label: int
    numeric: tuple[Optional[int], ...]
    categorical: tuple[Optional[bytes], ...]


def parse_tsv_line(line: Union[bytes, str], lineno: int | None = None, n_numeric: int = N_NUMERIC, n_cat: int = N_CATEGORICAL) -> RawRecord:
    if isinstance(line, str):
        line = line.encode("utf-8")
    line = line.rstrip(b"\r\n")
    parts = line.split(b"\t")
    want = 1 + n_numeric + n_cat
    if len(parts) != want:
        raise TsvFormatError(f"expected {want} fields, got {len(parts)}", lineno)
    try:
        label = int(parts[0])
    except ValueError:
        raise TsvFormatError(f"bad label {parts[0]!r}", lineno) from None
    if label not in (0, 1):
        raise TsvFormatError(f"label must be 0 or 1, got {label}", lineno)
    numeric = []
    for j, f in enumerate(parts[1 : 1 + n_numeric]):
        if not f:
            numeric.append(None)
            continue
        try:
            numeric.append(int(f))
        except ValueError:
            raise TsvFormatError(f"numeric field {j + 1} is not an integer: {f!r}", lineno) from None
    cats = tuple(f if f else None for f in parts[1 + n_numeric :])
    return RawRecord(label, tuple(numeric), cats)


def serialize(rec: RawRecord) -> bytes:
    """Inverse of :func:`parse_tsv_line` (normalized form, no newline)."""
    num = [b"" if v is None else str(v).encode() for v in rec.numeric]
    cat = [b"" if v is None else v for v in rec.categorical]
    return b"\t".join([str(rec.label).encode()] + num + cat)


@dataclass
class ParseStats:
    lines: int = 0
    records: int = 0
    errors: list = None

    def __post_init__(self):
        if self.errors is None:
            self.errors = []


def iter_tsv(
    lines: Iterable[Union[bytes, str]],
    stats: ParseStats | None = None,
    n_numeric: int = N_NUMERIC,
    n_cat: int = N_CATEGORICAL,
    max_errors: int = 100,
) -> Iterator[RawRecord]:
    """Parse lines, skipping malformed ones; errors are logged and kept in ``stats``."""
    stats = stats if stats is not None else ParseStats()
    for lineno, line in enumerate(lines, 1):
        stats.lines += 1
        if not line.strip():
            continue
        try:
            rec = parse_tsv_line(line, lineno, n_numeric, n_cat)
        except TsvFormatError as e:
            if len(stats.errors) < max_errors:
                stats.errors.append(e)
            log.warning("%s", e)
            continue
        stats.records += 1
        yield rec


def read_tsv(path: str | Path, stats: ParseStats | None = None, **kw) -> Iterator[RawRecord]:
    with open(path, "rb") as fh:
        yield from iter_tsv(fh, stats, **kw)


def count_lines(path: str | Path) -> int:
    n = 0
    with open(path, "rb") as fh:
        for line in fh:
            if line.strip():
                n += 1
    return n


def write_tsv(records: Iterable[RawRecord], path_or_fh) -> int:
    own = not hasattr(path_or_fh, "write")
    fh = open(path_or_fh, "wb") if own else path_or_fh
    n = 0
    try:
        for rec in records:
            fh.write(serialize(rec) + b"\n")
            n += 1
    finally:
        if own:
            fh.close()
    return n


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def preprocess_numeric_batch(raw: np.ndarray) -> np.ndarray:
    """Rows of raw values (NaN = missing) -> unit-norm rows.

    Missing becomes 0, then ``x <- sign(x) log(1 + |x|)``, then each row is
    normalized; an all-zero row becomes ``e_0``.
    """
    X = np.array(raw, dtype=np.float64, ndmin=2)
    X = np.where(np.isnan(X), 0.0, X)
    X = np.sign(X) * np.log1p(np.abs(X))
    norms = np.linalg.norm(X, axis=1)
    zero = norms == 0
    X[zero, 0] = 1.0
    norms[zero] = 1.0
    return X / norms[:, None]


def preprocess_numeric(raw: Sequence[Optional[int]]) -> np.ndarray:
    vals = np.array([np.nan if v is None else float(v) for v in raw], dtype=np.float64)
    return preprocess_numeric_batch(vals[None, :])[0]


def numeric_matrix(records: Sequence[RawRecord]) -> np.ndarray:
    n = len(records[0].numeric) if records else N_NUMERIC
    out = np.empty((len(records), n))
    for i, r in enumerate(records):
        out[i] = [np.nan if v is None else v for v in r.numeric]
    return out


def record_symbols(rec: RawRecord) -> CategoricalSet:
    """Field-namespaced symbols; a missing token becomes the field's sentinel."""
    return CategoricalSet(tuple(Symbol(i, MISSING_TOKEN if t is None else t) for i, t in enumerate(rec.categorical)))


def record_keys(records: Sequence[RawRecord]) -> list[bytes]:
    """Hash keys of all records' symbols, row-major, exactly as :meth:`Symbol.key`."""
    prefixes = [i.to_bytes(4, "little") for i in range(len(records[0].categorical))] if records else []
    return [prefixes[i] + (MISSING_TOKEN if t is None else t) for r in records for i, t in enumerate(r.categorical)]


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted affine model ``f = theta_n . x_n + theta_c . b(x_c) + nu``.

    Each of the ``s`` fields has ``m // s`` tokens.  The first
    ``informative`` tokens of a field carry weights in ``[-1, 1]`` and appear
    with probability ``informative_rate``; the rest have weight 0.  A record's
    label is drawn with ``P(1) = balance``, then candidates are sampled until
    ``sign(f)`` matches and ``|f| >= margin``.
    """

    n: int = N_NUMERIC
    s: int = N_CATEGORICAL
    m: int = 100_000
    margin: float = 0.5
    balance: float = 0.5
    records: int = 10_000
    seed: int = 0
    informative: int = 8
    informative_rate: float = 0.5
    numeric_weight: float = 1.0
    missing_rate: float = 0.0

    def __post_init__(self):
        if self.m < self.s:
            raise HDError("need m >= s")
        if self.s < 0 or self.n < 1:
            raise HDError("need s >= 0 and n >= 1")
        if not 0.0 < self.balance < 1.0:
            raise HDError("balance must lie in (0, 1)")
        if self.margin < 0:
            raise HDError("margin must be >= 0")
        if self.s and not 0 <= self.informative <= self.m // self.s:
            raise HDError("informative tokens exceed the per-field vocabulary")


@dataclass(frozen=True)
class PlantedModel:
    theta_n: np.ndarray
    token_weights: np.ndarray  # (s, informative)
    nu: float

    def score(self, x_num: np.ndarray, token_ids: np.ndarray) -> np.ndarray:
        """``f`` for unit-norm numeric rows and per-field token ids."""
        f = x_num @ self.theta_n + self.nu
        if token_ids.size:
            w = np.zeros(token_ids.shape)
            inf = token_ids < self.token_weights.shape[1]
            rows, cols = np.nonzero(inf)
            w[rows, cols] = self.token_weights[cols, token_ids[rows, cols]]
            f = f + w.sum(axis=1)
        return f


def planted_model(spec: SyntheticSpec) -> PlantedModel:
    rng = np.random.default_rng([spec.seed, 0x504C41])
    theta_n = rng.standard_normal(spec.n)
    theta_n *= spec.numeric_weight / np.linalg.norm(theta_n)
    w = rng.uniform(-1.0, 1.0, size=(spec.s, spec.informative))
    return PlantedModel(theta_n, w, 0.0)


def token_bytes(field: int, token_id: int) -> bytes:
    """8-hex-char token, looking like a Criteo value."""
    return b"%08x" % ((field * 0x9E3779B1 + token_id * 0x85EBCA6B) & 0xFFFFFFFF)


def _draw_candidates(spec: SyntheticSpec, rng: np.random.Generator, size: int):
    raw = np.round(np.expm1(np.abs(rng.standard_normal((size, spec.n)) * 2.0))) * rng.choice([-1, 1], size=(size, spec.n), p=[0.1, 0.9])
    vocab = spec.m // spec.s if spec.s else 0
    ids = np.empty((size, spec.s), dtype=np.int64)
    if spec.s:
        use_inf = rng.random((size, spec.s)) < spec.informative_rate if spec.informative else np.zeros((size, spec.s), bool)
        inf_ids = rng.integers(0, max(spec.informative, 1), size=(size, spec.s))
        other = rng.integers(spec.informative, vocab, size=(size, spec.s)) if vocab > spec.informative else inf_ids
        ids = np.where(use_inf, inf_ids, other)
    return raw, ids


_CHUNK = 4096
_MAX_PENDING = 2 * _CHUNK
_MAX_REFILLS = 250


def generate_synthetic(spec: SyntheticSpec, return_scores: bool = False) -> Iterator:
    """Yield ``spec.records`` :class:`RawRecord` values (with ``f`` if ``return_scores``).

    Labels come from their own generator, so rejection sampling never shifts
    the label sequence.  Missing numeric fields contribute 0 to the planted
    score, consistent with :func:`preprocess_numeric`.
    """
    rng = np.random.default_rng([spec.seed, 0x53594E])
    labels = np.random.default_rng([spec.seed, 0x4C424C])
    model = planted_model(spec)
    pending: list[list] = [[], []]

    def refill():
        raw, ids = _draw_candidates(spec, rng, _CHUNK)
        if spec.missing_rate:
            raw = np.where(rng.random(raw.shape) < spec.missing_rate, np.nan, raw)
        f = model.score(preprocess_numeric_batch(raw), ids)
        for i in np.flatnonzero(np.abs(f) >= spec.margin):
            q = pending[int(f[i] > 0)]
            # Capped so a skewed candidate class balance cannot grow memory
            # with the stream length; rows are copied off the chunk.
            if len(q) < _MAX_PENDING:
                q.append((raw[i].copy(), ids[i].copy(), f[i]))

    for _ in range(spec.records):
        label = int(labels.random() < spec.balance)
        tries = 0
        while not pending[label]:
            refill()
            tries += 1
            if tries > _MAX_REFILLS:
                raise HDError("margin too large: no candidates clear it")
        r, t, score = pending[label].pop()
        rec = RawRecord(
            label,
            tuple(None if math.isnan(v) else int(v) for v in r),
            tuple(token_bytes(j, int(t[j])) for j in range(spec.s)),
        )
        yield (rec, float(score)) if return_scores else rec


def load_synthetic_spec(path: str | Path, **overrides) -> SyntheticSpec:
    """Read ``key = value`` lines (an optional ``[synthetic]`` header is allowed)."""
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[synthetic]\n" + text
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if "synthetic" not in cp:
        raise HDError(f"{path}: no [synthetic] section")
    return synthetic_spec_from_mapping(dict(cp["synthetic"]), **overrides)


def synthetic_spec_from_mapping(values: dict, **overrides) -> SyntheticSpec:
    known = {f.name: f.type for f in fields(SyntheticSpec)}
    kw = {}
    for key, v in values.items():
        if key not in known:
            raise HDError(f"unknown synthetic key {key!r}")
        kw[key] = float(v) if known[key] == "float" else int(float(v))
    kw.update(overrides)
    return SyntheticSpec(**kw)


# ---------------------------------------------------------------------------
# Splits and batching
# ---------------------------------------------------------------------------

SPLITS = ("train", "val", "test")


def split_bounds(total: int) -> tuple[int, int]:
    """Record-index boundaries: first 6/7 train, the rest halved into val and test."""
    train_end = total * 6 // 7
    val_end = train_end + (total - train_end) // 2
    return train_end, val_end


def split_of(index: int, total: int) -> str:
    train_end, val_end = split_bounds(total)
    return "train" if index < train_end else ("val" if index < val_end else "test")


def iter_split(source: Iterable, total: int, split: str) -> Iterator:
    """Records of one split, single pass and order preserving."""
    if split not in SPLITS:
        raise HDError(f"unknown split {split!r}")
    train_end, val_end = split_bounds(total)
    lo, hi = {"train": (0, train_end), "val": (train_end, val_end), "test": (val_end, total)}[split]
    for i, rec in enumerate(source):
        if i >= hi:
            break
        if i >= lo:
            yield rec


def batched(items: Iterable, batch_size: int) -> Iterator[list]:
    if batch_size < 1:
        raise HDError("batch_size must be >= 1")
    buf = []
    for x in items:
        buf.append(x)
        if len(buf) == batch_size:
            yield buf
            buf = []
    if buf:
        yield buf


def stream_batches(source: Iterable, batch_size: int, total: int, split: str = "train") -> Iterator[list]:
    """Batches of ``split``'s records; ``total`` is the stream's record count."""
    return batched(iter_split(source, total, split), batch_size)
