"""Seeded hash families.

Two families are provided:

* ``seeded-murmur`` -- Murmur3 x86 32-bit keyed by a 32-bit seed, reduced
  modulo the range.  This is the fast practical choice.
* ``polynomial-p-wise`` -- degree ``p - 1`` polynomials with random
  coefficients over GF(2**61 - 1), reduced modulo the range.  Drawing the
  coefficients uniformly gives a p-wise independent family over the field.

Seeds are derived from a master seed by a counter-mode splitter built on
Murmur3 itself, so no second PRNG enters the determinism root.
"""
from __future__ import annotations

import builtins
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from hdhash import kernels
from hdhash.core import HashFamilyKind, HDError

MERSENNE_61 = (1 << 61) - 1

# Inputs longer than this many bytes are folded into the field.
_DIRECT_BYTES = 7
_FOLD_BASE = 0x1F3D5B79A3C1E5F7 % MERSENNE_61

Key = Union[bytes, int]


def murmur3_32(data: bytes, seed: int = 0) -> int:
    return kernels.murmur3_32(data, seed & 0xFFFFFFFF)


def pack_keys(keys: Sequence[bytes]) -> tuple[np.ndarray, np.ndarray]:
    """Pack byte strings into the (buffer, offsets) layout the kernels take."""
    lengths = np.fromiter((len(k) for k in keys), dtype=np.int64, count=len(keys))
    offsets = np.zeros(len(keys) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    buf = np.frombuffer(b"".join(keys), dtype=np.uint8)
    return buf, offsets


def pack_fixed(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pack an ``(n, width)`` uint8 array of equal-length keys."""
    keys = np.ascontiguousarray(keys, dtype=np.uint8)
    n, width = keys.shape
    return keys.ravel(), np.arange(n + 1, dtype=np.int64) * width


def index_key(i: int) -> bytes:
    """Byte form of a feature index for sign/bucket hashes over ``[n]``."""
    return struct.pack("<Q", i)


def index_keys(indices: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype="<u8")
    return pack_fixed(idx.view(np.uint8).reshape(-1, 8))


def derive_seed(master_seed: int, role_tag: str, i: int) -> int:
    """Counter-mode seed splitter.

    The message is ``master_seed (8 bytes LE) || role_tag (zero-padded to a
    multiple of 4) || i (4 bytes LE)``.  Because the counter occupies a full
    Murmur3 block after a fixed prefix, ``i -> seed`` is injective for a given
    (master_seed, role_tag).
    """
    tag = role_tag.encode("utf-8")
    tag += b"\x00" * (-len(tag) % 4)
    msg = struct.pack("<Q", master_seed & 0xFFFFFFFFFFFFFFFF) + tag + struct.pack("<I", i & 0xFFFFFFFF)
    return murmur3_32(msg, 0)


def derive_seed64(master_seed: int, role_tag: str, i: int) -> int:
    hi = derive_seed(master_seed, role_tag + "#hi", i)
    lo = derive_seed(master_seed, role_tag + "#lo", i)
    return (hi << 32) | lo


def to_field_element(x: Key) -> int:
    """Map an input to GF(2**61 - 1).

    Integers are reduced directly; byte strings of at most 7 bytes are read as
    little-endian integers.  Longer strings are folded by Horner's rule over
    7-byte limbs (length first), which collides with probability at most
    ``len / 2**61`` for a given pair.
    """
    if isinstance(x, (int, np.integer)):
        return int(x) % MERSENNE_61
    x = bytes(x)
    if len(x) <= _DIRECT_BYTES:
        return int.from_bytes(x, "little")
    acc = len(x)
    for j in range(0, len(x), _DIRECT_BYTES):
        acc = (acc * _FOLD_BASE + int.from_bytes(x[j : j + _DIRECT_BYTES], "little")) % MERSENNE_61
    return acc


@dataclass(frozen=True)
class HashFunction:
    """One member of a hash family with output range ``[0, range)``."""

    family: HashFamilyKind
    range: int
    seed: int = 0
    coeffs: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "family", HashFamilyKind(self.family))
        if self.family is HashFamilyKind.POLYNOMIAL:
            if not self.coeffs:
                raise HDError("polynomial hash needs at least one coefficient")
            if any(not 0 <= c < MERSENNE_61 for c in self.coeffs):
                raise HDError("coefficients must lie in [0, 2**61 - 1)")
        else:
            if not 0 <= self.seed < 2**32:
                raise HDError("murmur seed must be a 32-bit unsigned integer")

    @property
    def independence(self) -> int | None:
        return len(self.coeffs) if self.family is HashFamilyKind.POLYNOMIAL else None

    def raw(self, x: Key) -> int:
        """Unreduced hash value (32-bit for murmur, field element for polynomial)."""
        if self.family is HashFamilyKind.MURMUR:
            data = index_key(x) if isinstance(x, (int, np.integer)) else x
            return murmur3_32(data, self.seed)
        v = to_field_element(x)
        acc = 0
        for c in reversed(self.coeffs):
            acc = (acc * v + c) % MERSENNE_61
        return acc

    def with_range(self, new_range: int) -> "HashFunction":
        return HashFunction(self.family, new_range, self.seed, self.coeffs)


def eval_bucket(f: HashFunction, data: Key) -> int:
    """Bucket of ``data`` under ``f``, in ``[0, f.range)``."""
    if f.range < 1:
        raise HDError("hash range must be >= 1")
    return f.raw(data) % f.range


def eval_sign(f: HashFunction, index: int) -> int:
    """+1 if the range-2 bucket of ``index`` is 1, else -1."""
    return 1 if eval_bucket(f.with_range(2), int(index)) == 1 else -1


@dataclass(frozen=True)
class HashFamilyDraw:
    """``k`` functions drawn from one family, reproducible from the master seed."""

    master_seed: int
    role_tag: str
    functions: tuple[HashFunction, ...]

    @property
    def k(self) -> int:
        return len(self.functions)

    @property
    def range(self) -> int:
        return self.functions[0].range

    @property
    def family(self) -> HashFamilyKind:
        return self.functions[0].family

    def seeds(self) -> np.ndarray:
        return np.array([f.seed for f in self.functions], dtype=np.uint32)

    def coefficient_matrix(self) -> np.ndarray:
        return np.array([f.coeffs for f in self.functions], dtype=np.uint64)

    def state_size(self) -> int:
        """Number of stored integers (seeds or field coefficients)."""
        if self.family is HashFamilyKind.POLYNOMIAL:
            return sum(len(f.coeffs) for f in self.functions)
        return self.k

    def raw_matrix(self, keys: Sequence[Key] | tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        """Unreduced hashes, shape ``(n_keys, k)``.

        ``keys`` is a sequence of byte strings, or an already packed
        ``(buffer, offsets)`` pair for the murmur family.
        """
        if self.family is HashFamilyKind.MURMUR:
            buf, offsets = keys if isinstance(keys, tuple) else pack_keys([_as_bytes(x) for x in keys])
            return kernels.hash_matrix(buf, offsets, self.seeds()).astype(np.uint64)
        if isinstance(keys, tuple):
            buf, offsets = keys
            keys = [bytes(buf[offsets[i] : offsets[i + 1]]) for i in range(offsets.size - 1)]
        xs = np.array([to_field_element(x) for x in keys], dtype=np.uint64)
        return kernels.poly_hash(xs, self.coefficient_matrix())

    def buckets(self, keys) -> np.ndarray:
        """Buckets in ``[0, range)``, shape ``(n_keys, k)``, dtype int64."""
        return (self.raw_matrix(keys) % np.uint64(self.range)).astype(np.int64)

    def signs(self, keys) -> np.ndarray:
        """+-1 values, shape ``(n_keys, k)``, dtype int8."""
        bit = (self.raw_matrix(keys) % np.uint64(2)).astype(np.int8)
        return 2 * bit - 1


def _as_bytes(x: Key) -> bytes:
    return index_key(int(x)) if isinstance(x, (int, np.integer)) else bytes(x)


def draw_family(
    master_seed: int,
    role_tag: str,
    k: int,
    range: int,
    family: HashFamilyKind | str = HashFamilyKind.MURMUR,
    p: int = 2,
) -> HashFamilyDraw:
    """Draw ``k`` hash functions into ``[0, range)`` for one role."""
    if k < 1:
        raise HDError("k must be >= 1")
    if range < 1:
        raise HDError("hash range must be >= 1")
    family = HashFamilyKind(family)
    if family is HashFamilyKind.MURMUR:
        fns = tuple(HashFunction(family, range, seed=derive_seed(master_seed, role_tag, i)) for i in builtins.range(k))
    else:
        if p < 1:
            raise HDError("independence p must be >= 1")
        fns = []
        for i in builtins.range(k):
            coeffs = tuple(derive_seed64(master_seed, role_tag + "/poly", i * p + j) % MERSENNE_61 for j in builtins.range(p))
            fns.append(HashFunction(family, range, coeffs=coeffs))
        fns = tuple(fns)
    return HashFamilyDraw(master_seed, role_tag, fns)


def load_test_vectors(path: str | Path) -> list[tuple[bytes, int, int]]:
    """Read ``hex-bytes<TAB>seed<TAB>expected-hash`` lines.

    Blank lines and ``#`` comments are skipped.  Seed and expected hash accept
    decimal or ``0x`` hex.
    """
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.strip(" \r\n").split("\t")
        if len(parts) != 3:
            raise HDError(f"{path}:{lineno}: expected 3 tab-separated fields")
        out.append((bytes.fromhex(parts[0]), int(parts[1], 0), int(parts[2], 0)))
    return out


def default_test_vectors_path() -> Path:
    return Path(__file__).parent / "data" / "murmur3_vectors.tsv"
