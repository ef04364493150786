"""Bound calculators and brute-force oracles for the dot-product guarantees.

All logarithms are natural.  Monte Carlo helpers take an explicit ``seed``
and trial count, and with a fixed seed their statistics are bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from hdhash import kernels
from hdhash.core import CategoricalSet, DenseEmbedding, HDError, SparseBinaryEmbedding, dot
from hdhash.hashing import HashFamilyKind, derive_seed, draw_family, pack_fixed
from hdhash.learn import separating_params


@dataclass(frozen=True)
class BoundInputs:
    s: int
    k: int = 1
    d: int = 1
    m: float = 2
    delta: float = 0.01
    gamma: float = 1.0

    def __post_init__(self):
        if self.s < 0 or not self.s < self.m:
            raise HDError(f"need 0 <= s < m, got s={self.s}, m={self.m}")
        if not 1 <= self.k <= self.d:
            raise HDError(f"need 1 <= k <= d, got k={self.k}, d={self.d}")
        if not 0.0 < self.delta < 1.0:
            raise HDError("delta must lie in (0, 1)")
        if self.gamma <= 0:
            raise HDError("gamma must be > 0")

    @property
    def log_term(self) -> float:
        return math.log(self.m / self.delta)


def thm2_bound(b: BoundInputs) -> float:
    """Dense-codebook deviation ``4 sqrt((2 s^3 / d) ln(m / delta))``."""
    return 4.0 * math.sqrt(2.0 * b.s**3 / b.d * b.log_term)


def thm3_bound(b: BoundInputs) -> tuple[float, float]:
    """Bloom estimator ``(bias, deviation)``.

    bias = ``s^2 k / (2d)``; deviation = ``max(sqrt((2 s^3/d) L), (4s/3k) L)``
    with ``L = ln(m / delta)``.
    """
    L = b.log_term
    bias = b.s * b.s * b.k / (2.0 * b.d)
    dev = max(math.sqrt(2.0 * b.s**3 / b.d * L), 4.0 * b.s / (3.0 * b.k) * L)
    return bias, dev


def lemma1_lower_bound(b: BoundInputs) -> float:
    """Lower bound on the distinct-bucket count among ``s k`` hashes."""
    s, k, d, L = b.s, b.k, b.d, b.log_term
    return s * k - (s * k) ** 2 / (2.0 * d) - max(math.sqrt(2.0 * s**3 * k * k / d * L), 4.0 * s / 3.0 * L)


def expected_distinct(n_hashes: int, d: int) -> float:
    """``E[# distinct]`` for ``n_hashes`` uniform draws into ``[d]``."""
    return d * (1.0 - (1.0 - 1.0 / d) ** n_hashes)


@dataclass(frozen=True)
class DistinctHashStats:
    s: int
    k: int
    d: int
    trials: int
    seed: int
    mean: float
    std: float
    expected: float
    lower_bound: float
    violation_rate: float


def distinct_bucket_counts(s: int, k: int, d: int, trials: int, seed: int = 0, chunk: int = 20_000) -> np.ndarray:
    """Distinct bucket count among the ``s k`` hashes of ``s`` symbols, per trial.

    Each trial hashes ``s`` distinct symbols.  Keys are ``(trial, symbol)``
    so every trial sees hash values unrelated to the others, which models a
    fresh function draw per trial.
    """
    if trials < 1:
        raise HDError("trials must be >= 1")
    fam = draw_family(seed, "distinct-hash", k, d)
    seeds = fam.seeds()
    out = np.empty(trials, dtype=np.int64)
    sym = np.arange(s, dtype="<u4")
    for start in range(0, trials, chunk):
        t = np.arange(start, min(start + chunk, trials), dtype="<u8")
        keys = np.zeros((t.size, s), dtype=[("t", "<u8"), ("a", "<u4")])
        keys["t"] = t[:, None]
        keys["a"] = sym[None, :]
        buf, offsets = pack_fixed(keys.view(np.uint8).reshape(t.size * s, 12))
        h = kernels.hash_matrix(buf, offsets, seeds) % np.uint32(d)
        h = np.sort(h.reshape(t.size, s * k), axis=1)
        out[start : start + t.size] = 1 + (h[:, 1:] != h[:, :-1]).sum(axis=1) if s * k else 0
    return out


def distinct_hash_count(s: int, k: int, d: int, trials: int, seed: int = 0, m: float = 1e6, delta: float = 0.01) -> DistinctHashStats:
    counts = distinct_bucket_counts(s, k, d, trials, seed)
    lb = lemma1_lower_bound(BoundInputs(s=s, k=k, d=d, m=m, delta=delta))
    return DistinctHashStats(
        s, k, d, trials, seed,
        mean=float(counts.mean()),
        std=float(counts.std(ddof=1)) if trials > 1 else 0.0,
        expected=expected_distinct(s * k, d),
        lower_bound=lb,
        violation_rate=float(np.mean(counts < lb)),
    )


def exact_intersection(x: CategoricalSet, y: CategoricalSet) -> int:
    return len(set(x.symbols) & set(y.symbols))


@dataclass(frozen=True)
class DistortionReport:
    values: np.ndarray = field(repr=False)
    max: float
    median: float
    q90: float
    q95: float
    q99: float

    @classmethod
    def from_values(cls, values) -> "DistortionReport":
        v = np.asarray(values, dtype=np.float64)
        if v.size == 0:
            raise HDError("no pairs")
        q = np.quantile(v, [0.5, 0.9, 0.95, 0.99])
        return cls(v, float(v.max()), *map(float, q))


def distortion_from_dots(encoded_dots, raw_dots, scale: float = 1.0, offset: float = 0.0) -> DistortionReport:
    """``|encoded / scale - offset - raw|`` per pair."""
    e = np.asarray(encoded_dots, dtype=np.float64)
    r = np.asarray(raw_dots, dtype=np.float64)
    return DistortionReport.from_values(np.abs(e / scale - offset - r))


def measure_distortion(
    encode: Callable,
    pairs: Sequence[tuple],
    raw_dot: Callable | None = None,
    scale: float = 1.0,
    offset: float = 0.0,
) -> DistortionReport:
    """Empirical distortion of ``encode`` over ``pairs``.

    ``scale`` and ``offset`` declare the normalization: ``d`` for the dense
    codebook, ``k`` with offset ``s^2 k / (2d)`` for Bloom codes.  ``raw_dot``
    defaults to :func:`exact_intersection` for categorical sets and to the
    Euclidean dot otherwise.
    """
    if not pairs:
        raise HDError("pairs must be nonempty")
    if raw_dot is None:
        raw_dot = exact_intersection if isinstance(pairs[0][0], CategoricalSet) else _np_dot
    enc = [dot(_wrap(encode(a)), _wrap(encode(b))) for a, b in pairs]
    raw = [raw_dot(a, b) for a, b in pairs]
    return distortion_from_dots(enc, raw, scale, offset)


def _np_dot(a, b) -> float:
    return float(np.dot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)))


def _wrap(e):
    if isinstance(e, (DenseEmbedding, SparseBinaryEmbedding)):
        return e
    v = np.asarray(e, dtype=np.float64)
    return DenseEmbedding(v.size, v)


# ---------------------------------------------------------------------------
# Separability
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SeparatedInstance:
    """Two clouds with an analytically known closest hull pair ``(p, q)``.

    ``pos`` lies in a ball of radius ``r`` around ``mu`` and touches the
    hyperplane ``x_0 = a`` only at ``p = a e_0``; ``neg = -pos``.  Hence the
    hulls are separated along ``e_0`` and ``gamma = |p - q|^2 = 4 a^2``.
    """

    pos: np.ndarray
    neg: np.ndarray
    p: np.ndarray
    q: np.ndarray
    gamma: float
    radius: float

    @property
    def raw_dim(self) -> int:
        return self.p.size

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.concatenate([self.pos, self.neg])
        y = np.concatenate([np.ones(len(self.pos)), np.zeros(len(self.neg))])
        return X, y


def build_separated_instance(gamma: float, n_points: int, raw_dim: int, radius: float | None = None, seed: int = 0) -> SeparatedInstance:
    """``n_points`` per class; the first point of each class is ``p`` (resp. ``q``).

    ``radius = 0`` collapses each class to a single point.
    """
    if gamma <= 0:
        raise HDError("gamma must be > 0")
    if n_points < 1 or raw_dim < 1:
        raise HDError("n_points and raw_dim must be >= 1")
    a = math.sqrt(gamma) / 2.0
    r = a if radius is None else float(radius)
    if raw_dim == 1 and r > 0 and n_points > 2:
        raise HDError("raw_dim 1 only admits the two ball endpoints")
    mu = np.zeros(raw_dim)
    mu[0] = a + r
    p = np.zeros(raw_dim)
    p[0] = a
    rng = np.random.default_rng(seed)
    if r == 0:
        pos = np.repeat(p[None, :], n_points, axis=0)
    else:
        u = rng.standard_normal((n_points - 1, raw_dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        # Radii in (0, r]; points strictly off p except the planted one.
        rad = r * rng.uniform(0.2, 1.0, size=(n_points - 1, 1))
        pts = mu + rad * u
        # The ball touches x_0 = a only at p; nudge any exact hit inward.
        pts[:, 0] = np.maximum(pts[:, 0], a + 1e-12)
        pos = np.vstack([p, pts]) if n_points > 1 else p[None, :]
    return SeparatedInstance(pos, -pos, p, -p, float(np.sum((2 * p) ** 2)), r)


def hull_distance_bruteforce(A: np.ndarray, B: np.ndarray, samples: int = 20_000, seed: int = 0) -> float:
    """Squared distance between sampled convex hulls of ``A`` and ``B``.

    Vertices, all pairwise segment grids and random Dirichlet combinations
    are enumerated, so the value upper-bounds the true hull distance and
    converges to it.  Restricted to ``raw_dim <= 3``.
    """
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape[1] > 3:
        raise HDError("brute-force hull distance supports raw_dim <= 3")
    rng = np.random.default_rng(seed)

    def hull_sample(P):
        parts = [P]
        t = np.linspace(0, 1, 33)[:, None, None]
        if len(P) > 1:
            i, j = np.triu_indices(len(P), 1)
            parts.append((t * P[i] + (1 - t) * P[j]).reshape(-1, P.shape[1]))
        parts.append(rng.dirichlet(np.full(len(P), 0.3), size=samples) @ P)
        return np.concatenate(parts)

    SA, SB = hull_sample(A), hull_sample(B)
    best = math.inf
    for chunk in np.array_split(SA, max(1, len(SA) // 2000)):
        d2 = ((chunk[:, None, :] - SB[None, :, :]) ** 2).sum(axis=2)
        best = min(best, float(d2.min()))
    return best


class LinearCodebook:
    """Dense codebook extended linearly to real inputs.

    Coordinate ``j`` of the raw space owns a +-1 codeword ``c_j``; a real
    vector ``x`` maps to ``sum_j x_j c_j / sqrt(d)``.  On s-hot vectors this
    is the codebook sum scaled so that dots need no further normalization.
    """

    def __init__(self, raw_dim: int, d: int, seed: int = 0):
        rng = np.random.default_rng([seed, derive_seed(seed, "linear-codebook", d)])
        self.d = d
        self.C = (rng.integers(0, 2, size=(raw_dim, d), dtype=np.int8) * 2 - 1).astype(np.float64)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.C / math.sqrt(self.d)


def constant_encoder(X: np.ndarray) -> np.ndarray:
    return np.ones((np.atleast_2d(X).shape[0], 1))


def identity_encoder(X: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


@dataclass(frozen=True)
class Theorem1Report:
    separated: bool
    delta: float
    gamma: float
    min_margin: float
    n_points: int
    misclassified: int

    @property
    def bound_ok(self) -> bool:
        return self.delta < self.gamma / 6.0


def relevant_distortion(inst: SeparatedInstance, encode: Callable[[np.ndarray], np.ndarray]) -> float:
    """Max distortion over the pairs the separator depends on.

    These are ``(x, p)`` and ``(x, q)`` for every point ``x`` plus ``(p, p)``
    and ``(q, q)``.
    """
    X, _ = inst.points()
    E = encode(X)
    P = encode(np.vstack([inst.p, inst.q]))
    enc = np.concatenate([E @ P[0], E @ P[1], [P[0] @ P[0], P[1] @ P[1]]])
    raw = np.concatenate([X @ inst.p, X @ inst.q, [inst.p @ inst.p, inst.q @ inst.q]])
    return float(np.max(np.abs(enc - raw)))


def check_theorem1(inst: SeparatedInstance, encode: Callable[[np.ndarray], np.ndarray]) -> Theorem1Report:
    """Build ``(theta, nu)`` at the known ``(p, q)`` and classify every point."""
    X, y = inst.points()
    E = encode(X)
    theta, nu = separating_params(encode(inst.p[None, :]), encode(inst.q[None, :]))
    f = E @ theta + nu
    signed = np.where(y == 1, f, -f)
    wrong = int(np.sum(signed <= 0))
    return Theorem1Report(wrong == 0, relevant_distortion(inst, encode), inst.gamma, float(signed.min()), len(y), wrong)


def theorem1_search(inst: SeparatedInstance, start_d: int = 1024, max_d: int = 1 << 16, seed: int = 0) -> tuple[int, Theorem1Report]:
    """Double ``d`` from ``start_d`` until the measured distortion clears ``gamma / 6``."""
    d = start_d
    while True:
        rep = check_theorem1(inst, LinearCodebook(inst.raw_dim, d, seed))
        if rep.bound_ok or d >= max_d:
            return d, rep
        d *= 2
