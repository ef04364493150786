"""Verification suites run by ``hdhash verify`` and the acceptance tests.

Each suite returns one or more report rows::

    {"suite", "params", "statistic", "bound", "pass", "expected_fail", "seconds", ...}

``bound`` is the threshold the statistic is held to (a tolerance or an
analytic bound); any analytic bound that is only reported sits under
``reported``.  An expected-fail row passes when its check fails.
"""
from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from hdhash import bench
from hdhash.bundle import BundleSpec, bundle, bundle_batch
from hdhash.catenc import BloomEncoder, Codebook, bloom_intersection_batch
from hdhash.core import BundleMethod, DenseEmbedding, EmbeddingBatch, EncoderConfig, SparseBatch, SparseBinaryEmbedding, Symbol, dot
from hdhash.hashing import pack_fixed
from hdhash.learn import Model, log_loss, log_loss_from_logits, log_loss_grad, sgd_step
from hdhash.numenc import ProjectionMatrix, dense_rp_batch
from hdhash.verify import (
    BoundInputs,
    build_separated_instance,
    check_theorem1,
    distinct_hash_count,
    distortion_from_dots,
    LinearCodebook,
    thm2_bound,
    thm3_bound,
    theorem1_search,
)


def _row(suite, params, statistic, bound, ok, t0, expected_fail=False, **extra) -> dict:
    row = {
        "suite": suite,
        "params": params,
        "statistic": statistic,
        "bound": bound,
        "pass": bool(not ok if expected_fail else ok),
        "expected_fail": expected_fail,
        "seconds": time.perf_counter() - t0,
    }
    row.update(extra)
    return row


# ---------------------------------------------------------------------------
# Random set pairs
# ---------------------------------------------------------------------------


def set_pair_keys(n_pairs: int, s: int, m: int, intersections: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Symbol ids for ``n_pairs`` pairs of ``s``-sets with planted intersections.

    Pair ``i`` draws ``2s - c_i`` distinct ids from ``[m]``; the first ``c_i``
    are shared.  Returns two ``(n_pairs, s)`` id arrays.
    """
    A = np.empty((n_pairs, s), dtype=np.int64)
    B = np.empty((n_pairs, s), dtype=np.int64)
    for i, c in enumerate(intersections):
        ids = _distinct(rng, m, 2 * s - int(c))
        A[i] = ids[:s]
        B[i] = np.concatenate([ids[: int(c)], ids[s:]])
    return A, B


def _distinct(rng, m: int, n: int) -> np.ndarray:
    out = np.unique(rng.integers(0, m, size=n + 8))
    while out.size < n:
        out = np.unique(np.concatenate([out, rng.integers(0, m, size=n)]))
    return rng.permutation(out)[:n]


def id_keys(ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hash keys for a single alphabet; a symbol id is its 8-byte LE token in field 0."""
    flat = ids.reshape(-1).astype("<u8")
    raw = np.zeros((flat.size, 12), dtype=np.uint8)
    raw[:, 4:] = flat.view(np.uint8).reshape(-1, 8)
    return pack_fixed(raw)


def bloom_rows(enc: BloomEncoder, ids: np.ndarray) -> SparseBatch:
    n, s = ids.shape
    return enc.encode_keys(id_keys(ids), np.full(n, s, dtype=np.int64))


# ---------------------------------------------------------------------------
# 1-3: Bloom codes and hashing
# ---------------------------------------------------------------------------


def bloom_intersection(s=26, m=1_000_000, d=10_000, k=4, pairs=1000, seed=0, tolerance=2.0, delta=0.01) -> dict:
    t0 = time.perf_counter()
    rng = np.random.default_rng([seed, 1])
    truth = np.arange(pairs) % (s + 1)
    A, B = set_pair_keys(pairs, s, m, truth, rng)
    enc = BloomEncoder(d, k, seed)
    est = bloom_intersection_batch(bloom_rows(enc, A), bloom_rows(enc, B), k, s)
    # Oracle: the planted counts, cross-checked by direct set comparison.
    exact = np.array([len(set(a) & set(b)) for a, b in zip(A, B)])
    assert np.array_equal(exact, truth)
    mae = float(np.mean(np.abs(est - exact)))
    bias, dev = thm3_bound(BoundInputs(s=s, k=k, d=d, m=m, delta=delta))
    return _row("bloom_intersection", dict(s=s, m=m, d=d, k=k, pairs=pairs, seed=seed), mae, tolerance, mae < tolerance, t0,
                reported={"thm3_bias": bias, "thm3_deviation": dev}, max_abs_error=float(np.max(np.abs(est - exact))))


def bloom_membership(s=26, m=1_000_000, d=10_000, k=4, probes=100_000, seed=0, fp_probes=100_000) -> dict:
    t0 = time.perf_counter()
    rng = np.random.default_rng([seed, 2])
    n_sets = math.ceil(probes / s)
    ids = np.stack([_distinct(rng, m, s) for _ in range(n_sets)])
    enc = BloomEncoder(d, k, seed)
    sets = bloom_rows(enc, ids)
    # Member probes: every symbol of every set, keyed by its row.
    sym = enc.hashes.buckets(id_keys(ids))  # (n_sets * s, k)
    rows = np.repeat(np.arange(n_sets), s)[:probes]
    sym = sym[:probes]
    failures = int(np.sum(_probe(sets, rows, sym) == 0))
    # Non-member probes with ids outside [m].
    fp_rows = rng.integers(0, n_sets, size=fp_probes)
    fp_sym = enc.hashes.buckets(id_keys(m + rng.permutation(fp_probes)[:, None]))
    fp_rate = float(np.mean(_probe(sets, fp_rows, fp_sym)))
    return _row("bloom_membership", dict(s=s, m=m, d=d, k=k, probes=probes, seed=seed), failures, 0, failures == 0, t0,
                false_positive_rate=fp_rate, fp_probes=fp_probes)


def _probe(sets: SparseBatch, rows: np.ndarray, buckets: np.ndarray) -> np.ndarray:
    """1 where every distinct bucket of the probe is active in its set's row."""
    d = sets.dim
    active = np.repeat(np.arange(sets.n_rows, dtype=np.int64), sets.nnz()) * d + sets.indices
    keys = rows[:, None].astype(np.int64) * d + buckets
    hit = np.isin(keys, active, assume_unique=False)
    return hit.all(axis=1).astype(np.int64)


def distinct_hash(s=26, k=4, d=10_000, trials=100_000, m=1_000_000, delta=0.01, seed=0, rel_tol=0.01) -> list[dict]:
    t0 = time.perf_counter()
    st = distinct_hash_count(s, k, d, trials, seed, m, delta)
    rel = abs(st.mean - st.expected) / st.expected
    p = dict(s=s, k=k, d=d, trials=trials, m=m, delta=delta, seed=seed)
    return [
        _row("distinct_hash_mean", p, st.mean, st.expected, rel <= rel_tol, t0, relative_error=rel, rel_tol=rel_tol, std=st.std),
        _row("distinct_hash_lemma1", p, st.violation_rate, delta, st.violation_rate <= delta, t0, lower_bound=st.lower_bound),
    ]


# ---------------------------------------------------------------------------
# 4: distortion scaling
# ---------------------------------------------------------------------------


def codebook_dots(cb: Codebook, A: np.ndarray, B: np.ndarray, chunk: int = 500) -> np.ndarray:
    """``phi(x) . phi(x')`` for codebook sums, computed in row chunks."""
    M = np.stack([cb.codeword(Symbol(0, int(i).to_bytes(8, "little"))) for i in range(int(max(A.max(), B.max())) + 1)])
    out = np.empty(len(A))
    for lo in range(0, len(A), chunk):
        a = M[A[lo : lo + chunk]].astype(np.int32).sum(axis=1)
        b = M[B[lo : lo + chunk]].astype(np.int32).sum(axis=1)
        out[lo : lo + chunk] = np.einsum("ij,ij->i", a, b, dtype=np.int64)
    return out


def distortion_scaling(s=4, dims=(1024, 4096, 16384), pairs=10_000, m=2000, k=4, seed=0, ratio_band=(1.7, 2.3)) -> list[dict]:
    """Median distortion against ``d`` for the codebook (asserted) and Bloom (reported)."""
    t0 = time.perf_counter()
    rng = np.random.default_rng([seed, 4])
    truth = rng.integers(0, s + 1, size=pairs)
    A, B = set_pair_keys(pairs, s, m, truth, rng)
    cb_med, bl_med, rows = [], [], []
    for d in dims:
        cb = Codebook(d, seed)
        cb_med.append(distortion_from_dots(codebook_dots(cb, A, B), truth, scale=d).median)
        enc = BloomEncoder(d, k, seed)
        est = bloom_intersection_batch(bloom_rows(enc, A), bloom_rows(enc, B), k, s)
        bl_med.append(float(np.median(np.abs(est - truth))))
    ratios = [cb_med[i] / cb_med[i + 1] for i in range(len(dims) - 1)]
    ok = all(ratio_band[0] <= r <= ratio_band[1] for r in ratios)
    bloom_ratios = [bl_med[i] / bl_med[i + 1] if bl_med[i + 1] > 0 else None for i in range(len(dims) - 1)]
    thm2 = [thm2_bound(BoundInputs(s=s, d=d, m=m, delta=0.01)) for d in dims]
    rows.append(_row("distortion_codebook", dict(s=s, dims=list(dims), pairs=pairs, m=m, seed=seed), ratios, list(ratio_band), ok, t0,
                     medians=cb_med, reported={"thm2_bound": thm2}))
    rows.append(_row("distortion_bloom", dict(s=s, k=k, dims=list(dims), pairs=pairs, m=m, seed=seed), bloom_ratios, None, True, t0,
                     medians=bl_med, reported={"note": "reported only"}))
    return rows


# ---------------------------------------------------------------------------
# 5: sign random projection
# ---------------------------------------------------------------------------


def unit_pair(n: int, theta: float, rng) -> tuple[np.ndarray, np.ndarray]:
    u = rng.standard_normal(n)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(n)
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    return u, math.cos(theta) * u + math.sin(theta) * v


def sign_rp_angle(thetas=(math.pi / 6, math.pi / 3, math.pi / 2), d=4096, draws=50, n=13, seed=0) -> list[dict]:
    rows = []
    for theta in thetas:
        t0 = time.perf_counter()
        rng = np.random.default_rng([seed, 5, int(theta * 1e6)])
        x, y = unit_pair(n, theta, rng)
        vals = []
        for r in range(draws):
            M = ProjectionMatrix.dense(d, n, seed=[seed, 5, r])
            e = dense_rp_batch(M, np.stack([x, y])).astype(np.int64)
            vals.append((e[0] @ e[1]) / d)
        mean = float(np.mean(vals))
        target = 1 - 2 * theta / math.pi
        band = 3 * math.sqrt(1.0 / (d * draws))
        rows.append(_row("sign_rp_angle", dict(theta=theta, d=d, draws=draws, n=n, seed=seed), mean, [target - band, target + band],
                         abs(mean - target) <= band, t0, target=target, first_order=2 / math.pi * float(x @ y)))
    return rows


# ---------------------------------------------------------------------------
# 6: Theorem 1
# ---------------------------------------------------------------------------


def theorem1(gamma=1.0, n_points=2000, raw_dim=26, seed=0, start_d=1024, tiny_d=8) -> list[dict]:
    t0 = time.perf_counter()
    inst = build_separated_instance(gamma, n_points // 2, raw_dim, seed=seed)
    d, rep = theorem1_search(inst, start_d, seed=seed)
    ok = rep.bound_ok and rep.separated and rep.n_points == n_points
    p = dict(gamma=gamma, n_points=n_points, raw_dim=raw_dim, seed=seed)
    rows = [_row("theorem1", dict(p, d=d), rep.delta, gamma / 6, ok, t0, classified=rep.n_points - rep.misclassified,
                 min_margin=rep.min_margin)]
    t0 = time.perf_counter()
    tiny = check_theorem1(inst, LinearCodebook(raw_dim, tiny_d, seed))
    rows.append(_row("theorem1_tiny_d", dict(p, d=tiny_d), tiny.delta, gamma / 6, tiny.bound_ok, t0, expected_fail=True,
                     classified=tiny.n_points - tiny.misclassified))
    return rows


# ---------------------------------------------------------------------------
# 7: learning
# ---------------------------------------------------------------------------

LEARN_CONFIG = dict(numeric_encoder="sjlt_relaxed", sjlt_sparsity=0.4, d_num=10_000, d_cat=10_000, k_hash=4,
                    bundling="concat", numeric_scale=0.1)


def learning(records=140_000, seed=0, step_size=0.5, validate_every=30_000, patience=3, workers=1, min_acc=0.99, min_auc=0.995) -> list[dict]:
    from hdhash.ingest import SyntheticSpec, batched, generate_synthetic, iter_split
    from hdhash.learn import TrainProtocol, evaluate, run_training
    from hdhash.pipeline import RecordEncoder, encode_stream

    t0 = time.perf_counter()
    spec = SyntheticSpec(n=13, s=26, m=100_000, margin=0.5, records=records, seed=seed)
    recs = list(generate_synthetic(spec))
    enc = RecordEncoder(EncoderConfig(master_seed=seed, **LEARN_CONFIG))
    # Encoded validation rows are dense in the numeric half (~80 KB each), so
    # keep the raw records and re-encode per round.
    val_recs = list(iter_split(recs, records, "val"))
    model = Model.zeros(enc.dim, step_size=step_size)
    train = encode_stream(enc, batched(iter_split(recs, records, "train"), model.batch_size), workers)
    res = run_training(TrainProtocol(validate_every=validate_every, patience=patience), model, train,
                       lambda: encode_stream(enc, batched(val_recs, 1024), workers))
    _, test_auc, probs, y = evaluate(model, encode_stream(enc, batched(iter_split(recs, records, "test"), 1024), workers))
    acc = float(np.mean((probs >= 0.5) == (y == 1)))
    p = dict(records=records, seed=seed, step_size=step_size, validate_every=validate_every, patience=patience, **LEARN_CONFIG)
    extra = dict(rounds=len(res.metrics), stopped_early=res.stopped_early)
    return [
        _row("learning_accuracy", p, acc, min_acc, acc >= min_acc, t0, **extra),
        _row("learning_auc", p, test_auc, min_auc, test_auc >= min_auc, t0, **extra),
    ]


# ---------------------------------------------------------------------------
# 8: throughput and memory
# ---------------------------------------------------------------------------


def throughput(alphabets=(10_000, 10_000_000), batch=100_000, seed=0, max_ratio=2.0) -> dict:
    t0 = time.perf_counter()
    rows = bench.bloom_throughput(alphabets, batch=batch, seed=seed)
    ratio = rows[-1]["seconds"] / rows[0]["seconds"]
    return _row("bloom_throughput", dict(alphabets=list(alphabets), batch=batch, seed=seed), ratio, max_ratio, ratio < max_ratio, t0,
                batch_seconds=[r["seconds"] for r in rows])


def codebook_memory(alphabets=(1_000, 10_000, 100_000), d=256, seed=0, factor=2.0) -> list[dict]:
    t0 = time.perf_counter()
    rows = bench.codebook_memory(alphabets, d, seed)
    entries_ok = all(r["entries"] == r["alphabet"] for r in rows)
    per = rows[0]["bytes"] / rows[0]["alphabet"]
    ratios = [r["bytes"] / (per * r["alphabet"]) for r in rows]
    bytes_ok = all(1 / factor <= q <= factor for q in ratios)
    p = dict(alphabets=list(alphabets), d=d, seed=seed)
    return [
        _row("codebook_entries", p, [r["entries"] for r in rows], list(alphabets), entries_ok, t0),
        _row("codebook_bytes", p, ratios, [1 / factor, factor], bytes_ok, t0, bytes=[r["bytes"] for r in rows],
             growth=rows[-1]["bytes"] / rows[0]["bytes"]),
    ]


# ---------------------------------------------------------------------------
# 9-12: learner and bundling identities
# ---------------------------------------------------------------------------


def gradient_check(cases=50, dim=20, eps=1e-5, seed=0, tol=1e-6) -> dict:
    """Analytic gradient against central differences on all coordinates.

    Inputs are scaled so logits are O(1); the error is
    ``|g - g_fd| / max(|g|, |g_fd|)`` over the full ``(theta, nu)`` gradient.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng([seed, 9])
    worst = 0.0
    for _ in range(cases):
        theta = rng.standard_normal(dim)
        nu = float(rng.standard_normal())
        e = rng.standard_normal(dim) / math.sqrt(dim)
        y = float(rng.integers(0, 2))
        g, g_nu = log_loss_grad(theta, nu, e[None, :], np.array([y]))
        f = lambda th, b: log_loss_from_logits(np.array([th @ e + b]), np.array([y]))
        num = np.empty(dim)
        for j in range(dim):
            step = np.zeros(dim)
            step[j] = eps
            num[j] = (f(theta + step, nu) - f(theta - step, nu)) / (2 * eps)
        num_nu = (f(theta, nu + eps) - f(theta, nu - eps)) / (2 * eps)
        a = np.append(g, g_nu)
        b = np.append(num, num_nu)
        worst = max(worst, float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)))
    return _row("gradient_check", dict(cases=cases, dim=dim, eps=eps, seed=seed), worst, tol, worst < tol, t0)


def convex_dataset(n=200, dim=5, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """A fixed non-separable logistic dataset with standardized features."""
    rng = np.random.default_rng([seed, 10])
    X = rng.standard_normal((n, dim))
    w = rng.standard_normal(dim)
    y = (rng.random(n) < 1 / (1 + np.exp(-(X @ w)))).astype(np.float64)
    return X, y


def reference_optimum(X: np.ndarray, y: np.ndarray) -> float:
    def f(w):
        z = X @ w[:-1] + w[-1]
        r = 1 / (1 + np.exp(-z)) - y
        return log_loss_from_logits(z, y), np.append(r @ X, r.sum()) / len(y)

    res = minimize(f, np.zeros(X.shape[1] + 1), jac=True, method="L-BFGS-B", options={"gtol": 1e-12, "ftol": 1e-15, "maxiter": 10_000})
    return float(res.fun)


def convex_oracle(epochs=500, seed=0, tol=1e-3, step_size=0.05, batch_size=50) -> dict:
    """Mini-batch SGD at the default step size against an L-BFGS reference.

    The batch is smaller than the default 256 so that an epoch over the
    200 examples is more than one full-batch step.
    """
    t0 = time.perf_counter()
    X, y = convex_dataset(seed=seed)
    model = Model.zeros(X.shape[1], step_size=step_size, batch_size=batch_size)
    batch = EmbeddingBatch.of(X)
    for _ in range(epochs):
        for lo in range(0, len(y), model.batch_size):
            sgd_step(model, batch.take(np.arange(lo, min(lo + model.batch_size, len(y)))), y[lo : lo + model.batch_size])
    final = log_loss(model, batch, y)
    opt = reference_optimum(X, y)
    return _row("convex_oracle", dict(n=len(y), epochs=epochs, step_size=step_size, batch_size=batch_size, seed=seed), final - opt, tol, abs(final - opt) < tol, t0,
                sgd_loss=final, reference_loss=opt)


def random_sparse(rng, d: int, density: float) -> SparseBinaryEmbedding:
    return SparseBinaryEmbedding(d, np.flatnonzero(rng.random(d) < density))


def bundling_identities(pairs=1000, d=200, seed=0) -> list[dict]:
    t0 = time.perf_counter()
    rng = np.random.default_rng([seed, 11])
    spec_or = BundleSpec(BundleMethod.THRESHOLDED_SUM, d, d)
    spec_cat = BundleSpec(BundleMethod.CONCAT, d, d // 2)
    max_bad = dec_bad = 0
    for _ in range(pairs):
        a, b = random_sparse(rng, d, rng.uniform(0, 0.5)), random_sparse(rng, d, rng.uniform(0, 0.5))
        got = bundle(spec_or, a, b).to_dense().values
        if not np.array_equal(got, np.maximum(a.to_dense().values, b.to_dense().values)):
            max_bad += 1
        x1, x2 = rng.integers(-3, 4, size=d).astype(np.float64), rng.integers(-3, 4, size=d).astype(np.float64)
        y1, y2 = random_sparse(rng, d // 2, 0.3), random_sparse(rng, d // 2, 0.3)
        e1 = bundle(spec_cat, DenseEmbedding(d, x1), y1)
        e2 = bundle(spec_cat, DenseEmbedding(d, x2), y2)
        if dot(e1, e2) != float(x1 @ x2) + dot(y1, y2):
            dec_bad += 1
    p = dict(pairs=pairs, d=d, seed=seed)
    return [
        _row("bundle_or_is_max", p, max_bad, 0, max_bad == 0, t0),
        _row("bundle_concat_dot", p, dec_bad, 0, dec_bad == 0, t0),
    ]


def sparse_overfitting(steps=1000, d=10_000, s=26, k=4, seed=0) -> dict:
    """Each single-example step changes at most ``|active| + 1`` parameters."""
    t0 = time.perf_counter()
    rng = np.random.default_rng([seed, 12])
    enc = BloomEncoder(d, k, seed)
    model = Model.zeros(d, step_size=0.5)
    worst_excess = -math.inf
    violations = 0
    for _ in range(steps):
        row = bloom_rows(enc, rng.integers(0, 10**6, size=(1, s)))
        before, nu = model.theta.copy(), model.intercept
        sgd_step(model, EmbeddingBatch.of(row), [float(rng.integers(0, 2))])
        changed = int(np.sum(model.theta != before)) + int(model.intercept != nu)
        excess = changed - (row.indices.size + 1)
        worst_excess = max(worst_excess, excess)
        violations += excess > 0
    return _row("sparse_overfitting", dict(steps=steps, d=d, s=s, k=k, seed=seed), violations, 0, violations == 0, t0,
                worst_excess=worst_excess)


SUITES: dict[str, Callable] = {
    "bloom_intersection": bloom_intersection,
    "bloom_membership": bloom_membership,
    "distinct_hash": distinct_hash,
    "distortion_scaling": distortion_scaling,
    "sign_rp_angle": sign_rp_angle,
    "theorem1": theorem1,
    "learning": learning,
    "throughput": throughput,
    "codebook_memory": codebook_memory,
    "gradient_check": gradient_check,
    "convex_oracle": convex_oracle,
    "bundling_identities": bundling_identities,
    "sparse_overfitting": sparse_overfitting,
}


def run_suite(name: str, seed: int = 0, **overrides) -> list[dict]:
    out = SUITES[name](seed=seed, **overrides)
    return out if isinstance(out, list) else [out]
