import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdhash.core import DenseEmbedding, DimensionMismatch, EmbeddingBatch, HDError, SparseBatch, SparseBinaryEmbedding
from hdhash.learn import (
    EarlyStopping,
    Model,
    TrainProtocol,
    auc,
    evaluate,
    log_loss,
    log_loss_grad,
    predict_prob,
    run_training,
    separating_params,
    sgd_step,
)


def dense(v):
    return DenseEmbedding(len(v), np.asarray(v, dtype=np.float64))


class TestPredict:
    def test_zero_model(self):
        assert predict_prob(Model.zeros(3), dense([1, 2, 3])) == 0.5

    def test_large_logit_stable(self):
        m = Model(np.array([40.0]))
        p = predict_prob(m, dense([1.0]))
        assert 1 - 1e-15 < p <= 1.0
        assert predict_prob(Model(np.array([-800.0])), dense([1.0])) >= 0.0

    def test_hand_value(self):
        m = Model(np.array([1.0, -1.0]))
        assert predict_prob(m, dense([1, 0])) == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-12)
        assert predict_prob(m, dense([1, 0])) == pytest.approx(0.731059, abs=1e-6)

    def test_sparse_input(self):
        m = Model(np.array([0.5, 0.0, 1.5]))
        assert predict_prob(m, SparseBinaryEmbedding(3, [0, 2])) == pytest.approx(1 / (1 + math.exp(-2)))

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            predict_prob(Model.zeros(2), dense([1, 2, 3]))


class TestSgdStep:
    def test_zero_residual_unchanged(self):
        m = Model(np.array([1000.0, 0.0]))
        before = m.theta.copy()
        sgd_step(m, [dense([1, 0])], [1])
        np.testing.assert_array_equal(m.theta, before)
        assert m.intercept == 0.0

    def test_one_hot(self):
        m = Model.zeros(5, step_size=0.1)
        sgd_step(m, [SparseBinaryEmbedding(5, [2])], [1])
        assert m.theta.tolist() == [0, 0, 0.05, 0, 0]
        assert m.intercept == 0.05
        assert m.updates == 1

    def test_mean_over_batch(self, rng):
        E = rng.standard_normal((8, 4))
        y = rng.integers(0, 2, 8).astype(float)
        m = Model(rng.standard_normal(4), 0.3, step_size=0.2)
        g, g_nu = log_loss_grad(m.theta, m.intercept, E, y)
        theta0, nu0 = m.theta.copy(), m.intercept
        sgd_step(m, [dense(e) for e in E], y)
        np.testing.assert_allclose(m.theta, theta0 - 0.2 * g)
        assert m.intercept == pytest.approx(nu0 - 0.2 * g_nu)

    def test_sparse_dense_equivalence(self, rng):
        # Dyadic parameters keep every float operation exact.
        for _ in range(50):
            d = 64
            rows = [SparseBinaryEmbedding(d, np.flatnonzero(rng.random(d) < 0.2)) for _ in range(4)]
            y = rng.integers(0, 2, 4).astype(float)
            theta = rng.integers(-8, 9, d) / 8.0
            a, b = Model(theta.copy(), 0.25, step_size=0.5), Model(theta.copy(), 0.25, step_size=0.5)
            sgd_step(a, EmbeddingBatch.of(SparseBatch.from_rows(d, rows)), y)
            sgd_step(b, [r.to_dense() for r in rows], y)
            np.testing.assert_array_equal(a.theta, b.theta)
            assert a.intercept == b.intercept

    def test_sparse_dense_equivalence_multi_step(self, rng):
        d = 100
        a, b = Model.zeros(d), Model.zeros(d)
        for _ in range(30):
            rows = [SparseBinaryEmbedding(d, np.flatnonzero(rng.random(d) < 0.1)) for _ in range(8)]
            y = rng.integers(0, 2, 8).astype(float)
            sgd_step(a, EmbeddingBatch.of(SparseBatch.from_rows(d, rows)), y)
            sgd_step(b, EmbeddingBatch.of(np.stack([r.to_dense().values for r in rows]).astype(float)), y)
        np.testing.assert_allclose(a.theta, b.theta, rtol=1e-12, atol=1e-15)

    def test_clip_keeps_finite(self):
        m = Model.zeros(3)
        for _ in range(100):
            sgd_step(m, [dense([1e300, -1e300, 1e300])], [1])
        assert np.all(np.isfinite(m.theta)) and math.isfinite(m.intercept)
        assert np.linalg.norm(m.theta) <= 100 * m.step_size * m.clip * (1 + 1e-9)

    def test_empty_batch(self):
        with pytest.raises(HDError):
            sgd_step(Model.zeros(2), EmbeddingBatch.of(np.zeros((0, 2))), [])

    def test_touches_only_active(self, rng):
        from hdhash.suites import sparse_overfitting

        row = sparse_overfitting(steps=200, seed=4)
        assert row["statistic"] == 0 and row["pass"]

    def test_convex_oracle(self):
        from hdhash.suites import convex_oracle

        row = convex_oracle()
        assert row["statistic"] < 1e-3


class TestGradient:
    def test_finite_differences(self):
        from hdhash.suites import gradient_check

        row = gradient_check()
        assert row["statistic"] < 1e-6

    def test_per_coordinate(self, rng):
        E = rng.standard_normal((3, 6)) / 3
        y = np.array([1.0, 0.0, 1.0])
        theta = rng.standard_normal(6) / 3
        g, _ = log_loss_grad(theta, 0.1, E, y)
        m = lambda t: log_loss(Model(t, 0.1), [dense(e) for e in E], y)
        eps = 1e-5
        for i in range(6):
            step = np.zeros(6)
            step[i] = eps
            fd = (m(theta + step) - m(theta - step)) / (2 * eps)
            assert abs(fd - g[i]) <= 1e-6 * max(abs(g[i]), 1e-3)


class TestAuc:
    def test_perfect(self):
        assert auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_inverted(self):
        assert auc([0.9, 0.8, 0.1], [0, 0, 1]) == 0.0

    def test_ties(self):
        assert auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5

    def test_single_class(self):
        with pytest.raises(HDError):
            auc([0.1, 0.2], [1, 1])

    def test_matches_pairwise_count(self, rng):
        s = rng.integers(0, 10, 200).astype(float)
        y = rng.integers(0, 2, 200)
        pos, neg = s[y == 1], s[y == 0]
        ref = (np.sum(pos[:, None] > neg[None, :]) + 0.5 * np.sum(pos[:, None] == neg[None, :])) / (pos.size * neg.size)
        assert auc(s, y) == pytest.approx(ref, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(-50, 50), st.integers(0, 1)), min_size=2, max_size=50))
    def test_monotone_invariance(self, pairs):
        # Integer scores keep every transform strictly monotone in floating point.
        s = np.array([p[0] for p in pairs], dtype=np.float64)
        y = np.array([p[1] for p in pairs])
        if y.min() == y.max():
            return
        assert auc(s, y) == auc(np.exp(s / 10), y) == auc(s**3 + 7, y) == auc(np.arctan(s), y)


class TestSeparatingParams:
    def test_single_points(self):
        theta, nu = separating_params([dense([1, 2])], [dense([0, 1])])
        assert theta.tolist() == [1, 1]
        assert nu == -0.5 * (5 - 1)

    def test_symmetric_clusters(self, rng):
        P = rng.standard_normal((10, 4)) + 3
        theta, nu = separating_params(P, -P)
        assert nu == pytest.approx(0.0, abs=1e-12)

    def test_weights_checked(self):
        with pytest.raises(HDError):
            separating_params([dense([1])], [dense([0])], alpha=[0.5])
        with pytest.raises(HDError):
            separating_params([dense([1]), dense([2])], [dense([0])], alpha=[1.5, -0.5])

    def test_weighted(self):
        theta, nu = separating_params([dense([2, 0]), dense([0, 2])], [dense([0, 0])], alpha=[0.25, 0.75])
        np.testing.assert_allclose(theta, [0.5, 1.5])


def _stream(E, y, repeats):
    for _ in range(repeats):
        yield EmbeddingBatch.of(E), y


class TestEarlyStopping:
    def test_decreasing_never_stops(self):
        es = EarlyStopping(3)
        assert not any(es.update(10 - i) for i in range(20))

    def test_constant_stops_after_patience(self):
        es = EarlyStopping(3)
        flags = [es.update(1.0) for _ in range(6)]
        assert flags == [False, False, False, True, True, True]


class TestRunTraining:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.E = rng.standard_normal((32, 5))
        self.y = (self.E @ np.array([1.0, -1, 0.5, 0, 2]) > 0).astype(float)

    def test_decreasing_runs_to_end(self):
        m = Model.zeros(5, step_size=0.1, batch_size=32)
        res = run_training(TrainProtocol(32, 3), m, _stream(self.E, self.y, 40), lambda: [(EmbeddingBatch.of(self.E), self.y)])
        losses = [r["val_loss"] for r in res.metrics]
        assert len(losses) == 40 and not res.stopped_early
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_constant_loss_stops(self):
        m = Model.zeros(5, step_size=0.0, batch_size=32)
        res = run_training(TrainProtocol(32, 3), m, _stream(self.E, self.y, 40), lambda: [(EmbeddingBatch.of(self.E), self.y)])
        assert res.stopped_early and len(res.metrics) == 4
        assert res.records_seen == 4 * 32

    def test_metrics_schema(self):
        m = Model.zeros(5)
        res = run_training(TrainProtocol(64, 3), m, _stream(self.E, self.y, 4), lambda: [(EmbeddingBatch.of(self.E), self.y)])
        assert set(res.metrics[0]) >= {"round", "records", "updates", "train_loss", "val_loss", "val_auc"}

    def test_short_stream_warns(self):
        m = Model.zeros(5)
        with pytest.warns(RuntimeWarning):
            res = run_training(TrainProtocol(10_000, 3), m, _stream(self.E, self.y, 2), lambda: [(EmbeddingBatch.of(self.E), self.y)])
        assert res.records_seen == 64 and len(res.metrics) == 1

    def test_max_records(self):
        m = Model.zeros(5)
        with pytest.warns(RuntimeWarning):
            res = run_training(TrainProtocol(10**9, 3, max_records=96), m, _stream(self.E, self.y, 10),
                               lambda: [(EmbeddingBatch.of(self.E), self.y)])
        assert res.records_seen == 96

    def test_evaluate(self):
        m = Model.zeros(5)
        loss, a, p, y = evaluate(m, [(EmbeddingBatch.of(self.E), self.y)])
        assert loss == pytest.approx(math.log(2)) and a == 0.5 and p.shape == (32,)
