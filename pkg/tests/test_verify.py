import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdhash.catenc import BloomEncoder, Codebook
from hdhash.core import CategoricalSet, HDError, Symbol
from hdhash.verify import (
    BoundInputs,
    LinearCodebook,
    build_separated_instance,
    check_theorem1,
    constant_encoder,
    distinct_bucket_counts,
    distinct_hash_count,
    distortion_from_dots,
    exact_intersection,
    expected_distinct,
    hull_distance_bruteforce,
    identity_encoder,
    lemma1_lower_bound,
    measure_distortion,
    theorem1_search,
    thm2_bound,
    thm3_bound,
)


def syms(*names):
    return CategoricalSet(tuple(Symbol(0, n.encode()) for n in names))


class TestBoundInputs:
    @pytest.mark.parametrize("kw", [dict(s=5, m=5), dict(s=1, k=0, d=3), dict(s=1, k=4, d=3), dict(s=1, delta=0.0),
                                    dict(s=1, delta=1.0), dict(s=1, gamma=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(HDError):
            BoundInputs(**kw)


class TestThm2:
    def test_formula(self):
        v = thm2_bound(BoundInputs(s=2, d=10_000, m=100, delta=0.01))
        assert v == pytest.approx(4 * math.sqrt(0.0016 * math.log(1e4)))
        assert v == pytest.approx(0.4856, abs=5e-5)

    def test_four_d_halves(self):
        a = thm2_bound(BoundInputs(s=3, d=1000, m=100))
        b = thm2_bound(BoundInputs(s=3, d=4000, m=100))
        assert b == pytest.approx(a / 2, rel=1e-15)

    def test_s_zero(self):
        assert thm2_bound(BoundInputs(s=0, d=10, m=10)) == 0


class TestThm3:
    def test_bias(self):
        bias, _ = thm3_bound(BoundInputs(s=26, k=4, d=10_000, m=1e6))
        assert bias == pytest.approx(0.1352)

    def test_bias_linear_in_k(self):
        b1, _ = thm3_bound(BoundInputs(s=26, k=4, d=10_000, m=1e6))
        b2, _ = thm3_bound(BoundInputs(s=26, k=8, d=10_000, m=1e6))
        assert b2 == 2 * b1

    def test_deviation(self):
        b = BoundInputs(s=26, k=4, d=10_000, m=3.4e7, delta=0.01)
        _, dev = thm3_bound(b)
        L = math.log(3.4e9)
        assert math.sqrt(2 * 26**3 / 10_000 * L) == pytest.approx(8.78, abs=0.01)
        assert dev == pytest.approx(4 * 26 / 12 * L) == pytest.approx(190.2, abs=0.05)


class TestBoundsMonotone:
    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 50), st.integers(1, 10), st.integers(10, 10**6), st.floats(1e-6, 0.49))
    def test_doubling_delta_never_increases(self, s, k, d, delta):
        m = s + 1000
        a = BoundInputs(s=s, k=k, d=max(d, k), m=m, delta=delta)
        b = BoundInputs(s=s, k=k, d=max(d, k), m=m, delta=2 * delta)
        assert thm2_bound(b) <= thm2_bound(a)
        assert thm3_bound(b)[1] <= thm3_bound(a)[1]
        assert thm3_bound(b)[0] == thm3_bound(a)[0]
        assert lemma1_lower_bound(b) >= lemma1_lower_bound(a)


class TestDistinctHash:
    def test_single_bucket(self):
        assert np.all(distinct_bucket_counts(5, 3, 1, 100) == 1)

    def test_small_closed_form(self):
        stats = distinct_hash_count(s=5, k=4, d=100, trials=100_000, seed=1, m=100)
        expected = 100 * (1 - 0.99**20)
        assert stats.expected == pytest.approx(expected)
        assert expected == pytest.approx(18.21, abs=0.005)
        assert abs(stats.mean - expected) / expected < 0.01

    def test_lemma1_violations(self):
        stats = distinct_hash_count(s=26, k=4, d=10_000, trials=20_000, seed=2)
        assert stats.violation_rate <= 0.01
        assert stats.mean <= 104

    def test_reproducible(self):
        a = distinct_hash_count(4, 4, 50, 5000, seed=9)
        b = distinct_hash_count(4, 4, 50, 5000, seed=9)
        assert a == b

    def test_expected_distinct(self):
        assert expected_distinct(104, 10_000) == pytest.approx(103.46, abs=0.01)
        assert expected_distinct(1, 7) == pytest.approx(1.0)


class TestExactIntersection:
    def test_cases(self):
        x = syms("a", "b", "c")
        assert exact_intersection(x, x) == 3
        assert exact_intersection(x, syms("d", "e")) == 0
        assert exact_intersection(x, syms("b", "c", "d")) == 2


class TestDistortion:
    def test_identity_zero(self, rng):
        pairs = [(rng.standard_normal(5), rng.standard_normal(5)) for _ in range(50)]
        rep = measure_distortion(lambda x: x, pairs)
        assert rep.max == 0.0 and rep.median == 0.0

    def test_codebook_scale(self, rng):
        cb = Codebook(4096, 1)
        pairs = [(syms(*map(str, rng.choice(100, 4, replace=False))), syms(*map(str, rng.choice(100, 4, replace=False))))
                 for _ in range(200)]
        rep = measure_distortion(cb.encode_set, pairs, scale=4096)
        assert rep.q95 < thm2_bound(BoundInputs(s=4, d=4096, m=100))

    def test_bloom_offset(self, rng):
        enc = BloomEncoder(10_000, 4)
        pairs = [(syms(*map(str, rng.choice(10**6, 26, replace=False))),) * 2 for _ in range(20)]
        rep = measure_distortion(enc.encode_set, pairs, scale=4, offset=26 * 26 * 4 / 20_000)
        assert rep.max < 2.0

    def test_from_dots(self):
        rep = distortion_from_dots([10, 20], [1, 3], scale=10, offset=0)
        np.testing.assert_allclose(rep.values, [0, 1])

    def test_empty(self):
        with pytest.raises(HDError):
            measure_distortion(lambda x: x, [])

    def test_codebook_sqrt_scaling(self):
        from hdhash.suites import distortion_scaling

        rows = distortion_scaling(pairs=3000, seed=2)
        codebook = [r for r in rows if r["suite"] == "distortion_codebook"][0]
        assert all(1.7 <= q <= 2.3 for q in codebook["statistic"])


class TestSeparatedInstance:
    def test_single_points(self):
        inst = build_separated_instance(4.0, 1, 3, radius=0.0)
        np.testing.assert_array_equal(inst.p, [1, 0, 0])
        np.testing.assert_array_equal(inst.p - inst.q, [2, 0, 0])
        assert inst.gamma == 4.0

    def test_symmetric(self):
        inst = build_separated_instance(1.0, 50, 4, seed=3)
        np.testing.assert_array_equal(inst.neg, -inst.pos)
        assert inst.gamma == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("raw_dim", [2, 3])
    def test_gamma_bruteforce(self, raw_dim):
        inst = build_separated_instance(1.0, 12, raw_dim, seed=raw_dim)
        g = hull_distance_bruteforce(inst.pos, inst.neg, samples=5000)
        assert g == pytest.approx(1.0, abs=1e-9)
        assert g >= inst.gamma - 1e-12

    def test_bruteforce_dim_limit(self):
        with pytest.raises(HDError):
            hull_distance_bruteforce(np.zeros((2, 4)), np.ones((2, 4)))

    def test_invalid(self):
        with pytest.raises(HDError):
            build_separated_instance(0.0, 10, 3)


class TestCheckTheorem1:
    def test_identity(self):
        rep = check_theorem1(build_separated_instance(1.0, 200, 5, seed=1), identity_encoder)
        assert rep.separated and rep.delta == pytest.approx(0.0, abs=1e-12) and rep.bound_ok

    def test_constant(self):
        rep = check_theorem1(build_separated_instance(1.0, 200, 5, seed=1), constant_encoder)
        assert not rep.separated

    def test_search_finds_d(self):
        inst = build_separated_instance(1.0, 500, 26, seed=0)
        d, rep = theorem1_search(inst, start_d=256)
        assert rep.bound_ok and rep.separated and rep.misclassified == 0

    def test_pass_rate_monotone_in_d(self):
        inst = build_separated_instance(1.0, 200, 26, seed=5)
        rates = []
        for d in (256, 1024, 4096):
            rates.append(np.mean([check_theorem1(inst, LinearCodebook(26, d, seed)).separated for seed in range(50)]))
        assert rates[0] <= rates[1] <= rates[2]
        assert rates[2] == 1.0

    def test_bound_implies_separation(self):
        inst = build_separated_instance(1.0, 300, 26, seed=7)
        for seed in range(30):
            rep = check_theorem1(inst, LinearCodebook(26, 2048, seed))
            if rep.bound_ok:
                assert rep.separated
