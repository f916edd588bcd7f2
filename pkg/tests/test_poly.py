import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hevote.backend import BackendParams, ExactBackend
from hevote.poly import EvalPlan, Polynomial, baby_step_count, eval_depth, evaluate, plan


def horner(coeffs, x):
    acc = np.zeros_like(x)
    for c in reversed(list(coeffs)):
        acc = acc * x + c
    return acc


@pytest.fixture
def be():
    return ExactBackend(BackendParams(ring_degree=128))


class TestPolynomial:
    def test_trims_trailing_zeros(self):
        p = Polynomial([1.0, 2.0, 0.0, 0.0])
        assert p.degree == 1
        assert Polynomial([]).degree == 0

    def test_is_odd(self):
        assert Polynomial.odd([1.0, -0.5]).is_odd
        assert not Polynomial([0.1, 1.0]).is_odd

    def test_json_round_trip(self):
        p = Polynomial([0.0, 1.5, 0.0, -0.25])
        assert p.to_json() == "[0.0, 1.5, 0.0, -0.25]"
        assert Polynomial.from_json(p.to_json()) == p

    @pytest.mark.parametrize("text", ['{"a": 1}', '["x"]', "3"])
    def test_json_rejects(self, text):
        with pytest.raises(ValueError):
            Polynomial.from_json(text)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            Polynomial([1.0, np.nan])


class TestPlan:
    @pytest.mark.parametrize("degree, depth", [(0, 0), (1, 1), (2, 2), (3, 2), (9, 4), (15, 4), (16, 5), (31, 5)])
    def test_depth(self, degree, depth):
        coeffs = np.ones(degree + 1)
        assert plan(Polynomial(coeffs)).depth == depth == eval_depth(degree)

    @pytest.mark.parametrize("degree", range(0, 32))
    def test_mul_count_bounded_by_degree(self, degree):
        p = plan(Polynomial(np.linspace(1, 2, degree + 1)))
        assert p.mul_count <= max(degree, 0)
        assert p.depth == (0 if degree == 0 else math.ceil(math.log2(degree + 1)))

    def test_degree_nine_plan(self):
        p = plan(Polynomial.odd([1.0] * 5))
        assert isinstance(p, EvalPlan)
        assert p.baby_steps == 4 and p.giant_steps == 2 and p.depth == 4

    def test_baby_steps_power_of_two(self):
        assert [baby_step_count(d) for d in (0, 3, 8, 9, 15, 31)] == [1, 2, 4, 4, 4, 8]


class TestEvaluate:
    def test_identity(self, be):
        ct = evaluate(be, Polynomial([0.0, 1.0]), be.encrypt([0.3, -0.3]))
        np.testing.assert_array_equal(be.decrypt(ct)[:2], [0.3, -0.3])

    def test_square(self, be):
        ct = evaluate(be, Polynomial([0.0, 0.0, 1.0]), be.encrypt([0.5]))
        assert be.decrypt(ct)[0] == 0.25

    def test_constant(self, be):
        x = be.encrypt([0.5, -2.0])
        ct = evaluate(be, Polynomial([3.0]), x)
        assert np.all(be.decrypt(ct) == 3.0)
        assert ct.level == x.level

    def test_random_odd_degree_nine(self, be, rng):
        coeffs = np.zeros(10)
        coeffs[1::2] = rng.normal(size=5)
        xs = rng.uniform(-1, 1, 64)
        out = be.decrypt(evaluate(be, Polynomial(coeffs), be.encrypt(xs)))[:64]
        np.testing.assert_allclose(out, horner(coeffs, xs), atol=1e-12)

    @given(
        coeffs=arrays(np.float64, st.integers(1, 32), elements=st.floats(-2, 2, allow_nan=False)),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=80, deadline=None)
    def test_matches_horner(self, coeffs, seed):
        be = ExactBackend(BackendParams(ring_degree=128))
        xs = np.random.default_rng(seed).uniform(-1, 1, 64)
        poly = Polynomial(coeffs)
        x = be.encrypt(xs)
        ct = evaluate(be, poly, x)
        scale = max(1.0, float(np.sum(np.abs(coeffs))))
        np.testing.assert_allclose(be.decrypt(ct)[:64], horner(poly.coeffs, xs), atol=1e-12 * scale)
        # level consumed equals the plan depth exactly
        assert x.level - ct.level == plan(poly).depth

    def test_counts_match_plan(self, be):
        poly = Polynomial(np.arange(1.0, 11.0))
        before = be.counters
        evaluate(be, poly, be.encrypt([0.1]))
        delta = be.counters - before
        p = plan(poly)
        assert (delta.n_mul_ct, delta.n_mul_plain) == (p.mul_count, p.plain_mul_count)

    def test_odd_symmetry(self, be, rng):
        poly = Polynomial.odd(rng.normal(size=5))
        xs = rng.uniform(-1, 1, 32)
        pos = be.decrypt(evaluate(be, poly, be.encrypt(xs)))[:32]
        neg = be.decrypt(evaluate(be, poly, be.encrypt(-xs)))[:32]
        np.testing.assert_array_equal(neg, -pos)

    def test_bootstraps_when_low(self, be):
        x = be.encrypt([0.5])
        for _ in range(19):
            x = be.mul_plain(x, 1.0)
        ct = evaluate(be, Polynomial.odd([1.0] * 5), x)
        assert be.counters.n_bootstrap == 1
        assert ct.level == 21 - 4
