import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mkvsim.measure import (
    EmpiricalMeasure,
    MeasureView,
    OracleSizeError,
    ShapeError,
    moment,
    w2_1d_exact,
    w2_paired_bound,
    w2_small_exact,
    w2_to_dirac0,
)


def brute_w2(a, b):
    """Independent oracle: loop over every matching in pure Python."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    n = len(a)
    best = min(
        sum(float(np.sum((a[i] - b[p[i]]) ** 2)) for i in range(n)) for p in itertools.permutations(range(n))
    )
    return math.sqrt(best / n)


class TestDirac:
    def test_three_atoms(self):
        assert w2_to_dirac0(EmpiricalMeasure([1, 2, 3])) == pytest.approx(math.sqrt(14 / 3), rel=1e-15)
        assert math.sqrt(14 / 3) == pytest.approx(2.160247, abs=1e-6)

    def test_zero_atoms(self):
        assert w2_to_dirac0(EmpiricalMeasure(np.zeros((5, 3)))) == 0.0

    def test_single_planar_atom(self):
        assert w2_to_dirac0(EmpiricalMeasure([[3.0, 4.0]])) == 5.0


class TestOneDimensional:
    def test_sorted_pairing(self):
        assert w2_1d_exact(EmpiricalMeasure([0, 2]), EmpiricalMeasure([1, 3])) == 1.0

    def test_identity(self):
        mu = EmpiricalMeasure(np.random.default_rng(0).normal(size=50))
        assert w2_1d_exact(mu, mu) == 0.0

    def test_single_atoms(self):
        assert w2_1d_exact(EmpiricalMeasure([0]), EmpiricalMeasure([5])) == 5.0

    def test_rejects_dimension_two(self):
        mu = EmpiricalMeasure([[0, 0], [1, 1]])
        with pytest.raises(ShapeError, match="unsupported shape"):
            w2_1d_exact(mu, mu)

    def test_rejects_unequal_counts(self):
        with pytest.raises(ShapeError, match="unsupported shape"):
            w2_1d_exact(EmpiricalMeasure([0, 1]), EmpiricalMeasure([0, 1, 2]))


class TestPairedBound:
    def test_formula(self):
        assert w2_paired_bound([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), rel=1e-15)
        assert math.sqrt(12.5) == pytest.approx(3.535534, abs=1e-6)

    def test_equal(self):
        x = np.arange(6.0).reshape(3, 2)
        assert w2_paired_bound(x, x) == 0.0

    def test_single_pair(self):
        assert w2_paired_bound([1], [4]) == 3.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            w2_paired_bound(np.zeros((3, 1)), np.zeros((2, 1)))


class TestSmallExact:
    def test_line(self):
        assert w2_small_exact(EmpiricalMeasure([0, 2]), EmpiricalMeasure([1, 3])) == pytest.approx(1.0)

    def test_permuted_copy(self):
        pts = np.random.default_rng(1).normal(size=(6, 2))
        assert w2_small_exact(EmpiricalMeasure(pts), EmpiricalMeasure(pts[::-1])) == 0.0

    def test_planar_tie(self):
        mu = EmpiricalMeasure([[0, 0], [1, 0]])
        nu = EmpiricalMeasure([[0, 0], [0, 1]])
        assert w2_small_exact(mu, nu) == pytest.approx(1.0, abs=1e-15)

    def test_cap(self):
        mu = EmpiricalMeasure(np.zeros(11))
        with pytest.raises(OracleSizeError, match="oracle size exceeded"):
            w2_small_exact(mu, mu)

    def test_assignment_branch_matches_enumeration(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(9, 2)), rng.normal(size=(9, 2))
        perms = np.array(list(itertools.permutations(range(9))))
        cost = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
        expected = math.sqrt(cost[np.arange(9), perms].sum(1).min() / 9)
        assert w2_small_exact(EmpiricalMeasure(a), EmpiricalMeasure(b)) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3, 5, 7])
    def test_against_python_loop(self, n):
        rng = np.random.default_rng(n)
        a, b = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        assert w2_small_exact(EmpiricalMeasure(a), EmpiricalMeasure(b)) == pytest.approx(brute_w2(a, b), abs=1e-12)


class TestMoment:
    def test_second(self):
        assert moment(EmpiricalMeasure([1, 2, 3]), 2) == pytest.approx(14 / 3, rel=1e-15)

    def test_zero(self):
        assert moment(EmpiricalMeasure(np.zeros(4)), 3.5) == 0.0

    def test_cube(self):
        assert moment(EmpiricalMeasure([2]), 3) == pytest.approx(8.0, rel=1e-15)

    def test_order_below_one(self):
        with pytest.raises(ValueError):
            moment(EmpiricalMeasure([1]), 0.5)


def test_measure_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((0, 1)))
    with pytest.raises(ValueError):
        EmpiricalMeasure([1.0, np.nan])
    mu = EmpiricalMeasure([[1.0, 2.0]])
    with pytest.raises(ValueError):
        mu.atoms[0, 0] = 5.0


def test_view_summaries():
    pts = np.array([[1.0, -2.0], [3.0, 0.0]])
    view = MeasureView.of(pts)
    np.testing.assert_array_equal(view.mean, [2.0, -1.0])
    assert view.second_moment == pytest.approx((5 + 9) / 2)
    assert view.w2_to_dirac0 == math.sqrt(view.second_moment)


# --- properties ---------------------------------------------------------

small_1d = st.integers(1, 8).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(-100, 100)),
        arrays(np.float64, n, elements=st.floats(-100, 100)),
    )
)


@settings(max_examples=200, deadline=None)
@given(small_1d)
def test_sorted_coupling_is_optimal(pair):
    mu, nu = EmpiricalMeasure(pair[0]), EmpiricalMeasure(pair[1])
    assert abs(w2_1d_exact(mu, nu) - w2_small_exact(mu, nu)) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(small_1d)
def test_paired_bound_dominates(pair):
    mu, nu = EmpiricalMeasure(pair[0]), EmpiricalMeasure(pair[1])
    assert w2_small_exact(mu, nu) <= w2_paired_bound(pair[0], pair[1]) + 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_triangle_inequality(n, d, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (EmpiricalMeasure(rng.normal(size=(n, d)) * 5) for _ in range(3))
    assert w2_small_exact(a, c) <= w2_small_exact(a, b) + w2_small_exact(b, c) + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 2000), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_dirac_distance_matches_second_moment(n, d, seed):
    mu = EmpiricalMeasure(np.random.default_rng(seed).standard_cauchy(size=(n, d)))
    view = MeasureView(mu)
    assert w2_to_dirac0(mu) ** 2 == pytest.approx(moment(mu, 2), rel=1e-12)
    assert view.w2_to_dirac0**2 == pytest.approx(view.second_moment, rel=1e-12)


@pytest.mark.slow
def test_view_coherence_million_atoms():
    mu = EmpiricalMeasure(np.random.default_rng(3).normal(size=(10**6, 1)))
    view = MeasureView(mu)
    assert view.w2_to_dirac0**2 == pytest.approx(view.second_moment, rel=1e-12)
