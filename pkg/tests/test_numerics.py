import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fascon.errors import InvalidInputError
from fascon.numerics import (
    central_difference, make_rng, moore_penrose_residuals, pseudo_inverse, sample_gaussian_diag,
)


def test_pinv_identity():
    assert np.array_equal(pseudo_inverse(np.eye(3)), np.eye(3))


def test_pinv_column_vector():
    np.testing.assert_allclose(pseudo_inverse(np.array([[1.0], [1.0]])), [[0.5, 0.5]], atol=1e-15)


def test_pinv_random_tall_satisfies_moore_penrose():
    a = make_rng(3).normal(size=(6, 4))
    res = moore_penrose_residuals(a, pseudo_inverse(a))
    assert max(res) < 1e-9


def test_pinv_rank_deficient():
    rng = make_rng(4)
    a = rng.normal(size=(5, 2)) @ rng.normal(size=(2, 4))
    res = moore_penrose_residuals(a, pseudo_inverse(a))
    assert max(res) < 1e-9


def test_pinv_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        pseudo_inverse(np.array([[1.0, np.nan]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**31))
def test_pinv_of_invertible_is_inverse(n, seed):
    a = make_rng(seed).normal(size=(n, n)) + 3 * np.eye(n)
    inv = np.linalg.inv(a)
    assert np.max(np.abs(pseudo_inverse(a) - inv)) / np.max(np.abs(inv)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_pinv_involution(r, c, seed):
    a = make_rng(seed).normal(size=(r, c))
    back = pseudo_inverse(pseudo_inverse(a))
    assert np.max(np.abs(back - a)) / np.max(np.abs(a)) < 1e-8


def test_gaussian_zero_variance_is_zero():
    out = sample_gaussian_diag(np.zeros(5), make_rng(0))
    assert np.all(out == 0)


def test_gaussian_moments():
    draws = sample_gaussian_diag(np.ones(3), make_rng(1), size=10**6)
    assert np.all(np.abs(draws.mean(axis=0)) < 0.01)
    assert np.all(np.abs(draws.var(axis=0) - 1) < 0.02)


def test_gaussian_negative_variance():
    with pytest.raises(InvalidInputError):
        sample_gaussian_diag([1.0, -1.0], make_rng(0))


def test_rng_streams_reproducible_and_distinct():
    a = make_rng(7, 3).standard_normal(8)
    b = make_rng(7, 3).standard_normal(8)
    c = make_rng(7, 4).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_central_difference_of_quadratic():
    g = central_difference(lambda x: float(x @ x), np.array([1.0, -2.0]), 1e-5)
    np.testing.assert_allclose(g, [2.0, -4.0], rtol=1e-9)
