import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ymhadamard.liealg import (ad_matrix, bracket, get_algebra, invariance_residual, jacobi_residual,
                               killing, su2, u1)

vec3 = arrays(np.float64, 3, elements=st.floats(-5, 5))


def test_su2_structure_constants_are_levi_civita():
    alg = su2()
    e = np.eye(3)
    assert np.allclose(bracket(alg, e[0], e[1]), e[2])
    assert np.allclose(bracket(alg, e[1], e[2]), e[0])
    assert np.allclose(bracket(alg, e[2], e[0]), e[1])


def test_jacobi_and_invariance():
    for alg in (su2(), u1()):
        assert jacobi_residual(alg) < 1e-14
        assert invariance_residual(alg) < 1e-14


@given(vec3, vec3)
def test_bracket_antisymmetric(x, y):
    alg = su2()
    assert np.allclose(bracket(alg, x, y), -bracket(alg, y, x))


@given(vec3, vec3)
def test_ad_matrix_matches_bracket(x, y):
    alg = su2()
    assert np.allclose(ad_matrix(alg, x) @ y, bracket(alg, x, y))


@given(vec3)
def test_ad_is_skew_for_the_product(x):
    A = ad_matrix(su2(), x)
    assert np.allclose(A.T, -A)


def test_ad_broadcasts():
    xs = np.random.default_rng(0).standard_normal((5, 3))
    A = ad_matrix(su2(), xs)
    assert A.shape == (5, 3, 3)
    assert np.allclose(A[2], ad_matrix(su2(), xs[2]))


def test_killing_positive():
    x = np.array([1.0, -2.0, 0.5])
    assert killing(su2(), x, x) == pytest.approx(5.25)


def test_bad_inputs():
    with pytest.raises(ValueError):
        get_algebra("so5")
    with pytest.raises(ValueError):
        bracket(su2(), np.ones(2), np.ones(3))
