import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ymhadamard.background import (constraint_residual, corrupt, dbar_matrix, evolve_background,
                                   make_cauchy_data, pad, random_field, realify, reverse)
from ymhadamard.liealg import su2
from ymhadamard.spectral import ModeSpace

SPACE = ModeSpace(6, 2, (("g", 3),))


def test_random_field_is_real_and_scaled(rng):
    c = random_field(rng, 3, 2, 0.7)
    assert np.allclose(c[::-1], np.conj(c))
    assert np.linalg.norm(c) == pytest.approx(0.7)


def test_pad_roundtrip():
    c = np.arange(15, dtype=complex).reshape(5, 3)
    assert np.array_equal(pad(pad(c, 6), 2), c)
    with pytest.raises(ValueError):
        pad(c, 1)


@given(st.integers(0, 1000))
def test_initial_electric_field_satisfies_gauss_law(seed):
    st0 = make_cauchy_data(seed, 2, 0.3, SPACE, su2())
    assert constraint_residual(st0, SPACE, su2()) < 1e-10
    assert np.allclose(realify(st0.F_t), st0.F_t)


def test_constraint_preserved_along_evolution():
    st0 = make_cauchy_data(0, 2, 0.3, SPACE, su2())
    fam = evolve_background(st0, 0.5, 32, SPACE, su2())
    assert fam.residuals.max() <= 1e-8
    # A is linear in t on the circle
    A_mid = pad(st0.A_sigma, fam.states[0].A_sigma.shape[0] // 2) + 0.25 * fam.states[0].F_t
    assert np.allclose(fam.states[16].A_sigma, A_mid)


def test_corrupted_data_violates_constraint():
    st0 = make_cauchy_data(0, 2, 0.3, SPACE, su2())
    assert constraint_residual(corrupt(st0, SPACE, su2()), SPACE, su2()) > 0.1


def test_corrupted_evolution_is_refused():
    st0 = corrupt(make_cauchy_data(0, 2, 0.3, SPACE, su2()), SPACE, su2())
    with pytest.raises(RuntimeError):
        evolve_background(st0, 0.1, 4, SPACE, su2())


def test_flat_and_static_cases():
    st0 = make_cauchy_data(0, 2, 0.0, SPACE, su2())
    assert st0.static and not np.any(st0.A_sigma)
    st1 = make_cauchy_data(0, 2, 0.3, SPACE, su2(), connection=False)
    assert not st1.static and not np.any(st1.A_sigma)


def test_band_limit_checked():
    with pytest.raises(ValueError):
        make_cauchy_data(0, 3, 0.3, SPACE, su2())


def test_dbar_is_covariant_derivative():
    A = random_field(np.random.default_rng(3), 3, 2, 0.4)
    D = dbar_matrix(SPACE, su2(), A)
    D0 = dbar_matrix(SPACE, su2(), np.zeros_like(A))
    assert np.allclose(D0, np.diag(np.repeat(1j * SPACE.modes, 3)))
    # ad_A is skew for the flat product, so D stays anti-hermitian
    assert np.allclose(D.conj().T, -D)


def test_reverse_flips_electric_field():
    st0 = make_cauchy_data(0, 2, 0.3, SPACE, su2())
    assert np.array_equal(reverse(st0).F_t, -st0.F_t)
