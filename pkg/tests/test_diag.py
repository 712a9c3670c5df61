import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ymhadamard.diag import (build_T, hadamard_block, identity_battery, ker_orthogonality,
                             nonexistence_witness, pn1_positivity, projections_c, solve_Z)
from ymhadamard.factor import CutoffError
from ymhadamard.spectral import funcalc


def _sample(seed, m=6, nt=2, size=0.2):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    # eps commutes with J: no coupling between the time and space blocks
    X[:nt, nt:] = 0
    X[nt:, :nt] = 0
    eps = funcalc(X @ X.conj().T + np.eye(m), np.sqrt)
    r = size * (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / m
    eh = funcalc(eps, np.sqrt)
    b = eh @ (np.eye(m) + r) @ eh
    J = np.concatenate([-np.ones(nt), np.ones(m - nt)])
    return b, eps, J


@given(st.integers(0, 2**31 - 1), st.integers(0, 5))
def test_Z_factorizes_the_charge(seed, nt):
    b, eps, J = _sample(seed, nt=nt)
    Z, res = solve_Z(b, eps, J)
    assert res < 1e-10
    T, Ti = build_T(b, J, Z)
    assert np.allclose(T @ Ti, np.eye(2 * len(J)))


@given(st.integers(0, 2**31 - 1))
def test_projections_are_complementary(seed):
    b, eps, J = _sample(seed)
    T, Ti = build_T(b, J, solve_Z(b, eps, J)[0])
    cp, cm = projections_c(T, Ti)
    assert np.allclose(cp + cm, np.eye(len(cp)))
    assert np.allclose(cp @ cp, cp)


def test_indefinite_charge_raises_cutoff_error():
    m = 4
    eps = np.eye(m)
    b = -3.0 * np.eye(m)  # hermitian part negative
    with pytest.raises(CutoffError):
        solve_Z(b, eps, np.ones(m))


@pytest.mark.parametrize("kind", ["scalar", "vector"])
def test_identity_battery(small_state, kind):
    d = small_state[1].diags[kind]
    res = identity_battery(d, small_state[1].factors[kind])
    assert max(res.values()) < 1e-10, res
    assert ker_orthogonality(d) < 1e-9


def test_scalar_pair_positive(small_state):
    d = small_state[1].diags["scalar"]
    L = d.lambda_plus + d.lambda_minus
    assert np.linalg.eigvalsh((L + L.conj().T) / 2)[0] >= -1e-10
    assert nonexistence_witness(d).expectation == 0.0 or nonexistence_witness(d).min_eig >= -1e-10


def test_vector_witness_negative(small_state):
    w = nonexistence_witness(small_state[1].diags["vector"])
    assert w.normalized <= -0.5
    assert w.min_eig < 0


def test_pn1_positivity(small_state):
    for kind in ("scalar", "vector"):
        p = pn1_positivity(small_state[1].diags[kind])
        assert min(p["plus"], p["minus"]) >= -1e-9
        assert p["r_norm"] < 1


def test_hadamard_block_orthogonal():
    H = hadamard_block(3)
    assert np.allclose(H @ H, np.eye(6))


def test_r_minus1_reconstructs_T(small_state):
    d = small_state[1].diags["vector"]
    T = hadamard_block(d.m) @ d.S @ np.linalg.inv(np.eye(2 * d.m) + d.r_minus1)
    assert np.allclose(T, d.T)
