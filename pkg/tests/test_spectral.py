import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ymhadamard.spectral import (ModeSpace, SpectralOperator, chi_greater, chi_less, derivative_op,
                                 export_operator, funcalc, hermitian_residual, import_operator,
                                 kernel_basis, multiplication_op, order_norm, pinv_op, range_basis)


def _herm(rng, n):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (X + X.conj().T) / 2


def test_layout():
    sp = ModeSpace(5, 2, (("t", 3), ("S", 3)))
    assert sp.dim == 2 * 11 * 3
    assert sp.block_slice("S") == slice(33, 66)
    modes = sp.mode_of_index()
    assert modes[0] == -5 and modes[3] == -4 and modes[33] == -5
    assert sp.interior_mask().sum() == 2 * 7 * 3


def test_invalid_spaces():
    with pytest.raises(ValueError):
        ModeSpace(3, 1)
    with pytest.raises(ValueError):
        ModeSpace(6, 6)
    with pytest.raises(ValueError):
        ModeSpace(6, 2, (("a", 1), ("a", 2)))


def test_derivative_on_exponentials():
    sp = ModeSpace(6, 2, (("g", 1),))
    D = derivative_op(sp)
    e = np.zeros(sp.dim)
    e[6 + 3] = 1
    assert np.allclose(D @ e, 3j * e)


@given(st.integers(0, 2**31 - 1))
def test_multiplication_is_an_algebra_homomorphism_on_interior(seed):
    rng = np.random.default_rng(seed)
    sp = ModeSpace(8, 4, (("g", 2),))
    f = rng.standard_normal((5, 2, 2)) + 1j * rng.standard_normal((5, 2, 2))
    g = rng.standard_normal((5, 2, 2)) + 1j * rng.standard_normal((5, 2, 2))
    fg = np.zeros((9, 2, 2), dtype=complex)
    for i in range(5):
        for j in range(5):
            fg[i + j] += f[i] @ g[j]
    F, G = multiplication_op(sp, f), multiplication_op(sp, g)
    FG = multiplication_op(sp, fg)
    # products only feel the truncation within the buffer
    inner = np.abs(sp.mode_of_index()) <= sp.N - 2
    assert np.allclose((F @ G)[np.ix_(inner, inner)], FG[np.ix_(inner, inner)])


def test_wide_band_rejected():
    sp = ModeSpace(6, 2, (("g", 1),))
    with pytest.raises(ValueError):
        multiplication_op(sp, np.ones((7, 1, 1)))


@given(st.integers(0, 2**31 - 1))
def test_funcalc_sqrt_squares_back(seed):
    rng = np.random.default_rng(seed)
    A = _herm(rng, 6)
    A = A @ A + np.eye(6)
    R = funcalc(A, np.sqrt)
    assert np.allclose(R @ R, A)
    assert hermitian_residual(R) < 1e-12


def test_funcalc_rejects_non_hermitian():
    with pytest.raises(ValueError):
        funcalc(np.array([[1.0, 2.0], [0.0, 1.0]]), np.sqrt)


def test_funcalc_weighted_gram(rng):
    Gw = np.diag([1.0, 2.0, 3.0])
    A = np.linalg.solve(Gw, _herm(rng, 3))  # self-adjoint for <x, Gw y>
    E = funcalc(A, np.exp, gram=Gw)
    w, V = np.linalg.eig(A)
    assert np.allclose(E, (V * np.exp(w)) @ np.linalg.inv(V))


def test_funcalc_degenerate_cluster_stays_scalar():
    A = np.diag([2.0, 2.0 + 1e-14, 5.0])
    R = funcalc(A, np.log)
    assert R[0, 0] == R[1, 1]


def test_pinv_op(rng):
    A = _herm(rng, 5)
    w, V = np.linalg.eigh(A)
    w[0] = 0.0
    A = (V * w) @ V.conj().T
    P = pinv_op(A, 1e-10)
    assert np.allclose(A @ P @ A, A)


@given(st.floats(0, 3))
def test_order_norm_monotone_in_s(s):
    rng = np.random.default_rng(0)
    sp = ModeSpace(6, 2, (("g", 1),))
    A = rng.standard_normal((sp.dim, sp.dim))
    assert order_norm(A, s, sp) <= order_norm(A, s + 0.5, sp) + 1e-12


def test_order_norm_weights_interior_only():
    sp = ModeSpace(6, 2, (("g", 1),))
    A = np.zeros((sp.dim, sp.dim))
    A[0, 0] = 1e6  # mode -6 lives in the buffer
    A[6 + 4, 6 + 4] = 1.0
    assert order_norm(A, 2, sp) == pytest.approx(17.0 ** 2)  # weighted on both sides
    with pytest.raises(ValueError):
        order_norm(A, -1, sp)


def test_kernel_and_range(rng):
    X = rng.standard_normal((6, 3)) @ rng.standard_normal((3, 6))
    K = kernel_basis(X, 1e-10)
    R = range_basis(X, 1e-10)
    assert K.shape[1] == 3 and R.shape[1] == 3
    assert np.allclose(X @ K, 0)
    with pytest.raises(ValueError):
        kernel_basis(X, 0)


@given(st.floats(-5, 5))
def test_cutoff_partition_of_unity(x):
    for prof in ("poly5", "poly7"):
        assert chi_less(x, prof) + chi_greater(x, prof) == pytest.approx(1.0)
    if abs(x) <= 1:
        assert chi_greater(x) == 0
    if abs(x) >= 2:
        assert chi_less(x) == pytest.approx(0.0)


def test_export_roundtrip(tmp_path, rng):
    sp = ModeSpace(4, 1, (("g", 1),))
    M = rng.standard_normal((sp.dim, sp.dim)) + 1j * rng.standard_normal((sp.dim, sp.dim))
    export_operator(tmp_path / "op", SpectralOperator(M, sp, sp, {"name": "x"}))
    back = import_operator(tmp_path / "op")
    assert np.array_equal(back.matrix, M)
    assert back.domain == sp and back.meta == {"name": "x"}
