import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from ymhadamard.factor import (_residual, b_minus, factorize, invertibility_margin, parametrix_residual,
                               propagate, r_pm, residual_gain, solve_b)
from ymhadamard.harness import RunConfig, run_pipeline
from ymhadamard.waveops import cauchy_evolution


def test_oracle_b_is_exact():
    # a = h + 1 = eps^2 when the mass matches C = 1, so b = eps solves the equation
    _, state = run_pipeline(RunConfig(N=6, M=2, K=16, C=1.0, amplitude=0.0, oracle_mass=1.0), keep_state=True)
    res = state.factors["scalar"]
    assert res.residual_history.max() < 1e-10
    assert res.b.strides[0] == 0


def test_flat_static_residual_starts_at_C(flat_state):
    res = flat_state[1].factors["scalar"]
    assert res.residual_history[0, 0] == pytest.approx(res.fam.C)


def test_residual_decreases_monotonically(small_state):
    for res in small_state[1].factors.values():
        h = res.residual_history
        assert np.all(np.diff(h, axis=0) < 0), h


def test_first_step_gain_at_least_two(small_state):
    res = small_state[1].factors["scalar"]
    assert residual_gain(res.residual_history, 0)[0] >= 2


def test_cutoff_schedule(small_state):
    for res in small_state[1].factors.values():
        C = res.fam.C
        assert np.all(res.R * res.lambda_schedule >= np.sqrt(C) - 1e-12)
        assert max(np.linalg.norm(r, 2) for r in res.r_minus1) <= 0.5 + 1e-12


def test_cutoff_keeps_hermitian_part_positive(small_state):
    res = small_state[1].factors["vector"]
    b = np.array(res.b[0])
    w = np.linalg.eigvalsh((b + b.conj().T) / 2)
    assert w[0] > 0
    assert invertibility_margin(res) >= 0.5


def test_bad_arguments(small_state):
    fam = small_state[1].fams["scalar"]
    with pytest.raises(ValueError):
        solve_b(fam, 0)
    with pytest.raises(ValueError):
        factorize(fam, 2, 0.5)


@given(st.integers(0, 2**31 - 1))
def test_b_minus_involution(seed):
    rng = np.random.default_rng(seed)
    J = rng.choice([-1.0, 1.0], 5)
    b = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    assert np.allclose(b_minus(b_minus(b, J), J), b)


def test_r_pm_partition(small_state):
    r = r_pm(small_state[1].factors["vector"])
    m = r.r0p.shape[0]
    assert np.allclose(r.r0p + r.r0m, np.eye(m))
    assert np.allclose(r.r1p + r.r1m, 0)


def test_magnus_propagator_on_constant_generator(rng):
    ts = np.linspace(0, 1, 9)
    X = rng.standard_normal((3, 3))
    X = X + X.T
    stack = np.stack([X] * len(ts))  # not a broadcast view, so Magnus runs
    assert np.allclose(propagate(stack, ts, 8), expm(1j * X))


def test_propagator_solves_first_order_equation(small_state):
    res = small_state[1].factors["scalar"]
    ts = res.fam.ts
    U = propagate(res.b, ts, len(ts) - 1, every=True)
    dU = (U[2:] - U[:-2]) / (2 * res.fam.dt)
    rhs = 1j * res.b[1:-1] @ U[1:-1]
    assert np.max(np.abs(dU - rhs)) / np.max(np.abs(rhs)) < 1e-2


def test_residual_formula_static():
    a = np.diag([4.0, 9.0])[None]
    b = np.diag([2.0, 3.0])[None]
    assert np.allclose(_residual(b, a, 0.1), 0)


def test_parametrix_within_floor(small_state):
    res = small_state[1].factors["scalar"]
    U = cauchy_evolution(res.fam, len(res.fam.ts) - 1, ode_tol=1e-10)
    pr = parametrix_residual(res, len(res.fam.ts) - 1, U, 2)
    assert pr <= 10 * res.residual_R[2]
