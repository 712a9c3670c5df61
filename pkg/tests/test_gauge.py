import numpy as np
import pytest

from ymhadamard.gauge import compute_R_minus_infty, decay_report, kernel_projector
from ymhadamard.harness import DIAGNOSTICS, TOLERANCES
from ymhadamard.spectral import ModeSpace


@pytest.fixture(scope="module", params=["generic", "flat"])
def gauge(request, small_state, flat_state):
    return (small_state if request.param == "generic" else flat_state)[1].gauge


def test_battery_within_tolerance(gauge):
    for name, val in gauge.battery.items():
        if name in DIAGNOSTICS:
            continue
        assert val <= TOLERANCES[name], (name, val)


def test_literal_right_inverse_fails_on_stabilizer(gauge):
    # K_Sigma kills the stabilizer, so B K_Sigma is only 1 off Ker K_Sigma
    assert gauge.dims["dim_ker_K"] >= 1
    assert gauge.battery["B_K_literal"] > 0.5
    assert gauge.battery["B_K"] < 1e-10


def test_positivity(gauge):
    p = gauge.positivity
    assert p["min_plus_rel"] >= -1e-8
    assert p["min_minus_rel"] >= -1e-8
    assert p["quotient_min_sum"] > 0


def test_membership(gauge):
    assert gauge.membership < 1e-7


def test_projections_commute_with_gauge(gauge):
    ct = gauge.ct
    K = gauge.K
    P = np.eye(K.shape[1]) - kernel_projector(K)
    assert np.allclose(ct.c_plus @ K @ P, K @ gauge.c0_plus @ P, atol=1e-9)
    assert np.allclose(ct.c_plus + ct.c_minus, np.eye(len(ct.c_plus)))


def test_kernel_projector():
    K = np.diag([1.0, 0.0, 2.0])
    P = kernel_projector(K)
    assert np.allclose(P, np.diag([0.0, 1.0, 0.0]))


def test_R_minus_infty_vanishes_for_intertwined_pairs(rng):
    K = rng.standard_normal((6, 3))
    c0 = np.diag([1.0, 0.0, 1.0])
    c1 = K @ c0 @ np.linalg.pinv(K)
    assert np.allclose(compute_R_minus_infty(c1, c0, K), 0)


@pytest.mark.parametrize("p", [2.0, 4.0, 6.0])
def test_decay_exponent_recovers_power_law(p):
    sp = ModeSpace(20, 4, (("g", 1),))
    modes = np.abs(sp.mode_of_index()).astype(float)
    R = np.diag((1.0 + modes) ** 0 * np.maximum(modes, 1.0) ** -p)
    assert decay_report(R, sp, sp)["decay_exponent"] == pytest.approx(p, rel=1e-9)


def test_dims_generic(small_state):
    d = small_state[1].gauge.dims
    assert d["dim_ker_K"] == 1
    assert d["dim_quotient"] == 2
