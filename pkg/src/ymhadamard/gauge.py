"""Gauge-invariant corrections of the vector two-point pair.

Everything here works on adapted vector Cauchy data (g0_t, g0_S, g1_t, g1_S)
and on scalar Cauchy data (u0, u1).  Tilde quantities are S-weighted adapted
data, g~ = S g with S = diag(eps^{1/2}, eps^{-1/2}).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .diag import DiagonalizationResult
from .factor import CutoffError
from .spectral import ModeSpace, kernel_basis, order_norm, pinv_op, range_basis
from .waveops import (AdaptedTransforms, GaugeBackground, K_sigma_closed_form, adapted_transform,
                      cauchy_space, charge_form, q_adjoint, scalar_field_space, vector_field_space)

log = logging.getLogger(__name__)

RANK_TOL = 1e-8
LEAKAGE_TOL = 1e-8


def _rel(x: np.ndarray, scale: float = 1.0) -> float:
    return float(np.linalg.norm(x, 2) / max(scale, 1e-300))


def _blocks(n: int) -> dict[str, slice]:
    return {k: slice(i * n, (i + 1) * n) for i, k in enumerate(("0t", "0S", "1t", "1S"))}


@dataclass
class GaugeProjectionSet:
    pi: np.ndarray
    b_op: np.ndarray
    pi_1: np.ndarray
    a_inv: np.ndarray
    Pi_0: np.ndarray
    B_0: np.ndarray
    ker_ht: np.ndarray  # orthonormal basis of Ker h_t
    dim_ker_ht: int
    dim_ker_pi1: int  # dim adot(Ker h_t)
    degenerate: bool  # adot not injective on Ker h_t
    s: np.ndarray | None = None
    Pi: np.ndarray | None = None
    B: np.ndarray | None = None
    audit: dict = field(default_factory=dict)


def build_pi0(gb: GaugeBackground, rank_tol: float = RANK_TOL) -> GaugeProjectionSet:
    n = gb.n
    d = gb.dbar(0.0)
    dl = d.conj().T
    a = gb.adot
    ht = gb.h_t(0.0)
    hinv = pinv_op(ht, rank_tol * max(np.linalg.norm(ht, 2), 1.0))
    pi = d @ hinv @ dl
    b_op = hinv @ dl
    ker = kernel_basis(ht, rank_tol)
    Y = a @ ker
    ascale = max(np.linalg.norm(a, 2), 1.0)
    U, sv, Vh = np.linalg.svd(Y, full_matrices=False) if Y.size else (np.zeros((n, 0)), np.zeros(0), np.zeros((0, 0)))
    keep = sv > rank_tol * ascale
    Qy = U[:, keep]
    pi_1 = np.eye(n) - Qy @ Qy.conj().T
    # least-squares right inverse Ker pi_1 -> Ker h_t
    a_inv = ker @ (Vh[keep].conj().T / sv[keep]) @ Qy.conj().T if keep.any() else np.zeros((n, n), dtype=complex)
    degenerate = int(keep.sum()) < ker.shape[1]
    if degenerate:
        log.info("adot is not injective on Ker h_t (dim %d, image dim %d)", ker.shape[1], int(keep.sum()))
    I = np.eye(n, dtype=complex)
    Z = np.zeros((n, n), dtype=complex)
    Pi0 = np.block([[Z, Z, Z, Z], [Z, I - pi, Z, Z], [Z, Z, I, Z], [Z, 1j * pi_1 @ a @ b_op, Z, pi_1]])
    gs = GaugeProjectionSet(pi, b_op, pi_1, a_inv, Pi0, np.zeros((2 * n, 4 * n), dtype=complex), ker,
                            ker.shape[1], int(keep.sum()), degenerate)
    gs.B_0 = build_B0(gs, gb)
    return gs


def build_B0(gs: GaugeProjectionSet, gb: GaugeBackground) -> np.ndarray:
    n = gb.n
    a = gb.adot
    I = np.eye(n, dtype=complex)
    Z = np.zeros((n, n), dtype=complex)
    one_m = I - gs.pi_1
    row0 = np.hstack([Z, gs.b_op - gs.a_inv @ one_m @ a @ gs.b_op, Z, 1j * gs.a_inv @ one_m])
    row1 = np.hstack([-1j * I, Z, Z, Z])
    return np.vstack([row0, row1])


def kernel_projector(K: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal projection onto Ker K (the stabilizer directions)."""
    V = kernel_basis(K, rank_tol)
    return V @ V.conj().T


def adapted_pair(d1: DiagonalizationResult, tr: AdaptedTransforms):
    """Vector projections c1+- moved from standard to adapted Cauchy data."""
    return tr.R_F @ d1.c_plus @ tr.R_F_inv, tr.R_F @ d1.c_minus @ tr.R_F_inv


def compute_R_minus_infty(c1p: np.ndarray, c0p: np.ndarray, K: np.ndarray) -> np.ndarray:
    return c1p @ K - K @ c0p


def decay_report(R: np.ndarray, row_space: ModeSpace, col_space: ModeSpace) -> dict:
    """order_norm(R, s) for s = 0..4 and a fitted power-law decay of interior column norms."""
    norms = [order_norm(R, s, row_space, col_space) for s in range(5)]
    rm, cm = row_space.interior_mask(), col_space.interior_mask()
    modes = np.abs(col_space.mode_of_index())
    sub = R[np.ix_(rm, cm)]
    col = np.linalg.norm(sub, axis=0)
    cmodes = modes[cm]
    ns = np.arange(1, row_space.N - row_space.M + 1)
    per = np.array([col[cmodes == k].max() for k in ns])
    floor = 1e-15 * max(np.linalg.norm(R, 2), 1e-300)
    y = np.log(np.maximum(per, floor))
    x = np.log(ns.astype(float))
    slope = np.polyfit(x, y, 1)[0] if len(ns) > 1 else 0.0
    return {"order_norms": norms, "mode_norms": per.tolist(), "decay_exponent": float(-slope)}


def build_s_correction(r_minus1: np.ndarray, tr: AdaptedTransforms, ker_ht: np.ndarray,
                       leak_tol: float = LEAKAGE_TOL):
    """s_{-1,R} in adapted coordinates from the deviation r_{-1,R} of the vector pipeline.

    ``r_minus1`` acts on standard Cauchy data.  Returns (s, audit).
    """
    n = tr.delta_tilde.shape[0]
    bl = _blocks(n)
    M = tr.S @ tr.R_F
    Minv = tr.R_F_inv @ tr.S_inv
    rt = M @ r_minus1 @ Minv
    nrt = float(np.linalg.norm(rt, 2))
    if nrt >= 1:
        raise CutoffError(f"||r~|| = {nrt:.3f} >= 1; increase R")
    I = np.eye(4 * n)
    rh = np.linalg.inv(I + rt) - I
    cols = np.r_[bl["0t"], bl["0S"], bl["1S"]]
    rhs = -1j * rh[bl["1t"]][:, cols]
    dt = tr.delta_tilde
    v = np.linalg.lstsq(dt, rhs, rcond=RANK_TOL)[0]
    resid = float(np.linalg.norm(dt @ v - rhs, 2))
    scale = max(float(np.linalg.norm(rh, 2)), 1e-300)
    leak = float(np.linalg.norm(ker_ht.conj().T @ rhs, 2)) if ker_ht.size else 0.0
    audit = {"r_tilde_norm": nrt, "lstsq_residual": resid / scale, "kernel_leakage": leak / scale}
    if resid > leak_tol * scale:
        raise CutoffError(f"cutoff leakage: least-squares residual {resid / scale:.2e}, "
                           f"kernel-mode mass {leak / scale:.2e}; increase R")
    vh = np.zeros_like(rh)
    vh[bl["0S"], cols] = v
    sh = rh + vh
    st = np.linalg.inv(I + sh) - I
    s = tr.S_inv @ st @ tr.S
    return s, audit


def build_Pi_B(gs: GaugeProjectionSet, s: np.ndarray) -> dict:
    I = np.eye(s.shape[0])
    P0 = gs.Pi_0
    sP = s @ P0
    rho = float(np.max(np.abs(np.linalg.eigvals(sP))))
    if rho >= 1:
        raise CutoffError(f"Neumann condition violated (spectral radius of s Pi_0 = {rho:.3f}); increase R")
    Pi = (I + s) @ P0 @ np.linalg.inv(I + P0 @ s @ P0)
    Pi_alt = I - (I - P0) @ np.linalg.inv(I + sP)
    B = gs.B_0 @ np.linalg.inv(I + sP)
    gs.s, gs.Pi, gs.B = s, Pi, B
    gs.audit["neumann_radius"] = rho
    gs.audit["Pi_formulas"] = _rel(Pi - Pi_alt, max(np.linalg.norm(Pi, 2), 1.0))
    return {"Pi": Pi, "B": B, "Pi_alt": Pi_alt}


@dataclass
class CTilde:
    c_plus: np.ndarray
    c_minus: np.ndarray
    reg_plus: np.ndarray
    reg_minus: np.ndarray
    R: np.ndarray


def build_c_tilde(c1p, c1m, c0p, c0m, Pi, B, K, Kd, q0, q1) -> CTilde:
    Pid = q_adjoint(Pi, q1, q1)
    Bd = q_adjoint(B, q0, q1)
    R = compute_R_minus_infty(c1p, c0p, K)
    Rd = q_adjoint(R, q1, q0)
    cp = Pid @ c1p @ Pi + Bd @ c0p @ Kd + K @ c0p @ B
    cm = Pid @ c1m @ Pi + Bd @ c0m @ Kd + K @ c0m @ B
    reg = Bd @ Rd + Pid @ R @ B
    return CTilde(cp, cm, reg, -reg, R)


def gauge_two_point(ct: CTilde, q1: np.ndarray):
    return q1 @ ct.c_plus, -q1 @ ct.c_minus


def _restricted_eigs(L: np.ndarray, Q: np.ndarray) -> np.ndarray:
    B = Q.conj().T @ L @ Q
    return np.linalg.eigvalsh((B + B.conj().T) / 2)


@dataclass
class GaugeResult:
    gs: GaugeProjectionSet
    K: np.ndarray
    Kd: np.ndarray
    c1_plus: np.ndarray
    c1_minus: np.ndarray
    c0_plus: np.ndarray
    c0_minus: np.ndarray
    ct: CTilde
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    q0: np.ndarray
    q1: np.ndarray
    battery: dict
    positivity: dict
    decay: dict
    membership: float
    dims: dict


def run_gauge(gb: GaugeBackground, C: float, d0: DiagonalizationResult, d1: DiagonalizationResult,
              rank_tol: float = RANK_TOL, n_random: int = 20, seed: int = 0) -> GaugeResult:
    n = gb.n
    tr = adapted_transform(gb, C)
    K, Kd = K_sigma_closed_form(gb)
    q0 = charge_form(np.ones(n))
    q1 = charge_form(np.concatenate([-np.ones(n), np.ones(n)]))
    c1p, c1m = adapted_pair(d1, tr)
    c0p, c0m = d0.c_plus, d0.c_minus
    gs = build_pi0(gb, rank_tol)
    s, audit = build_s_correction(d1.r_minus1, tr, gs.ker_ht)
    gs.audit.update(audit)
    build_Pi_B(gs, s)
    Pi, B = gs.Pi, gs.B
    ct = build_c_tilde(c1p, c1m, c0p, c0m, Pi, B, K, Kd, q0, q1)
    lp, lm = gauge_two_point(ct, q1)

    I4, I2 = np.eye(4 * n), np.eye(2 * n)
    Pk = kernel_projector(K, rank_tol)
    Kscale = max(np.linalg.norm(K, 2), 1.0)
    cn = max(np.linalg.norm(c1p, 2), 1.0)
    ker_kd = kernel_basis(Kd, rank_tol)
    ran_k = range_basis(K, rank_tol)
    rng = np.random.default_rng(seed)

    bat = {
        "Kd_K": _rel(Kd @ K, Kscale ** 2),
        "Kd_qadjoint": _rel(Kd - q_adjoint(K, q1, q0), Kscale),
        "Pi0_idem": _rel(gs.Pi_0 @ gs.Pi_0 - gs.Pi_0, max(np.linalg.norm(gs.Pi_0, 2), 1.0)),
        "Pi0_K": _rel(gs.Pi_0 @ K, Kscale),
        "K_B0": _rel(K @ gs.B_0 + gs.Pi_0 - I4, max(np.linalg.norm(gs.Pi_0, 2), 1.0)),
        "B0_K": _rel(gs.B_0 @ K - (I2 - Pk), 1.0),
        "B0_K_literal": _rel(gs.B_0 @ K - I2, 1.0),
        "Pi_idem": _rel(Pi @ Pi - Pi, max(np.linalg.norm(Pi, 2), 1.0)),
        "Pi_formulas": gs.audit["Pi_formulas"],
        "Pi_K": _rel(Pi @ K, Kscale * max(np.linalg.norm(Pi, 2), 1.0)),
        "K_B": _rel(K @ B - (I4 - Pi), max(np.linalg.norm(Pi, 2), 1.0)),
        "B_K": _rel(B @ K - (I2 - Pk), 1.0),
        "B_K_literal": _rel(B @ K - I2, 1.0),
        "ct_sum": _rel(ct.c_plus + ct.c_minus - I4, 1.0),
        "ct_qadj": max(_rel(q_adjoint(c, q1, q1) - c, cn) for c in (ct.c_plus, ct.c_minus)),
        "ct_kerKd_invariance": max(_rel(Kd @ c @ ker_kd, Kscale * cn) for c in (ct.c_plus, ct.c_minus)),
        "ct_K_strengthened": _rel(ct.c_plus @ K - K @ c0p @ B @ K, Kscale * cn),
        "ct_K_literal": _rel(ct.c_plus @ K - K @ c0p, Kscale * cn),
        "ct_K_off_stabilizer": _rel((ct.c_plus @ K - K @ c0p) @ (I2 - Pk), Kscale * cn),
        "decomposition_v": max(_rel(c1p - ct.c_plus - ct.reg_plus, cn), _rel(c1m - ct.c_minus - ct.reg_minus, cn)),
        "R_complementarity": _rel(c1m @ K - K @ c0m + ct.R, Kscale * cn),
        "lt_diff_q": _rel(lp - lm - q1, 1.0),
        "lt_herm": max(_rel(lp - lp.conj().T, max(np.linalg.norm(lp, 2), 1.0)),
                       _rel(lm - lm.conj().T, max(np.linalg.norm(lm, 2), 1.0))),
    }
    # (2)iv: lambda~ = Pi^* lambda_1 Pi on Ker K^dagger
    l1p, l1m = q1 @ c1p, -q1 @ c1m
    ls = max(np.linalg.norm(l1p, 2), 1.0)
    Q = ker_kd
    bat["iv_restriction"] = max(
        _rel(Q.conj().T @ (lp - Pi.conj().T @ l1p @ Pi) @ Q, ls),
        _rel(Q.conj().T @ (lm - Pi.conj().T @ l1m @ Pi) @ Q, ls))
    worst = 0.0
    for _ in range(n_random):
        u = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
        g = K @ u
        worst = max(worst, abs(g.conj() @ lp @ g) / (np.linalg.norm(g) ** 2 * ls),
                    abs(g.conj() @ lm @ g) / (np.linalg.norm(g) ** 2 * ls))
    bat["gauge_null"] = float(worst)
    ker_pi0 = kernel_basis(gs.Pi_0, rank_tol)
    dist = 0.0
    for _ in range(n_random):
        g = ker_pi0 @ (rng.standard_normal(ker_pi0.shape[1]) + 1j * rng.standard_normal(ker_pi0.shape[1]))
        g /= np.linalg.norm(g)
        dist = max(dist, float(np.linalg.norm(g - ran_k @ (ran_k.conj().T @ g))))
    bat["ker_Pi0_in_ran_K"] = dist

    # positivity
    scale = max(np.linalg.norm(lp, 2), np.linalg.norm(lm, 2))
    ep, em = _restricted_eigs(lp, Q), _restricted_eigs(lm, Q)
    X = Q - ran_k @ (ran_k.conj().T @ Q)
    quo = range_basis(X, rank_tol) if X.size else X
    es = _restricted_eigs(lp + lm, quo)
    eq = np.linalg.eigvalsh(quo.conj().T @ q1 @ quo) if quo.size else np.zeros(0)
    ran_pi = range_basis(Pi, rank_tol)
    inter = ran_pi @ kernel_basis(Kd @ ran_pi, rank_tol)
    inter, _ = np.linalg.qr(inter)
    pre_p, pre_m = _restricted_eigs(l1p, inter), _restricted_eigs(l1m, inter)
    pos = {
        "scale": float(scale),
        "eig_plus_kerKd": ep.tolist(),
        "eig_minus_kerKd": em.tolist(),
        "min_plus_rel": float(ep[0] / scale),
        "min_minus_rel": float(em[0] / scale),
        "quotient_sum_eigs": es.tolist(),
        "quotient_min_sum": float(es[0]) if es.size else float("nan"),
        "quotient_q_min_abs": float(np.min(np.abs(eq))) if eq.size else float("nan"),
        "th_n2_min_plus_rel": float(pre_p[0] / ls) if pre_p.size else float("nan"),
        "th_n2_min_minus_rel": float(pre_m[0] / ls) if pre_m.size else float("nan"),
    }
    # membership of Ran Pi ∩ Ker K^dagger in (1 + r)(W_S + W_S) through the tilde coordinates
    M = tr.S @ tr.R_F
    rt = M @ d1.r_minus1 @ np.linalg.inv(M)
    A1 = np.block([[np.eye(n), np.zeros((n, 3 * n))],
                   [np.zeros((n, n)), tr.delta_tilde, -1j * np.eye(n), np.zeros((n, n))]])
    memb = 0.0
    for _ in range(n_random):
        w = inter @ (rng.standard_normal(inter.shape[1]) + 1j * rng.standard_normal(inter.shape[1]))
        wt = tr.S @ w
        memb = max(memb, float(np.linalg.norm(A1 @ np.linalg.solve(np.eye(4 * n) + rt, wt)) / np.linalg.norm(wt)))
    fs = vector_field_space(gb.space)
    decay = decay_report(ct.R, cauchy_space(fs), cauchy_space(scalar_field_space(gb.space)))
    decay["c_reg_order_norms"] = [max(order_norm(ct.reg_plus, s, cauchy_space(fs)),
                                      order_norm(ct.reg_minus, s, cauchy_space(fs))) for s in range(5)]
    rank_k = ran_k.shape[1]
    dims = {
        "dim_ker_ht": gs.dim_ker_ht,
        "dim_adot_ker_ht": gs.dim_ker_pi1,
        "degenerate": gs.degenerate,
        "dim_ker_K": 2 * n - rank_k,
        "rank_K": rank_k,
        "dim_ker_Kd": Q.shape[1],
        "dim_quotient": quo.shape[1],
        "dim_ranPi_cap_kerKd": inter.shape[1],
    }
    return GaugeResult(gs, K, Kd, c1p, c1m, c0p, c0m, ct, lp, lm, q0, q1, bat, pos, decay, memb, dims)
