"""Symplectic diagonalization of the Cauchy evolution at t = 0.

From b = b_R(0) we build Z with J b + b^* J = Z^* J Z, the map T with
(T^-1)^* q T^-1 = diag(J, -J), the complementary q-projections c+- and the
Cauchy-surface pair lambda+- = +-q c+-.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .factor import CutoffError, FactorizationResult, b_minus, r_pm
from .spectral import ModeSpace, funcalc, hermitian_residual, order_norm
from .waveops import cauchy_space, charge_form


def _rel(x: np.ndarray, scale: float) -> float:
    return float(np.linalg.norm(x, 2) / max(scale, 1e-300))


def _sqrt_pd(A: np.ndarray, what: str) -> np.ndarray:
    A = (A + A.conj().T) / 2
    w = np.linalg.eigvalsh(A)
    if w[0] <= 0:
        raise CutoffError(f"{what} is not positive definite (min eigenvalue {w[0]:.3e}); "
                           "cutoff misconfigured, raise R")
    return funcalc(A, np.sqrt)


@dataclass
class DiagonalizationResult:
    kind: str
    J: np.ndarray
    b: np.ndarray
    eps: np.ndarray
    Z: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray
    c_plus: np.ndarray
    c_minus: np.ndarray
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    r_minus1: np.ndarray
    S: np.ndarray  # diag(eps^{1/2}, eps^{-1/2}) on Cauchy data
    field_space: ModeSpace
    residuals: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def q(self) -> np.ndarray:
        return charge_form(self.J)


def solve_Z(b: np.ndarray, eps: np.ndarray, J: np.ndarray):
    """Z = S (2 eps)^{1/2} with the triangular cascade (s_{t Sigma} = 0).

    Returns (Z, residual of J b + b^* J = Z^* J Z relative to ||b||).
    """
    e2h = funcalc(2 * eps, np.sqrt)
    e2mh = funcalc(2 * eps, lambda w: w ** -0.5)
    c = e2mh @ b @ e2mh - 0.5 * np.eye(len(J))
    t = np.flatnonzero(J < 0)
    s = np.flatnonzero(J > 0)
    S = np.zeros_like(c)
    css = c[np.ix_(s, s)]
    sss = _sqrt_pd(np.eye(len(s)) + css + css.conj().T, "1 + c_SS + c_SS^*")
    S[np.ix_(s, s)] = sss
    if t.size:
        sst = np.linalg.solve(sss, c[np.ix_(s, t)] - c[np.ix_(t, s)].conj().T)
        ctt = c[np.ix_(t, t)]
        stt = _sqrt_pd(np.eye(len(t)) + ctt + ctt.conj().T + sst.conj().T @ sst, "1 + c_tt + c_tt^* + s^* s")
        S[np.ix_(s, t)] = sst
        S[np.ix_(t, t)] = stt
    Z = S @ e2h
    lhs = J[:, None] * b + b.conj().T * J[None, :]
    res = _rel(lhs - Z.conj().T @ (J[:, None] * Z), np.linalg.norm(b, 2))
    return Z, res


def build_T(b: np.ndarray, J: np.ndarray, Z: np.ndarray):
    """T = Z (b+ - b-)^-1 (x) 1 o [[-b-, 1], [b+, -1]] and its closed-form inverse."""
    bp, bm = b, b_minus(b, J)
    D = np.linalg.inv(bp - bm)
    s = np.linalg.svd(Z, compute_uv=False)
    if s[-1] < 1e-12 * s[0]:
        raise CutoffError("Z is numerically singular")
    ZD = Z @ D
    T = np.block([[-ZD @ bm, ZD], [ZD @ bp, -ZD]])
    Zi = np.linalg.inv(Z)
    Ti = np.block([[Zi, Zi], [bp @ Zi, bm @ Zi]])
    return T, Ti


def projections_c(T: np.ndarray, T_inv: np.ndarray):
    m = T.shape[0] // 2
    return T_inv[:, :m] @ T[:m, :], T_inv[:, m:] @ T[m:, :]


def projections_from_r(res: FactorizationResult):
    """Alternative formula c+- f = (r+- f, b+- r+- f)."""
    r = r_pm(res)
    bp = np.array(res.b[0])
    bm = b_minus(bp, res.fam.J)
    return np.vstack([r.plus, bp @ r.plus]), np.vstack([r.minus, bm @ r.minus])


def two_point(c_plus: np.ndarray, c_minus: np.ndarray, J: np.ndarray):
    q = charge_form(J)
    return q @ c_plus, -q @ c_minus


def hadamard_block(m: int) -> np.ndarray:
    I = np.eye(m)
    return np.block([[I, I], [I, -I]]) / np.sqrt(2)


def extract_r_minus1(T_inv: np.ndarray, S: np.ndarray) -> np.ndarray:
    """r with T = H S (1 + r)^-1, i.e. 1 + r = T^-1 H S."""
    m = T_inv.shape[0] // 2
    return T_inv @ hadamard_block(m) @ S - np.eye(2 * m)


def diagonalize(res: FactorizationResult) -> DiagonalizationResult:
    fam = res.fam
    b = np.array(res.b[0])
    eps = np.array(fam.eps[0])
    J = fam.J
    Z, r_Z = solve_Z(b, eps, J)
    T, Ti = build_T(b, J, Z)
    cp, cm = projections_c(T, Ti)
    lp, lm = two_point(cp, cm, J)
    eh = funcalc(eps, lambda w: w ** 0.5)
    emh = funcalc(eps, lambda w: w ** -0.5)
    z = np.zeros_like(eh)
    S = np.block([[eh, z], [z, emh]])
    rm1 = extract_r_minus1(Ti, S)
    out = DiagonalizationResult(fam.kind, J, b, eps, Z, T, Ti, cp, cm, lp, lm, rm1, S, fam.field_space)
    out.residuals = identity_battery(out, res)
    out.residuals["Z_charge"] = r_Z
    return out


def identity_battery(d: DiagonalizationResult, res: FactorizationResult | None = None) -> dict:
    """Relative residuals of the exact identities of the diagonalization."""
    I = np.eye(2 * d.m)
    q = d.q
    nc = max(np.linalg.norm(d.c_plus, 2), 1.0)
    Dm = np.diag(np.concatenate([d.J, -d.J])).astype(complex)
    Ti = d.T_inv
    out = {
        "T_Tinv": _rel(d.T @ Ti - I, 1.0),
        "T_charge": _rel(Ti.conj().T @ q @ Ti - Dm, 1.0),
        "c_sum": _rel(d.c_plus + d.c_minus - I, 1.0),
        "c_plus_idem": _rel(d.c_plus @ d.c_plus - d.c_plus, nc),
        "c_minus_idem": _rel(d.c_minus @ d.c_minus - d.c_minus, nc),
        "c_plus_qadj": _rel(np.linalg.solve(q, d.c_plus.conj().T @ q) - d.c_plus, nc),
        "c_minus_qadj": _rel(np.linalg.solve(q, d.c_minus.conj().T @ q) - d.c_minus, nc),
        "lambda_diff_q": _rel(d.lambda_plus - d.lambda_minus - q, 1.0),
        "lambda_plus_herm": hermitian_residual(d.lambda_plus),
        "lambda_minus_herm": hermitian_residual(d.lambda_minus),
    }
    m = d.m
    Jb = np.diag(d.J).astype(complex)
    zero = np.zeros((m, m))
    lp = d.T.conj().T @ np.block([[Jb, zero], [zero, zero]]) @ d.T
    lm = d.T.conj().T @ np.block([[zero, zero], [zero, Jb]]) @ d.T
    sc = max(np.linalg.norm(d.lambda_plus, 2), 1.0)
    out["lambda_from_T"] = max(_rel(lp - d.lambda_plus, sc), _rel(lm - d.lambda_minus, sc))
    if res is not None:
        ap, am = projections_from_r(res)
        out["c_alt_formula"] = max(_rel(ap - d.c_plus, nc), _rel(am - d.c_minus, nc))
    return out


def ker_orthogonality(d: DiagonalizationResult, n: int = 20, seed: int = 0) -> float:
    """max |q(c+ u, c- v)| / (|c+ u| |c- v|) over random pairs."""
    rng = np.random.default_rng(seed)
    q = d.q
    worst = 0.0
    for _ in range(n):
        u = rng.standard_normal(2 * d.m) + 1j * rng.standard_normal(2 * d.m)
        v = rng.standard_normal(2 * d.m) + 1j * rng.standard_normal(2 * d.m)
        a, b = d.c_plus @ u, d.c_minus @ v
        worst = max(worst, abs(a.conj() @ q @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return float(worst)


@dataclass
class Witness:
    vector: np.ndarray
    expectation: float  # v^* (lambda+ + lambda-) v
    normalized: float  # expectation / ||T v||^2
    rayleigh: float  # expectation / (||v||^2 ||lambda+ + lambda-||)
    min_eig: float


def nonexistence_witness(d: DiagonalizationResult, mode: int = 0) -> Witness:
    """v = T^-1 (e, 0) with e a unit vector in the time block at Fourier mode ``mode``."""
    L = d.lambda_plus + d.lambda_minus
    L = (L + L.conj().T) / 2
    w = np.linalg.eigvalsh(L)
    t = np.flatnonzero(d.J < 0)
    if t.size == 0:
        return Witness(np.zeros(2 * d.m, dtype=complex), 0.0, 0.0, 0.0, float(w[0]))
    fs = d.field_space
    label = "t" if any(b[0] == "t" for b in fs.blocks) else fs.blocks[0][0]
    fiber = fs.block_dim(label) // fs.n_modes
    e = np.zeros(2 * d.m, dtype=complex)
    e[t[(mode + fs.N) * fiber]] = 1.0
    v = d.T_inv @ e
    ex = float(np.real(v.conj() @ L @ v))
    return Witness(v, ex, ex / float(np.linalg.norm(d.T @ v) ** 2),
                   ex / (float(np.linalg.norm(v) ** 2) * max(abs(w[0]), abs(w[-1]))), float(w[0]))


def pn1_positivity(d: DiagonalizationResult) -> dict:
    """Spectra of lambda+- on (1 + r_{-1,R}) applied to data with vanishing time components."""
    s = np.flatnonzero(d.J > 0)
    idx = np.concatenate([s, d.m + s])
    X = (np.eye(2 * d.m) + d.r_minus1)[:, idx]
    Q, _ = np.linalg.qr(X)
    scale = max(np.linalg.norm(d.lambda_plus, 2), 1.0)
    out = {}
    for name, L in (("plus", d.lambda_plus), ("minus", d.lambda_minus)):
        B = Q.conj().T @ L @ Q
        out[name] = float(np.linalg.eigvalsh((B + B.conj().T) / 2)[0] / scale)
    out["r_norm"] = float(np.linalg.norm(d.r_minus1, 2))
    return out


def r_minus1_order_norm(d: DiagonalizationResult, s: float = 0) -> float:
    cs = cauchy_space(d.field_space)
    return order_norm(d.r_minus1, s, cs)
