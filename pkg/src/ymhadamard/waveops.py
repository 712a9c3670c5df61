"""Scalar and vector Klein-Gordon families, charge form, adapted Cauchy data
and the gauge operators K_Sigma, K_Sigma^dagger.

Index conventions.  A field space is the single-block mode space of 0-forms
(or 1-forms, identified on the flat circle), of dimension n = (2N+1) dim g.
Vector fields live on W = W_t + W_Sigma (2n).  Standard Cauchy data are
(f0, f1) = (zeta, i^-1 d_t zeta); adapted vector data are ordered
(g0_t, g0_S, g1_t, g1_S), each block of size n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .background import BackgroundFamily, BackgroundState, dbar_matrix, pad
from .liealg import LieAlgebraBasis, ad_matrix
from .spectral import ModeSpace, funcalc, multiplication_op

CLUSTER_TOL = 1e-12


def gauss_consistent(dbar0: np.ndarray, adot: np.ndarray) -> np.ndarray:
    """Project ``adot`` onto the commutant of the normal matrix ``dbar0``.

    Eigenvalue clusters of i dbar0 are kept together, so the result commutes
    with dbar0 to roundoff and is the Frobenius-closest such matrix.
    """
    w, V = np.linalg.eigh(1j * dbar0)
    X = V.conj().T @ adot @ V
    out = np.zeros_like(X)
    scale = max(1.0, float(np.max(np.abs(w))))
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > CLUSTER_TOL * scale:
            out[start:i, start:i] = X[start:i, start:i]
            start = i
    P = V @ out @ V.conj().T
    return (P - P.conj().T) / 2


@dataclass
class GaugeBackground:
    """Background operators: dbar(t) = dbar0 + t adot with [dbar0, adot] = 0."""

    space: ModeSpace
    alg: LieAlgebraBasis
    dbar0: np.ndarray
    adot: np.ndarray
    adot_galerkin: np.ndarray
    ts: np.ndarray
    static: bool

    @property
    def n(self) -> int:
        return self.dbar0.shape[0]

    def dbar(self, t: float) -> np.ndarray:
        return self.dbar0 + t * self.adot

    def delta(self, t: float) -> np.ndarray:
        return self.dbar(t).conj().T

    def h_t(self, t: float) -> np.ndarray:
        d = self.dbar(t)
        return d.conj().T @ d

    def h_S(self, t: float) -> np.ndarray:
        # d = 1: no curvature term, h_Sigma = dbar delta.
        d = self.dbar(t)
        return d @ d.conj().T

    def pinch_deviation(self) -> float:
        """Interior size of the change made by the Gauss-law projection, relative to ||adot||."""
        m = self.space.interior_mask()
        diff = (self.adot - self.adot_galerkin)[np.ix_(m, m)]
        return float(np.linalg.norm(diff, 2) / max(np.linalg.norm(self.adot_galerkin, 2), 1e-300))


def build_gauge_background(fam: BackgroundFamily, space: ModeSpace, alg: LieAlgebraBasis) -> GaugeBackground:
    st0 = fam.states[0]
    dbar0 = dbar_matrix(space, alg, st0.A_sigma)
    L = max(st0.F_t.shape[0] // 2, 1)
    ME = multiplication_op(space, ad_matrix(alg, pad(st0.F_t, L)), allow_wide=True)
    adot = np.zeros_like(ME) if st0.static else gauss_consistent(dbar0, ME)
    return GaugeBackground(space, alg, dbar0, adot, ME, fam.ts, st0.static)


def gauss_symmetry_residual(dbar: np.ndarray, adot: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Relative size of delta adot - adot^* dbar, optionally on an interior block."""
    R = dbar.conj().T @ adot - adot.conj().T @ dbar
    scale = max(np.linalg.norm(dbar, 2) * np.linalg.norm(adot, 2), 1e-300)
    if mask is not None:
        R = R[np.ix_(mask, mask)]
    return float(np.linalg.norm(R, 2) / scale) if np.any(adot) else float(np.linalg.norm(R, 2))


def galerkin_gauss_symmetry(state: BackgroundState, space: ModeSpace, alg: LieAlgebraBasis) -> float:
    """Symmetry residual of the raw Galerkin field operator of ``state`` on interior modes."""
    d = dbar_matrix(space, alg, state.A_sigma)
    L = max(state.F_t.shape[0] // 2, 1)
    ME = multiplication_op(space, ad_matrix(alg, pad(state.F_t, L)), allow_wide=True)
    return gauss_symmetry_residual(d, ME, space.interior_mask())


@dataclass
class WaveOperatorFamily:
    kind: str  # "scalar" | "vector"
    ts: np.ndarray
    a_of_t: Callable[[float], np.ndarray]
    a: np.ndarray  # (K+1, m, m)
    eps: np.ndarray  # (K+1, m, m)
    C: float
    J: np.ndarray  # diagonal of the fiber involution
    field_space: ModeSpace
    rho: float = 0.0
    h_of_t: Callable[[float], np.ndarray] | None = None
    eps_of_t: Callable[[float], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.ts[1] - self.ts[0])

    @property
    def m(self) -> int:
        return self.a.shape[-1]

    def cauchy_space(self) -> ModeSpace:
        return cauchy_space(self.field_space)


def cauchy_space(field_space: ModeSpace) -> ModeSpace:
    return field_space.with_blocks([(f"{s}{lab}", d) for s in ("0", "1") for lab, d in field_space.blocks])


def scalar_field_space(space: ModeSpace) -> ModeSpace:
    return space.with_blocks([("g", space.blocks[0][1])])


def vector_field_space(space: ModeSpace) -> ModeSpace:
    d = space.blocks[0][1]
    return space.with_blocks([("t", d), ("S", d)])


def assemble_h(gb: GaugeBackground, t: float, C: float):
    """(h_t, h_Sigma, eps_t, eps_Sigma) at time t."""
    ht, hs = gb.h_t(t), gb.h_S(t)
    sq = lambda w: np.sqrt(w + C)
    return ht, hs, funcalc(ht, sq), funcalc(hs, sq)


def a0_of(gb: GaugeBackground, rho: float = 0.0) -> Callable[[float], np.ndarray]:
    def a0(t: float) -> np.ndarray:
        h = gb.h_t(t)
        return h + rho * np.eye(gb.n) if rho else h
    return a0


def a1_of(gb: GaugeBackground) -> Callable[[float], np.ndarray]:
    def a1(t: float) -> np.ndarray:
        a = gb.adot
        return np.block([[gb.h_t(t), 2 * a.conj().T], [-2 * a, gb.h_S(t)]])
    return a1


def _eps_vec(gb: GaugeBackground, C: float) -> Callable[[float], np.ndarray]:
    # h is block diagonal over (t, Sigma), so the square root is taken per block
    def eps(t: float) -> np.ndarray:
        I = np.eye(gb.n)
        return _bdiag(funcalc(gb.h_t(t) + C * I, np.sqrt), funcalc(gb.h_S(t) + C * I, np.sqrt))
    return eps


def _h_vec(gb: GaugeBackground) -> Callable[[float], np.ndarray]:
    def h(t: float) -> np.ndarray:
        z = np.zeros((gb.n, gb.n), dtype=complex)
        return np.block([[gb.h_t(t), z], [z, gb.h_S(t)]])
    return h


def assemble_family(gb: GaugeBackground, kind: str, C: float, rho: float = 0.0) -> WaveOperatorFamily:
    """Sample a(t) and eps(t) = (h(t) + C)^{1/2} on the grid."""
    if C <= 0:
        raise ValueError("shift constant C must be positive")
    if kind == "scalar":
        a_of = a0_of(gb, rho)
        h_of = gb.h_t
        J = np.ones(gb.n)
        fs = scalar_field_space(gb.space)
        eps_of = lambda t: funcalc(gb.h_t(t) + C * np.eye(gb.n), np.sqrt)
    elif kind == "vector":
        if rho:
            raise ValueError("oracle mass is scalar only")
        a_of = a1_of(gb)
        h_of = _h_vec(gb)
        J = np.concatenate([-np.ones(gb.n), np.ones(gb.n)])
        fs = vector_field_space(gb.space)
        eps_of = _eps_vec(gb, C)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    ts = gb.ts
    if gb.static:
        a0 = a_of(0.0)
        e0 = eps_of(0.0)
        a = np.broadcast_to(a0, (len(ts),) + a0.shape)
        eps = np.broadcast_to(e0, (len(ts),) + e0.shape)
    else:
        a = np.stack([a_of(t) for t in ts])
        eps = np.stack([eps_of(t) for t in ts])
    return WaveOperatorFamily(kind, ts, a_of, a, eps, C, J, fs, rho, h_of, eps_of)


def self_adjointness_residual(fam: WaveOperatorFamily) -> float:
    """max over nodes of ||a^* J - J a|| / ||a|| (Frobenius)."""
    J = fam.J
    worst = 0.0
    for a in (fam.a if not _is_static(fam) else fam.a[:1]):
        r = np.linalg.norm(a.conj().T * J[None, :] - J[:, None] * a)
        worst = max(worst, r / max(np.linalg.norm(a), 1e-300))
    return float(worst)


def _is_static(fam: WaveOperatorFamily) -> bool:
    return fam.a.strides[0] == 0


def time_derivative(stack: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order central differences, one-sided fourth order at both ends."""
    if stack.strides[0] == 0:
        return np.zeros(stack.shape, dtype=stack.dtype)
    f = stack
    K = f.shape[0]
    if K < 5:
        raise ValueError("need at least 5 grid nodes")
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dt)
    fwd = np.array([-25, 48, -36, 16, -3]) / (12 * dt)
    d[0] = np.tensordot(fwd, f[0:5], axes=1)
    d[1] = np.tensordot(np.array([-3, -10, 18, -6, 1]) / (12 * dt), f[0:5], axes=1)
    d[-1] = -np.tensordot(fwd, f[-1:-6:-1], axes=1)
    d[-2] = -np.tensordot(np.array([-3, -10, 18, -6, 1]) / (12 * dt), f[-1:-6:-1], axes=1)
    return d


def _rk4_cauchy(a_of: Callable[[float], np.ndarray], y: np.ndarray, t0: float, t1: float, steps: int) -> np.ndarray:
    m = y.shape[0] // 2
    h = (t1 - t0) / steps

    def rhs(t, y, a):
        return 1j * np.concatenate([y[m:], a @ y[:m]])

    t = t0
    for _ in range(steps):
        am = a_of(t + h / 2)
        k1 = rhs(t, y, a_of(t))
        k2 = rhs(t, y + h / 2 * k1, am)
        k3 = rhs(t, y + h / 2 * k2, am)
        k4 = rhs(t, y + h * k3, a_of(t + h))
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def cauchy_evolution(fam: WaveOperatorFamily, t_index: int, data: np.ndarray | None = None,
                     substeps: int = 4, ode_tol: float | None = None) -> np.ndarray:
    """U(t) applied to Cauchy data (identity by default) for
    i^-1 d_t (f0, f1) = [[0, 1], [a, 0]] (f0, f1), with RK4 at step dt/substeps."""
    y0 = np.eye(2 * fam.m, dtype=complex) if data is None else np.asarray(data, dtype=complex)
    t = float(fam.ts[t_index])
    if t_index == 0:
        return y0.copy()
    y = _rk4_cauchy(fam.a_of_t, y0, 0.0, t, substeps * t_index)
    if ode_tol is not None:
        y2 = _rk4_cauchy(fam.a_of_t, y0, 0.0, t, 2 * substeps * t_index)
        err = np.linalg.norm(y - y2) / max(np.linalg.norm(y2), 1e-300)
        if err > ode_tol:
            raise RuntimeError(f"step-halving disagreement {err:.2e} exceeds ode_tol {ode_tol:.1e}")
    return y


def trajectory(fam: WaveOperatorFamily, data: np.ndarray, n_nodes: int, substeps: int = 4) -> np.ndarray:
    """Cauchy data at grid nodes 0..n_nodes-1 (stacked along axis 0)."""
    out = [np.asarray(data, dtype=complex)]
    y = out[0]
    for i in range(1, n_nodes):
        y = _rk4_cauchy(fam.a_of_t, y, float(fam.ts[i - 1]), float(fam.ts[i]), substeps)
        out.append(y)
    return np.stack(out)


def charge_form(J: np.ndarray) -> np.ndarray:
    """q = [[0, J], [J, 0]]."""
    Jm = np.diag(J).astype(complex)
    Z = np.zeros_like(Jm)
    return np.block([[Z, Jm], [Jm, Z]])


def q_adjoint(X: np.ndarray, q_out: np.ndarray, q_in: np.ndarray) -> np.ndarray:
    """X^dagger = q_in^-1 X^* q_out for X mapping the q_in space to the q_out space."""
    return np.linalg.solve(q_in, X.conj().T @ q_out)


@dataclass
class AdaptedTransforms:
    R_F: np.ndarray
    R_F_inv: np.ndarray
    S: np.ndarray
    S_inv: np.ndarray
    R_tilde: np.ndarray
    delta_tilde: np.ndarray
    eps_half: np.ndarray  # eps^{1/2} on W (2n)
    eps_mhalf: np.ndarray


def adapted_transform(gb: GaugeBackground, C: float) -> AdaptedTransforms:
    """R_F (standard -> adapted data), S = diag(eps^{1/2}, eps^{-1/2}) and R~_F = S R_F S^-1."""
    n = gb.n
    d = gb.dbar(0.0)
    dl = d.conj().T
    I = np.eye(n, dtype=complex)
    Z = np.zeros((n, n), dtype=complex)
    R = np.block([[I, Z, Z, Z], [Z, I, Z, Z], [Z, -1j * dl, I, Z], [1j * d, Z, Z, I]])
    Ri = np.block([[I, Z, Z, Z], [Z, I, Z, Z], [Z, 1j * dl, I, Z], [-1j * d, Z, Z, I]])
    ht, hs = gb.h_t(0.0), gb.h_S(0.0)
    et_h = funcalc(ht + C * I, lambda w: (w) ** 0.25)
    es_h = funcalc(hs + C * I, lambda w: (w) ** 0.25)
    et_mh = funcalc(ht + C * I, lambda w: (w) ** -0.25)
    es_mh = funcalc(hs + C * I, lambda w: (w) ** -0.25)
    eh = _bdiag(et_h, es_h)
    emh = _bdiag(et_mh, es_mh)
    S = _bdiag(eh, emh)
    Si = _bdiag(emh, eh)
    return AdaptedTransforms(R, Ri, S, Si, S @ R @ Si, et_mh @ dl @ es_mh, eh, emh)


def _bdiag(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    Z1 = np.zeros((A.shape[0], B.shape[1]), dtype=complex)
    Z2 = np.zeros((B.shape[0], A.shape[1]), dtype=complex)
    return np.block([[A, Z1], [Z2, B]])


def K_sigma_closed_form(gb: GaugeBackground) -> tuple[np.ndarray, np.ndarray]:
    """K_Sigma (scalar data -> adapted vector data) and K_Sigma^dagger."""
    n = gb.n
    d = gb.dbar(0.0)
    a = gb.adot
    I = np.eye(n, dtype=complex)
    Z = np.zeros((n, n), dtype=complex)
    K = np.block([[Z, 1j * I], [d, Z], [Z, Z], [-1j * a, Z]])
    Kd = np.block([[Z, Z, 1j * I, Z], [Z, 1j * a.conj().T, Z, d.conj().T]])
    return K, Kd


def _fd_weights_forward(order: int) -> np.ndarray:
    # one-sided fourth-order stencils on nodes 0..4 for first and second derivatives
    if order == 1:
        return np.array([-25, 48, -36, 16, -3]) / 12
    return np.array([35, -104, 114, -56, 11]) / 12


def K_sigma_numeric(gb: GaugeBackground, scalar: WaveOperatorFamily, substeps: int = 16) -> np.ndarray:
    """rho_1^F K U_0 evaluated by evolving the scalar problem and differentiating.

    The trajectory is sampled on a fine local grid (step dt/substeps) so the
    one-sided differences near t = 0 are accurate.
    """
    n = gb.n
    h = scalar.dt / substeps
    y = np.eye(2 * n, dtype=complex)
    states = [y]
    for i in range(1, 5):
        y = _rk4_cauchy(scalar.a_of_t, y, (i - 1) * h, i * h, 4)
        states.append(y)
    u = np.stack([s[:n] for s in states])  # zeta(t_j)
    w1, w2 = _fd_weights_forward(1) / h, _fd_weights_forward(2) / h ** 2
    du = np.tensordot(w1, u, axes=1)
    ddu = np.tensordot(w2, u, axes=1)
    du_sigma = np.tensordot(w1, np.stack([gb.dbar(j * h) @ u[j] for j in range(5)]), axes=1)
    d0 = gb.dbar(0.0)
    ht = gb.h_t(0.0)
    g0t = du
    g0s = d0 @ u[0]
    # g1_t = i^-1 delta(zeta) with zeta = K u; delta zeta = d_t zeta_t + delta_S zeta_S
    # (sign of the time component fixed by Lorentzian signature: D0 = K^* K = d_t^2 + h_t)
    g1t = -1j * (ddu + ht @ u[0])
    g1s = -1j * (du_sigma - d0 @ du)
    return np.concatenate([g0t, g0s, g1t, g1s])


def intertwining_residual(gb: GaugeBackground, n_tests: int = 50, seed: int = 0) -> float:
    """Relative interior residual of (d_t^2 + a1) K u - K (d_t^2 + a0) u.

    Test sections u(t) = sum_j cos(om_j t + ph_j) v_j with random interior-mode
    vectors v_j; every time derivative is a fourth-order difference on the grid.
    """
    rng = np.random.default_rng(seed)
    n = gb.n
    mask = gb.space.interior_mask()
    full = np.concatenate([mask, mask])
    ts = gb.ts
    dt = float(ts[1] - ts[0])
    a0, a1 = a0_of(gb), a1_of(gb)
    A0 = np.stack([a0(t) for t in ts])
    A1 = np.stack([a1(t) for t in ts])
    D = np.stack([gb.dbar(t) for t in ts])
    sel = slice(4, len(ts) - 4)
    worst = 0.0
    for _ in range(n_tests):
        v = np.zeros((3, n), dtype=complex)
        v[:, mask] = rng.standard_normal((3, mask.sum())) + 1j * rng.standard_normal((3, mask.sum()))
        om = rng.uniform(0.5, 2.0, size=3)
        ph = rng.uniform(0, 2 * np.pi, size=3)
        u = np.cos(np.outer(ts, om) + ph) @ v
        K = lambda w: np.concatenate([time_derivative(w, dt), np.einsum("tij,tj->ti", D, w)], axis=1)
        Ku = K(u)
        lhs = time_derivative(time_derivative(Ku, dt), dt) + np.einsum("tij,tj->ti", A1, Ku)
        D0u = time_derivative(time_derivative(u, dt), dt) + np.einsum("tij,tj->ti", A0, u)
        rhs = K(D0u)
        r = np.linalg.norm((lhs - rhs)[sel][:, full]) / max(np.linalg.norm(lhs[sel][:, full]), 1e-300)
        worst = max(worst, float(r))
    return worst


@dataclass
class GSigmaForms:
    G0: np.ndarray
    G1: np.ndarray
    sigma: int
    residual: float


def G_sigma_forms(n: int, q1: np.ndarray | None = None) -> GSigmaForms:
    """G_iSigma matrices and the sign sigma_G with q = sigma_G i^-1 G_1Sigma."""
    I = np.eye(n, dtype=complex)
    Z = np.zeros((n, n), dtype=complex)
    G1 = -1j * np.block([[Z, Z, -I, Z], [Z, Z, Z, I], [-I, Z, Z, Z], [Z, I, Z, Z]])
    G0 = -1j * np.block([[Z, I], [I, Z]])
    if q1 is None:
        q1 = charge_form(np.concatenate([-np.ones(n), np.ones(n)]))
    best = None
    for s in (1, -1):
        r = float(np.linalg.norm(q1 - s * (-1j) * G1))
        if best is None or r < best[1]:
            best = (s, r)
    return GSigmaForms(G0, G1, best[0], best[1])
