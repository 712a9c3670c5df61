"""Background Yang-Mills solutions in temporal gauge on R x S^1.

Fields are stored as Fourier coefficient arrays of shape (2L+1, dim g) for
m = -L..L in the real basis of g.  On the circle the curvature F_Sigma
vanishes, so the evolution is A(t) = A(0) + t F_t(0) with F_t constant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .liealg import LieAlgebraBasis, ad_matrix
from .spectral import ModeSpace, derivative_op, kernel_basis, multiplication_op

log = logging.getLogger(__name__)

KERNEL_TOL = 1e-9
CONSTRAINT_FLOOR = 1e-14


@dataclass(frozen=True)
class BackgroundState:
    t: float
    A_sigma: np.ndarray
    F_t: np.ndarray
    F_sigma: np.ndarray
    N_A: int
    static: bool = False

    @property
    def band(self) -> int:
        return max(self.A_sigma.shape[0], self.F_t.shape[0]) // 2


@dataclass(frozen=True)
class BackgroundFamily:
    ts: np.ndarray
    states: tuple[BackgroundState, ...]
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def dt(self) -> float:
        return float(self.ts[1] - self.ts[0])

    @property
    def T(self) -> float:
        return float(self.ts[-1])


def pad(coeffs: np.ndarray, L: int) -> np.ndarray:
    cur = coeffs.shape[0] // 2
    if cur > L:
        if np.any(coeffs[: cur - L]) or np.any(coeffs[cur + L + 1:]):
            raise ValueError("truncation would drop nonzero coefficients")
        return coeffs[cur - L: cur + L + 1].copy()
    out = np.zeros((2 * L + 1,) + coeffs.shape[1:], dtype=complex)
    out[L - cur: L + cur + 1] = coeffs
    return out


def realify(coeffs: np.ndarray) -> np.ndarray:
    """Enforce f_{-m} = conj(f_m)."""
    return (coeffs + np.conj(coeffs[::-1])) / 2


def field_vector(coeffs: np.ndarray, N: int) -> np.ndarray:
    """Coefficients as a vector of the single-block mode space of cutoff N."""
    return pad(coeffs, N).reshape(-1)


def field_coeffs(vec: np.ndarray, N: int, dim: int) -> np.ndarray:
    return np.asarray(vec).reshape(2 * N + 1, dim)


def ad_coeffs(alg: LieAlgebraBasis, coeffs: np.ndarray) -> np.ndarray:
    return ad_matrix(alg, coeffs)


def dbar_matrix(space: ModeSpace, alg: LieAlgebraBasis, A_sigma: np.ndarray) -> np.ndarray:
    """Covariant derivative d + ad_A as a Galerkin matrix from 0-forms to 1-forms."""
    return derivative_op(space) + multiplication_op(space, ad_coeffs(alg, A_sigma), allow_wide=True)


def random_field(rng: np.random.Generator, dim: int, L: int, amplitude: float) -> np.ndarray:
    c = np.zeros((2 * L + 1, dim), dtype=complex)
    c[L] = rng.standard_normal(dim)
    for m in range(1, L + 1):
        z = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) / np.sqrt(2)
        c[L + m] = z
        c[L - m] = np.conj(z)
    norm = np.sqrt(np.sum(np.abs(c) ** 2))
    return c * (amplitude / norm) if norm > 0 else c


def make_cauchy_data(seed: int, N_A: int, amplitude: float, space: ModeSpace, alg: LieAlgebraBasis,
                     e_amplitude: float | None = None, connection: bool = True) -> BackgroundState:
    """Random real connection plus an electric field projected onto Ker delta_Sigma(0).

    ``e_amplitude`` defaults to ``amplitude``; ``connection=False`` keeps A = 0
    (flat connection) while still drawing an electric field.
    """
    if N_A > space.M:
        raise ValueError(f"band limit N_A={N_A} exceeds interior buffer M={space.M}")
    rng = np.random.default_rng(seed)
    e_amp = amplitude if e_amplitude is None else e_amplitude
    A = random_field(rng, alg.dim, N_A, amplitude if connection else 0.0)
    w = random_field(rng, alg.dim, N_A, e_amp)
    # The kernel vector is not band limited; resolve it on a doubled lattice so
    # that every shift used by the Galerkin matrices on the working lattice is accurate.
    big = wide_space(space)
    static = False
    if e_amp == 0:
        E = np.zeros((2 * big.N + 1, alg.dim), dtype=complex)
        static = True
    else:
        dbar = dbar_matrix(big, alg, A)
        delta = dbar.conj().T
        ker = kernel_basis(delta, KERNEL_TOL)
        if ker.shape[1] == 0:
            log.warning("Ker delta_Sigma(0) on 1-forms is empty; using a static background")
            E = np.zeros((2 * big.N + 1, alg.dim), dtype=complex)
            static = True
        else:
            wv = field_vector(w, big.N)
            E = realify(field_coeffs(ker @ (ker.conj().T @ wv), big.N, alg.dim))
            E *= e_amp / np.linalg.norm(E)
    F_sigma = np.zeros_like(E)
    return BackgroundState(0.0, A, E, F_sigma, N_A, static)


def wide_space(space: ModeSpace) -> ModeSpace:
    return ModeSpace(2 * space.N, space.M, space.blocks)


def constraint_residual(state: BackgroundState, space: ModeSpace, alg: LieAlgebraBasis) -> float:
    """||delta_Sigma(t) F_t|| / max(||F_t||, floor), evaluated on the field's own lattice."""
    big = ModeSpace(max(space.N, state.band), space.M, space.blocks)
    dbar = dbar_matrix(big, alg, state.A_sigma)
    E = field_vector(state.F_t, big.N)
    nE = np.linalg.norm(E)
    return float(np.linalg.norm(dbar.conj().T @ E) / max(nE, CONSTRAINT_FLOOR))


def corrupt(state: BackgroundState, space: ModeSpace, alg: LieAlgebraBasis, seed: int = 1,
            weight: float = 1.0) -> BackgroundState:
    """Negative control: add a gradient-direction component d_Sigma phi to F_t."""
    rng = np.random.default_rng(seed)
    phi = random_field(rng, alg.dim, state.N_A, 1.0)
    big = ModeSpace(max(space.N, state.band), space.M, space.blocks)
    dbar = dbar_matrix(big, alg, state.A_sigma)
    g = field_coeffs(dbar @ field_vector(phi, big.N), big.N, alg.dim)
    scale = max(np.linalg.norm(state.F_t), 1e-3) / max(np.linalg.norm(g), 1e-300)
    return replace(state, F_t=realify(pad(state.F_t, big.N) + weight * scale * g))


def _rhs(A: np.ndarray, E: np.ndarray):
    # d = 1: F_Sigma vanishes identically, so dE/dt = -delta F_Sigma = 0.
    return E, np.zeros_like(E)


def evolve_background(init: BackgroundState, T: float, K: int, space: ModeSpace, alg: LieAlgebraBasis,
                      constraint_tol: float = 1e-8) -> BackgroundFamily:
    """Classical RK4 on (A, F_t) with the constraint monitored at every node."""
    if K < 1:
        raise ValueError("need at least one time step")
    L = max(2 * space.N, init.band)
    A = pad(init.A_sigma, L)
    E = pad(init.F_t, L)
    ts = np.linspace(0.0, T, K + 1)
    dt = T / K
    states, res = [], []
    for i, t in enumerate(ts):
        if i > 0:
            k1 = _rhs(A, E)
            k2 = _rhs(A + dt / 2 * k1[0], E + dt / 2 * k1[1])
            k3 = _rhs(A + dt / 2 * k2[0], E + dt / 2 * k2[1])
            k4 = _rhs(A + dt * k3[0], E + dt * k3[1])
            A = A + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            E = E + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        st = BackgroundState(float(t), A.copy(), E.copy(), np.zeros_like(E), init.N_A, init.static)
        r = 0.0 if init.static else constraint_residual(st, space, alg)
        if r > constraint_tol:
            raise RuntimeError(f"constraint residual {r:.3e} exceeds {constraint_tol:.1e} at t={t:.6f}")
        states.append(st)
        res.append(r)
    return BackgroundFamily(ts, tuple(states), np.array(res))


def reverse(state: BackgroundState) -> BackgroundState:
    return replace(state, F_t=-state.F_t, t=0.0)
