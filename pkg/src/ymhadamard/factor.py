"""Approximate factorization d_t^2 + a(t) ~ (i^-1 d_t - b^-)(i^-1 d_t + ... ) via the
fixed-point generator b(t) = eps(t) + b0(t), the R-cutoff, and the parametrix
ingredients r^+-, u^+-(t)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .spectral import chi_greater, order_norm
from .waveops import WaveOperatorFamily, cauchy_space, time_derivative

log = logging.getLogger(__name__)

S_ORDERS = (0, 1, 2, 3, 4)


class CutoffError(RuntimeError):
    """A cutoff-dependent precondition failed; a larger R should cure it."""


@dataclass
class FactorizationResult:
    fam: WaveOperatorFamily
    b: np.ndarray  # b_R(t) stack
    b_pre: np.ndarray  # b(t) before the cutoff
    r_minus1: np.ndarray  # r_{-1,R}(t) stack
    k_iters: int
    R: float
    profile: str
    lambda_schedule: np.ndarray
    residual_history: np.ndarray  # (k+1, len(S_ORDERS)): max_t order_norm(r_j(t), s)
    residual_R: np.ndarray  # (len(S_ORDERS),) same for b_R
    meta: dict = field(default_factory=dict)

    @property
    def b0(self) -> np.ndarray:
        return self.b[0]


def _residual(b: np.ndarray, a: np.ndarray, dt: float) -> np.ndarray:
    """r = i d_t b - b^2 + a (d_t b vanishes on a static stack)."""
    if b.shape[0] == 1:
        return a - b @ b
    return 1j * time_derivative(b, dt) - b @ b + a


def _residual_norms(fam: WaveOperatorFamily, r: np.ndarray, stride: int) -> np.ndarray:
    sp = fam.field_space
    nodes = sorted(set(range(0, r.shape[0], stride)) | {r.shape[0] - 1})
    return np.array([max(order_norm(r[i], s, sp) for i in nodes) for s in S_ORDERS])


def _margin(k: int) -> int:
    # central stencils spread one-sided end errors by two nodes per sweep
    return 2 * k + 4


def _extended(fam: WaveOperatorFamily, m: int):
    """(a, eps) sampled on the grid padded by m nodes on both sides."""
    dt = fam.dt
    pre = [fam.ts[0] - dt * j for j in range(m, 0, -1)]
    post = [fam.ts[-1] + dt * j for j in range(1, m + 1)]
    a = np.concatenate([np.stack([fam.a_of_t(t) for t in pre]), fam.a,
                        np.stack([fam.a_of_t(t) for t in post])])
    ex = [fam.eps_of_t(t) for t in pre + post]
    eps = np.concatenate([np.stack(ex[:m]), fam.eps, np.stack(ex[m:])])
    return a, eps


def solve_b(fam: WaveOperatorFamily, k: int, history_stride: int = 1):
    """Fixed-point iteration for b0 starting from 0; returns (b, residual history).

    b0 <- (2 eps)^-1 (i d_t eps + r1 + i d_t b0 - b0^2 + [eps, b0]),  r1 = a - eps^2.
    Time-dependent families are iterated on a padded grid so that every
    returned node, t = 0 included, sees central differences.
    """
    if k < 1:
        raise ValueError("need at least one iteration")
    static = fam.eps.strides[0] == 0
    if static:
        m = 0
        e, a = fam.eps[:1], fam.a[:1]
    else:
        m = _margin(k)
        a, e = _extended(fam, m)
    inner = slice(m, m + (1 if static else len(fam.ts)))
    inv2e = 0.5 * np.linalg.inv(e)
    de = np.zeros_like(e) if static else time_derivative(e, fam.dt)
    src = 1j * de + a - e @ e
    b0 = np.zeros_like(e)
    hist = []
    steps = []
    for j in range(k + 1):
        b = e + b0
        r = _residual(b, a, fam.dt)[inner]
        hist.append(_residual_norms(fam, r, history_stride))
        if j == k:
            break
        db0 = np.zeros_like(b0) if static else time_derivative(b0, fam.dt)
        new = inv2e @ (src + 1j * db0 - b0 @ b0 + e @ b0 - b0 @ e)
        steps.append(float(np.max(np.abs(new - b0)[inner])))
        b0 = new
        if len(steps) >= 4 and steps[-1] > steps[-2] > steps[-3] > steps[-4]:
            amp = fam.meta.get("amplitude", "unknown")
            raise RuntimeError(f"fixed-point iteration diverging (steps {steps[-4:]}, amplitude {amp})")
    b = (e + b0)[inner]
    if static:
        b = np.broadcast_to(b[0], fam.eps.shape)
    return b, np.array(hist)


def apply_R_cutoff(fam: WaveOperatorFamily, b: np.ndarray, R: float, k: int, history: np.ndarray,
                   profile: str = "poly7", history_stride: int = 1) -> FactorizationResult:
    """b_R = eps^{1/2}(1 + chi r chi) eps^{1/2} with chi = chi_>(eps / (R lambda)).

    lambda(t) is the smallest power of two with ||r_{-1,R}(t)|| <= 1/2 and
    R lambda >= sqrt(C), so the cutoff removes Ker h at every node.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    static = b.strides[0] == 0
    nodes = range(1) if static else range(b.shape[0])
    floor = np.sqrt(fam.C)
    out_b, out_r, lams = [], [], []
    for i in nodes:
        e = fam.eps[i]
        w, V = np.linalg.eigh((e + e.conj().T) / 2)
        eh = (V * np.sqrt(w)) @ V.conj().T
        emh = (V / np.sqrt(w)) @ V.conj().T
        r = emh @ b[i] @ emh - np.eye(len(w))
        lam = 1.0
        while R * lam < floor * (1 - 1e-12):
            lam *= 2
        while True:
            chi = (V * chi_greater(w / (R * lam), profile)) @ V.conj().T
            rR = chi @ r @ chi
            # the Frobenius norm bounds the operator norm; skip the SVD when it suffices
            if np.linalg.norm(rR) <= 0.5 or np.linalg.norm(rR, 2) <= 0.5:
                break
            lam *= 2
        out_r.append(rR)
        out_b.append(eh @ (np.eye(len(w)) + rR) @ eh)
        lams.append(lam)
    bR = np.stack(out_b)
    rR = np.stack(out_r)
    if static:
        bR = np.broadcast_to(bR[0], b.shape)
        rR = np.broadcast_to(rR[0], b.shape)
        lams = lams * len(fam.ts)
    a = fam.a[:1] if static else fam.a
    resR = _residual_norms(fam, _residual(bR[:1] if static else bR, a, fam.dt), history_stride)
    return FactorizationResult(fam, bR, b, rR, k, R, profile, np.array(lams), history, resR)


def factorize(fam: WaveOperatorFamily, k: int, R: float, profile: str = "poly7",
              history_stride: int = 1) -> FactorizationResult:
    b, hist = solve_b(fam, k, history_stride)
    return apply_R_cutoff(fam, b, R, k, hist, profile, history_stride)


def b_minus(b: np.ndarray, J: np.ndarray) -> np.ndarray:
    """b^- = -J b^* J."""
    return -(J[:, None] * b.conj().T * J[None, :])


@dataclass
class RPM:
    r0p: np.ndarray
    r1p: np.ndarray
    r0m: np.ndarray
    r1m: np.ndarray

    @property
    def plus(self) -> np.ndarray:
        return np.hstack([self.r0p, self.r1p])

    @property
    def minus(self) -> np.ndarray:
        return np.hstack([self.r0m, self.r1m])


def r_pm(res: FactorizationResult) -> RPM:
    """r^{0+-} = -+(b^+ - b^-)^-1 b^-+,  r^{1+-} = +-(b^+ - b^-)^-1 at t = 0."""
    bp = np.array(res.b[0])
    bm = b_minus(bp, res.fam.J)
    D = bp - bm
    s = np.linalg.svd(D, compute_uv=False)
    if s[-1] < 1e-12 * s[0]:
        raise CutoffError("b^+ - b^- is singular; cutoff misconfigured")
    Di = np.linalg.inv(D)
    return RPM(-Di @ bm, Di, Di @ bp, -Di)


def _lagrange4(stack: np.ndarray, ts: np.ndarray, t: float) -> np.ndarray:
    if stack.strides[0] == 0:
        return stack[0]
    dt = ts[1] - ts[0]
    i = int(np.clip(np.floor(t / dt) - 1, 0, len(ts) - 4))
    xs = ts[i:i + 4]
    out = np.zeros(stack.shape[1:], dtype=complex)
    for j in range(4):
        wj = np.prod([(t - xs[k]) / (xs[j] - xs[k]) for k in range(4) if k != j])
        out = out + wj * stack[i + j]
    return out


def propagate(bstack: np.ndarray, ts: np.ndarray, upto: int, every: bool = False):
    """Time-ordered exponential of i b(t): fourth-order Magnus with Gauss points."""
    m = bstack.shape[-1]
    U = np.eye(m, dtype=complex)
    out = [U] if every else None
    g = np.sqrt(3) / 6
    if bstack.strides[0] == 0 and not every:
        return expm(1j * ts[upto] * bstack[0])
    for i in range(upto):
        t0, h = ts[i], ts[i + 1] - ts[i]
        A1 = 1j * _lagrange4(bstack, ts, t0 + (0.5 - g) * h)
        A2 = 1j * _lagrange4(bstack, ts, t0 + (0.5 + g) * h)
        Om = h / 2 * (A1 + A2) + np.sqrt(3) / 12 * h ** 2 * (A2 @ A1 - A1 @ A2)
        U = expm(Om) @ U
        if every:
            out.append(U)
    return np.stack(out) if every else U


def u_pm(res: FactorizationResult, t_index: int):
    """(u^+(t), u^-(t)) with u^+- = Texp(i int_0^t b^+-)."""
    bp = res.b
    J = res.fam.J
    if bp.strides[0] == 0:
        bm = np.broadcast_to(b_minus(np.array(bp[0]), J), bp.shape)
    else:
        bm = np.stack([b_minus(x, J) for x in bp])
    return propagate(bp, res.fam.ts, t_index), propagate(bm, res.fam.ts, t_index)


def parametrix_residual(res: FactorizationResult, t_index: int, U: np.ndarray, s: float = 2) -> float:
    """order_norm of the first component of U(t) - u^+ r^+ - u^- r^-."""
    r = r_pm(res)
    up, um = u_pm(res, t_index)
    m = res.fam.m
    diff = U[:m] - up @ r.plus - um @ r.minus
    return order_norm(diff, s, res.fam.field_space, cauchy_space(res.fam.field_space))


def residual_gain(history: np.ndarray, s_index: int = 0) -> np.ndarray:
    """Ratios r_j / r_{j+1} of successive residual norms."""
    h = history[:, s_index]
    return h[:-1] / np.maximum(h[1:], 1e-300)


def invertibility_margin(res: FactorizationResult) -> float:
    """sigma_min(b_R(0) + J b_R(0)^* J) / min spec(2 eps(0))."""
    b = np.array(res.b[0])
    s = np.linalg.svd(b - b_minus(b, res.fam.J), compute_uv=False)[-1]
    return float(s / (2 * np.linalg.eigvalsh(np.array(res.fam.eps[0]))[0]))


def frequency_sign_mass(fam: WaveOperatorFamily, proj: np.ndarray, sign: int, n_samples: int = 4096,
                        seed: int = 0) -> np.ndarray:
    """Per interior Fourier mode, fraction of time-spectral mass of f0(t) at frequencies of ``sign``.

    Static families only: data proj @ g for random g are evolved by the exact
    one-step propagator over a long Hann-windowed record.
    """
    if fam.a.strides[0] != 0:
        raise ValueError("frequency-sign proxy needs a static family")
    m = fam.m
    a = np.array(fam.a[0])
    wmax = float(np.sqrt(max(np.linalg.eigvalsh((a + a.conj().T) / 2)[-1], 1.0)))
    h = np.pi / (4 * wmax)
    G = np.block([[np.zeros((m, m)), np.eye(m)], [a, np.zeros((m, m))]])
    Ustep = expm(1j * h * G)
    rng = np.random.default_rng(seed)
    y = proj @ (rng.standard_normal(2 * m) + 1j * rng.standard_normal(2 * m))
    series = np.empty((n_samples, m), dtype=complex)
    for j in range(n_samples):
        series[j] = y[:m]
        y = Ustep @ y
    spec = np.abs(np.fft.fft(series * np.hanning(n_samples)[:, None], axis=0)) ** 2
    freqs = np.fft.fftfreq(n_samples, d=h)
    pos = spec[freqs > 0].sum(axis=0)
    neg = spec[freqs < 0].sum(axis=0)
    sp = fam.field_space
    modes = sp.mode_of_index()
    out = []
    for n in range(-(sp.N - sp.M), sp.N - sp.M + 1):
        sel = modes == n
        p, q = pos[sel].sum(), neg[sel].sum()
        out.append((p if sign > 0 else q) / max(p + q, 1e-300))
    return np.array(out)
