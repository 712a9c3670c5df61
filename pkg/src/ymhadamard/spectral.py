"""Truncated Fourier operator algebra on the circle.

Basis vectors are e^{inx} (x) e_a with n in {-N..N}.  A space made of several
fiber blocks (e.g. W_t and W_Sigma, or the slots of Cauchy data) is laid out
block-major: every block occupies a contiguous range, ordered by mode and then
by fiber component.  The flat L^2 product is the identity Gram matrix in this
basis (Fourier modes are orthonormal after normalizing dx / 2pi).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

DEGENERACY_TOL = 1e-12
HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class ModeSpace:
    N: int
    M: int
    blocks: tuple[tuple[str, int], ...] = (("g", 3),)

    def __post_init__(self):
        if self.N < 4:
            raise ValueError("mode cutoff N must be >= 4")
        if not 1 <= self.M < self.N:
            raise ValueError("interior buffer must satisfy 1 <= M < N")
        labels = [b[0] for b in self.blocks]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate block labels")

    @property
    def n_modes(self) -> int:
        return 2 * self.N + 1

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    @property
    def dim(self) -> int:
        return self.n_modes * sum(d for _, d in self.blocks)

    def block_dim(self, label: str) -> int:
        return self.n_modes * self._fiber(label)

    def _fiber(self, label: str) -> int:
        for name, d in self.blocks:
            if name == label:
                return d
        raise KeyError(f"unknown block label {label!r}")

    def block_slice(self, label: str) -> slice:
        start = 0
        for name, d in self.blocks:
            if name == label:
                return slice(start, start + self.n_modes * d)
            start += self.n_modes * d
        raise KeyError(f"unknown block label {label!r}")

    def mode_of_index(self) -> np.ndarray:
        """Fourier mode n carried by every basis index."""
        return np.concatenate([np.repeat(self.modes, d) for _, d in self.blocks])

    def interior_mask(self) -> np.ndarray:
        return np.abs(self.mode_of_index()) <= self.N - self.M

    def with_blocks(self, blocks: Sequence[tuple[str, int]]) -> "ModeSpace":
        return ModeSpace(self.N, self.M, tuple(blocks))

    def to_json(self) -> dict:
        return {"N": self.N, "M": self.M, "blocks": [list(b) for b in self.blocks]}


@dataclass
class SpectralOperator:
    """Dense matrix between two mode spaces."""

    matrix: np.ndarray
    domain: ModeSpace
    codomain: ModeSpace
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix.shape != (self.codomain.dim, self.domain.dim):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match "
                f"({self.codomain.dim}, {self.domain.dim})")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("non-finite operator entries")


@dataclass(frozen=True)
class InnerProduct:
    """Fiber weight extended diagonally over modes."""

    weight: np.ndarray

    def gram(self, n_modes: int) -> np.ndarray:
        return np.kron(np.eye(n_modes), self.weight)


def flat_product(dim: int = 3) -> InnerProduct:
    return InnerProduct(np.eye(dim))


def derivative_op(space: ModeSpace, block: str | None = None) -> np.ndarray:
    """d/dx on one fiber block: diag(i n) over modes, identity on the fiber."""
    label = space.blocks[0][0] if block is None else block
    d = space._fiber(label)
    return np.diag(np.repeat(1j * space.modes, d)).astype(complex)


def multiplication_op(space: ModeSpace, coeffs: np.ndarray, allow_wide: bool = False) -> np.ndarray:
    """Galerkin matrix of multiplication by a fiber-matrix valued function.

    ``coeffs`` has shape (2L+1, d, d) holding f_m for m = -L..L.  The (n, k)
    block of the result is f_{n-k}.  Band limits above M are rejected unless
    ``allow_wide`` is set.
    """
    coeffs = np.asarray(coeffs)
    if coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2] or coeffs.shape[0] % 2 != 1:
        raise ValueError("coefficients must have shape (2L+1, d, d)")
    L = coeffs.shape[0] // 2
    if L > space.M and not allow_wide:
        raise ValueError(f"band limit {L} exceeds interior buffer M={space.M}")
    d = coeffs.shape[1]
    nm = space.n_modes
    out = np.zeros((nm, d, nm, d), dtype=complex)
    idx = np.arange(nm)
    for m in range(-min(L, 2 * space.N), min(L, 2 * space.N) + 1):
        rows = idx[(idx - m >= 0) & (idx - m < nm)]
        out[rows, :, rows - m, :] = coeffs[m + L]
    return out.reshape(nm * d, nm * d)


def adjoint(A: np.ndarray, ip_in: InnerProduct | None = None, ip_out: InnerProduct | None = None) -> np.ndarray:
    """Adjoint with (A u | v)_out = (u | A^* v)_in."""
    AH = A.conj().T
    if ip_in is None and ip_out is None:
        return AH
    n_in, n_out = A.shape[1], A.shape[0]
    G_in = np.eye(n_in) if ip_in is None else ip_in.gram(n_in // ip_in.weight.shape[0])
    G_out = np.eye(n_out) if ip_out is None else ip_out.gram(n_out // ip_out.weight.shape[0])
    return np.linalg.solve(G_in, AH @ G_out)


def hermitian_residual(A: np.ndarray) -> float:
    """||A - A^*|| / ||A|| in the Frobenius norm."""
    scale = max(np.linalg.norm(A), 1e-300)
    return float(np.linalg.norm(A - A.conj().T) / scale)


def _cluster_means(w: np.ndarray) -> np.ndarray:
    out = w.copy()
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > DEGENERACY_TOL * max(1.0, abs(w[i])):
            if i - start > 1:
                out[start:i] = w[start:i].mean()
            start = i
    return out


def funcalc(A: np.ndarray, f: Callable[[np.ndarray], np.ndarray], gram: np.ndarray | None = None,
            check: bool = True) -> np.ndarray:
    """f(A) for A hermitian w.r.t. ``gram`` (identity by default).

    Stacks of matrices (shape (..., n, n)) are handled node by node.
    """
    A = np.asarray(A)
    if A.ndim > 2:
        return np.stack([funcalc(a, f, gram, check) for a in A])
    if gram is not None:
        Lc = np.linalg.cholesky(gram)
        B = Lc.conj().T @ A @ np.linalg.inv(Lc.conj().T)
        return np.linalg.solve(Lc.conj().T, funcalc(B, f, None, check) @ Lc.conj().T)
    if check:
        res = hermitian_residual(A)
        if res > HERMITIAN_TOL:
            raise ValueError(f"funcalc needs a hermitian argument (residual {res:.2e})")
    w, V = np.linalg.eigh((A + A.conj().T) / 2)
    fw = np.asarray(f(_cluster_means(w)))
    return (V * fw) @ V.conj().T


def pinv_op(A: np.ndarray, tol: float) -> np.ndarray:
    """Pseudo-inverse x -> x^{-1} 1_{|x| > tol} through funcalc."""
    return funcalc(A, lambda w: np.where(np.abs(w) > tol, 1.0 / np.where(np.abs(w) > tol, w, 1.0), 0.0))


def order_norm(A: np.ndarray, s: float, row_space: ModeSpace, col_space: ModeSpace | None = None) -> float:
    """||E^s P_int A P_int E^s||_2 with E = diag((1+n^2)^{1/2})."""
    if s < 0:
        raise ValueError("order_norm needs s >= 0")
    col_space = row_space if col_space is None else col_space
    rm, cm = row_space.interior_mask(), col_space.interior_mask()
    wr = (1.0 + row_space.mode_of_index()[rm] ** 2) ** (s / 2)
    wc = (1.0 + col_space.mode_of_index()[cm] ** 2) ** (s / 2)
    sub = A[np.ix_(rm, cm)] * wr[:, None] * wc[None, :]
    if sub.size == 0:
        return 0.0
    return float(np.linalg.norm(sub, 2))


def interior_block(A: np.ndarray, row_space: ModeSpace, col_space: ModeSpace | None = None) -> np.ndarray:
    col_space = row_space if col_space is None else col_space
    return A[np.ix_(row_space.interior_mask(), col_space.interior_mask())]


def kernel_basis(A: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal columns spanning singular directions with s < tol * ||A||."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    _, s, Vh = np.linalg.svd(A)
    scale = s[0] if s.size and s[0] > 0 else 1.0
    full = np.zeros(A.shape[1])
    full[: s.size] = s
    keep = full < tol * scale
    return Vh.conj().T[:, keep]


def range_basis(A: np.ndarray, tol: float) -> np.ndarray:
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    scale = s[0] if s.size and s[0] > 0 else 1.0
    return U[:, s >= tol * scale]


def _smoothstep(y: np.ndarray, profile: str) -> np.ndarray:
    y = np.clip(y, 0.0, 1.0)
    if profile == "poly7":
        return y ** 4 * (35 - 84 * y + 70 * y ** 2 - 20 * y ** 3)
    if profile == "poly5":
        return y ** 3 * (10 - 15 * y + 6 * y ** 2)
    raise ValueError(f"unknown cutoff profile {profile!r}")


def chi_less(x: np.ndarray, profile: str = "poly7") -> np.ndarray:
    """1 on [-1,1], 0 outside [-2,2]."""
    return 1.0 - _smoothstep(np.abs(np.asarray(x, dtype=float)) - 1.0, profile)


def chi_greater(x: np.ndarray, profile: str = "poly7") -> np.ndarray:
    """0 on [-1,1], 1 outside [-2,2]; chi_less + chi_greater = 1."""
    return _smoothstep(np.abs(np.asarray(x, dtype=float)) - 1.0, profile)


def export_operator(path: str | Path, op: SpectralOperator, drop_below: float = 0.0) -> None:
    """Write ``path``.csv with (row, col, re, im) triples and ``path``.json header."""
    path = Path(path)
    M = op.matrix
    rows, cols = np.nonzero(np.abs(M) > drop_below)
    with open(path.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for r, c in zip(rows, cols):
            w.writerow([int(r), int(c), repr(float(M[r, c].real)), repr(float(M[r, c].imag))])
    header = {"shape": list(M.shape), "domain": op.domain.to_json(),
              "codomain": op.codomain.to_json(), "meta": op.meta, "entries": int(rows.size)}
    path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))


def import_operator(path: str | Path) -> SpectralOperator:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    M = np.zeros(tuple(header["shape"]), dtype=complex)
    with open(path.with_suffix(".csv"), newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for r, c, re, im in reader:
            M[int(r), int(c)] = complex(float(re), float(im))

    def space(d):
        return ModeSpace(d["N"], d["M"], tuple((b[0], int(b[1])) for b in d["blocks"]))
    return SpectralOperator(M, space(header["domain"]), space(header["codomain"]), header.get("meta", {}))
