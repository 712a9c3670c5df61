"""Compact Lie algebra kernel: structure constants, adjoint action and the
positive ad-invariant product k."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LieAlgebraBasis:
    name: str
    dim: int
    structure_constants: np.ndarray  # c[a, b, c]: [e_a, e_b] = sum_c c[a,b,c] e_c
    product: np.ndarray  # hermitian positive dim x dim matrix


def su2() -> LieAlgebraBasis:
    """su(2) in the basis with [e_a, e_b] = eps_abc e_c and k = identity."""
    c = np.zeros((3, 3, 3))
    for a, b, d in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        c[a, b, d] = 1.0
        c[b, a, d] = -1.0
    return LieAlgebraBasis("su2", 3, c, np.eye(3))


def u1() -> LieAlgebraBasis:
    """Abelian degenerate case, only meant for oracle runs."""
    return LieAlgebraBasis("u1", 1, np.zeros((1, 1, 1)), np.eye(1))


def get_algebra(name: str) -> LieAlgebraBasis:
    try:
        return {"su2": su2, "u1": u1}[name]()
    except KeyError:
        raise ValueError(f"unknown algebra {name!r}") from None


def _check(alg: LieAlgebraBasis, *xs: np.ndarray) -> None:
    for x in xs:
        if np.shape(x)[-1] != alg.dim:
            raise ValueError(f"expected algebra element of length {alg.dim}, got shape {np.shape(x)}")


def bracket(alg: LieAlgebraBasis, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    _check(alg, X, Y)
    return np.einsum("abc,...a,...b->...c", alg.structure_constants, X, Y)


def ad_matrix(alg: LieAlgebraBasis, X: np.ndarray) -> np.ndarray:
    """Matrix of Y -> [X, Y]. Broadcasts over leading axes of X."""
    _check(alg, X)
    return np.einsum("abc,...a->...cb", alg.structure_constants, X)


def killing(alg: LieAlgebraBasis, X: np.ndarray, Y: np.ndarray) -> complex:
    return np.conj(X) @ alg.product @ Y


def jacobi_residual(alg: LieAlgebraBasis) -> float:
    e = np.eye(alg.dim)
    worst = 0.0
    for x in e:
        for y in e:
            for z in e:
                r = (bracket(alg, x, bracket(alg, y, z)) + bracket(alg, y, bracket(alg, z, x))
                     + bracket(alg, z, bracket(alg, x, y)))
                worst = max(worst, float(np.max(np.abs(r))))
    return worst


def invariance_residual(alg: LieAlgebraBasis) -> float:
    """max over basis triples of |k([X,Y],Z) + k(Y,[X,Z])|."""
    e = np.eye(alg.dim)
    worst = 0.0
    for x in e:
        for y in e:
            for z in e:
                r = killing(alg, bracket(alg, x, y), z) + killing(alg, y, bracket(alg, x, z))
                worst = max(worst, abs(r))
    return worst
