"""
Phase-space linear algebra for Gaussian wave packets.

Coordinates are ordered z = (p, q) everywhere, so that for n degrees of
freedom the symplectic form is

    Omega = [[0, -I],
             [I,  0]]

and a 2n x 2n matrix is split into blocks [[G_pp, G_pq], [G_qp, G_qq]].
The Gaussian Wigner function of a packet is

    W(z) = alpha (pi hbar)^(-n) exp(-(z - Z) . G (z - Z) / hbar)

with covariance Sigma = (hbar / 2) G^-1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateMetric, InvalidShapeMatrix, NotSymplectic

# diagnostic threshold for ||G Omega G - Omega||_F
TAU_SYMP = 1e-8
# G inversions refuse matrices worse conditioned than this
MAX_CONDITION = 1e12


@lru_cache(maxsize=None)
def _omega(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be a positive integer")
    eye = np.eye(n)
    zero = np.zeros((n, n))
    om = np.block([[zero, -eye], [eye, zero]])
    om.setflags(write=False)
    return om


def omega(n: int) -> np.ndarray:
    """Symplectic form for n degrees of freedom in (p, q) ordering (read-only)."""
    return _omega(int(n))


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def dof(matrix: np.ndarray) -> int:
    """Degrees of freedom of a 2n x 2n phase-space matrix."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
        raise ValueError(f"expected a 2n x 2n matrix, got shape {m.shape}")
    return m.shape[0] // 2


def _as_matrix(a, n=None) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a))
    if n is not None and m.shape != (n, n):
        raise ValueError(f"expected {n}x{n} matrix, got {m.shape}")
    return m


def _spectrum(G):
    if not np.all(np.isfinite(G)):
        raise DegenerateMetric("metric contains non-finite entries")
    ev, V = np.linalg.eigh(G)
    if ev[0] <= 0.0:
        raise DegenerateMetric(f"metric not positive definite (min eigenvalue {ev[0]:.3e})")
    if ev[-1] > MAX_CONDITION * ev[0]:
        raise DegenerateMetric(f"metric condition number {ev[-1] / ev[0]:.3e} exceeds {MAX_CONDITION:.0e}")
    return ev, V


def check_metric(G: np.ndarray) -> np.ndarray:
    """Eigenvalues of G (ascending); raises DegenerateMetric if G is not
    positive definite or is conditioned worse than MAX_CONDITION."""
    return _spectrum(G)[0]


def metric_inverse(G: np.ndarray) -> np.ndarray:
    """G^-1 from the symmetric eigendecomposition, with the same guards
    as :func:`check_metric`."""
    ev, V = _spectrum(G)
    return (V / ev) @ V.T


def symplectic_residual(G: np.ndarray) -> float:
    """Frobenius norm of G Omega G - Omega."""
    G = np.asarray(G, dtype=float)
    Om = omega(dof(G))
    return float(np.linalg.norm(G @ Om @ G - Om))


def random_shape_matrix(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random complex symmetric B with positive definite imaginary part."""
    X = rng.normal(size=(n, n)) * scale
    A = rng.normal(size=(n, n)) * scale
    im = A @ A.T + 0.1 * np.eye(n)
    return symmetrize(X) + 1j * im


def b_to_g(B) -> np.ndarray:
    """Metric G = L D L^T with L = [[I, 0], [-Re B, I]] and
    D = diag((Im B)^-1, Im B)."""
    B = _as_matrix(np.asarray(B, dtype=complex))
    n = B.shape[0]
    if B.shape != (n, n):
        raise InvalidShapeMatrix(f"B must be square, got {B.shape}")
    if not np.all(np.isfinite(B)):
        raise InvalidShapeMatrix("B contains non-finite entries")
    if np.max(np.abs(B - B.T)) > 1e-12 * max(1.0, np.max(np.abs(B))):
        raise InvalidShapeMatrix("B must be symmetric")
    re = symmetrize(B.real)
    im = symmetrize(B.imag)
    try:
        c = np.linalg.cholesky(im)
    except np.linalg.LinAlgError:
        raise InvalidShapeMatrix("Im B must be positive definite") from None
    cinv = np.linalg.solve(c, np.eye(n))
    im_inv = cinv.T @ cinv

    eye = np.eye(n)
    zero = np.zeros((n, n))
    L = np.block([[eye, zero], [-re, eye]])
    D = np.block([[im_inv, zero], [zero, im]])
    return symmetrize(L @ D @ L.T)


def g_to_b(G, tol: float = TAU_SYMP) -> np.ndarray:
    """Inverse of :func:`b_to_g`: Im B = G_pp^-1, Re B = -G_pp^-1 G_pq."""
    G = symmetrize(np.asarray(G, dtype=float))
    n = dof(G)
    Gpp = G[:n, :n]
    Gpq = G[:n, n:]
    try:
        check_metric(Gpp)
    except DegenerateMetric as exc:
        raise DegenerateMetric(f"G_pp block is degenerate: {exc}") from None
    res = symplectic_residual(G)
    if res > tol * max(1.0, np.linalg.norm(G)):
        raise NotSymplectic(f"symplectic residual {res:.3e} exceeds tolerance {tol:.1e}")
    im = symmetrize(np.linalg.inv(Gpp))
    re = symmetrize(-im @ Gpq)
    return re + 1j * im


def complex_structure(G) -> np.ndarray:
    """Compatible complex structure J = -Omega G, so that Omega J = G."""
    G = np.asarray(G, dtype=float)
    return -omega(dof(G)) @ G


@dataclass(frozen=True)
class GaussianWignerState:
    """Gaussian Wigner function with center Z = (P, Q), metric G and mass alpha."""

    Z: np.ndarray
    G: np.ndarray
    alpha: float = 1.0
    hbar: float = 1.0
    n: int = field(init=False)

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float).reshape(-1)
        G = symmetrize(np.array(self.G, dtype=float))
        n = dof(G)
        if Z.shape != (2 * n,):
            raise ValueError(f"Z has length {Z.size}, expected {2 * n}")
        if not np.all(np.isfinite(Z)):
            raise ValueError("Z must be finite")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        check_metric(G)
        Z.setflags(write=False)
        G.setflags(write=False)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "n", n)

    @classmethod
    def from_shape(cls, P, Q, B, alpha=1.0, hbar=1.0) -> "GaussianWignerState":
        Z = np.concatenate([np.atleast_1d(P), np.atleast_1d(Q)]).astype(float)
        return cls(Z, b_to_g(B), alpha, hbar)

    @property
    def P(self) -> np.ndarray:
        return self.Z[: self.n]

    @property
    def Q(self) -> np.ndarray:
        return self.Z[self.n:]

    @property
    def covariance(self) -> np.ndarray:
        return 0.5 * self.hbar * metric_inverse(self.G)


def wigner_eval(state: GaussianWignerState, z) -> np.ndarray:
    """Evaluate the Gaussian Wigner function.

    ``z`` may be a single point of shape (2n,) or a stack (..., 2n).
    """
    z = np.asarray(z, dtype=float)
    dz = z - state.Z
    quad = np.einsum("...i,ij,...j->...", dz, state.G, dz)
    return state.alpha * (np.pi * state.hbar) ** (-state.n) * np.exp(-quad / state.hbar)


def expectation(state: GaussianWignerState, A: Callable[[np.ndarray], float]) -> float:
    """Leading-order expectation value <A> = A(Z)."""
    return float(A(state.Z))


def _fd_gradient(f, z, h=1e-6):
    z = np.asarray(z, dtype=float)
    g = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h * (1.0 + abs(z[i]))
        g[i] = (f(z + e) - f(z - e)) / (2 * e[i])
    return g


def variance(
    state: GaussianWignerState,
    A: Callable[[np.ndarray], float],
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> float:
    """Leading-order variance (hbar/2) grad A . G^-1 grad A at Z.

    Without an analytic ``gradient`` a central difference is used.
    """
    grad = gradient(state.Z) if gradient is not None else _fd_gradient(A, state.Z)
    grad = np.asarray(grad, dtype=float)
    Ginv = metric_inverse(state.G)
    return max(0.0, float(0.5 * state.hbar * grad @ Ginv @ grad))
