"""
Model systems: the Hermitian part H(z) and anti-Hermitian part Gamma(z) of
the classical symbol of H - i Gamma, with analytic gradients and Hessians.

All models use phase-space coordinates z = (p_1..p_n, q_1..q_n).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import NotSeparable
from .phase_space import omega, symmetrize


def _mat2(a, b, c, d):
    """2x2 matrix field [[a, b], [c, d]] broadcast to shape (2, 2, ...)."""
    a, b, c, d = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, c, d)))
    return np.array([[a, b], [c, d]])


def _vec2(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return np.array([a, b])


class Evaluation(NamedTuple):
    H: float
    gradH: np.ndarray
    hessH: np.ndarray
    Gamma: float
    gradGamma: np.ndarray
    hessGamma: np.ndarray


class ObservablePair:
    """Base class for a pair of phase-space observables (H, Gamma).

    Subclasses implement the six evaluations and set ``n``. Built-in models
    also accept stacked points z of shape (2n, ...) and return fields of
    shape (...), (2n, ...) and (2n, 2n, ...). Models that
    split as H - i Gamma = T(p) + V(q) in one degree of freedom also
    implement :meth:`separable_parts`, which the grid propagator needs.
    """

    n: int = 1
    name: str = "custom"

    def H(self, z):
        raise NotImplementedError

    def gradH(self, z):
        raise NotImplementedError

    def hessH(self, z):
        raise NotImplementedError

    def Gamma(self, z):
        raise NotImplementedError

    def gradGamma(self, z):
        raise NotImplementedError

    def hessGamma(self, z):
        raise NotImplementedError

    def separable_parts(self) -> tuple[Callable, Callable]:
        """Return complex symbols (T(p), V(q)) with H - i Gamma = T(p) + V(q)."""
        raise NotSeparable(f"model {self.name!r} is not separable as T(p) + V(q)")

    def params(self) -> dict:
        return {}


def eval_all(model: ObservablePair, z) -> Evaluation:
    z = np.asarray(z, dtype=float)
    return Evaluation(
        float(model.H(z)),
        np.asarray(model.gradH(z), dtype=float),
        np.asarray(model.hessH(z), dtype=float),
        float(model.Gamma(z)),
        np.asarray(model.gradGamma(z), dtype=float),
        np.asarray(model.hessGamma(z), dtype=float),
    )


def omega_conjugate(hess: np.ndarray) -> np.ndarray:
    """Omega^T M Omega for a 2n x 2n matrix M."""
    m = np.asarray(hess, dtype=float)
    Om = omega(m.shape[0] // 2)
    return Om.T @ m @ Om


def gamma_omega_hess(model: ObservablePair, z) -> np.ndarray:
    """Gamma''_Omega(z) = Omega^T Gamma''(z) Omega."""
    return omega_conjugate(model.hessGamma(np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class QuadraticModel(ObservablePair):
    """H = 1/2 z.M_H z + b_H.z + c_H and likewise Gamma."""

    M_H: np.ndarray
    M_Gamma: np.ndarray
    b_H: np.ndarray = None
    b_Gamma: np.ndarray = None
    c_H: float = 0.0
    c_Gamma: float = 0.0
    name: str = "quadratic"

    def __post_init__(self):
        MH = symmetrize(np.atleast_2d(np.asarray(self.M_H, dtype=float)))
        MG = symmetrize(np.atleast_2d(np.asarray(self.M_Gamma, dtype=float)))
        if MH.shape != MG.shape or MH.shape[0] % 2:
            raise ValueError("M_H and M_Gamma must both be 2n x 2n")
        dim = MH.shape[0]
        bH = np.zeros(dim) if self.b_H is None else np.asarray(self.b_H, dtype=float).reshape(dim)
        bG = np.zeros(dim) if self.b_Gamma is None else np.asarray(self.b_Gamma, dtype=float).reshape(dim)
        for name, val in (("M_H", MH), ("M_Gamma", MG), ("b_H", bH), ("b_Gamma", bG)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "n", dim // 2)

    @classmethod
    def damped_harmonic(cls, omega_=1.0, gamma=0.2) -> "QuadraticModel":
        """H = omega/2 (p^2 + q^2), Gamma = gamma/2 (p^2 + q^2), one dof."""
        return cls(omega_ * np.eye(2), gamma * np.eye(2))

    @staticmethod
    def _value(M, b, c, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * np.einsum("i...,ij,j...->...", z, M, z) + np.tensordot(b, z, axes=1) + c

    @staticmethod
    def _grad(M, b, z):
        z = np.asarray(z, dtype=float)
        return np.tensordot(M, z, axes=1) + b.reshape(b.shape + (1,) * (z.ndim - 1))

    @staticmethod
    def _hess(M, z):
        extra = np.shape(z)[1:]
        return np.broadcast_to(M.reshape(M.shape + (1,) * len(extra)), M.shape + extra).copy()

    def H(self, z):
        return self._value(self.M_H, self.b_H, self.c_H, z)

    def gradH(self, z):
        return self._grad(self.M_H, self.b_H, z)

    def hessH(self, z):
        return self._hess(self.M_H, z)

    def Gamma(self, z):
        return self._value(self.M_Gamma, self.b_Gamma, self.c_Gamma, z)

    def gradGamma(self, z):
        return self._grad(self.M_Gamma, self.b_Gamma, z)

    def hessGamma(self, z):
        return self._hess(self.M_Gamma, z)

    def separable_parts(self):
        if self.n != 1:
            raise NotSeparable("grid propagation supports one degree of freedom only")
        if self.M_H[0, 1] != 0.0 or self.M_Gamma[0, 1] != 0.0:
            raise NotSeparable("quadratic model with p-q cross terms is not separable")
        # complex symbol S = M_H - i M_Gamma, etc.
        S = self.M_H - 1j * self.M_Gamma
        s = self.b_H - 1j * self.b_Gamma
        c = self.c_H - 1j * self.c_Gamma
        def T(p):
            return 0.5 * S[0, 0] * p**2 + s[0] * p
        def V(q):
            return 0.5 * S[1, 1] * q**2 + s[1] * q + c
        return T, V

    def params(self):
        return {
            "M_H": self.M_H.tolist(), "M_Gamma": self.M_Gamma.tolist(),
            "b_H": self.b_H.tolist(), "b_Gamma": self.b_Gamma.tolist(),
            "c_H": self.c_H, "c_Gamma": self.c_Gamma,
        }


@dataclass(frozen=True)
class AnharmonicModel(ObservablePair):
    """H = omega/2 (p^2 + q^2) + beta/4 q^4, Gamma = gamma/2 (p^2 + q^2)."""

    omega: float = 1.0
    beta: float = 0.5
    gamma: float = 0.2
    name: str = "anharmonic"
    n: int = 1

    def H(self, z):
        p, q = z
        return 0.5 * self.omega * (p * p + q * q) + 0.25 * self.beta * q**4

    def gradH(self, z):
        p, q = z
        return _vec2(self.omega * p, self.omega * q + self.beta * q**3)

    def hessH(self, z):
        q = np.asarray(z[1], dtype=float)
        return _mat2(self.omega, 0.0, 0.0, self.omega + 3.0 * self.beta * q * q)

    def Gamma(self, z):
        p, q = z
        return 0.5 * self.gamma * (p * p + q * q)

    def gradGamma(self, z):
        return self.gamma * np.asarray(z, dtype=float)

    def hessGamma(self, z):
        zero = np.zeros_like(np.asarray(z[1], dtype=float))
        return _mat2(self.gamma + zero, zero, zero, self.gamma + zero)

    def separable_parts(self):
        w = self.omega - 1j * self.gamma
        beta = self.beta
        def T(p):
            return 0.5 * w * p**2
        def V(q):
            return 0.5 * w * q**2 + 0.25 * beta * q**4
        return T, V

    def params(self):
        return {"omega": self.omega, "beta": self.beta, "gamma": self.gamma}


@dataclass(frozen=True)
class WaveguideModel(ObservablePair):
    """H = a (p^2 + q^2), Gamma = c tanh(b q).

    The defaults a = 1/2, b = 0.2, c = 5 give the PT-symmetric waveguide
    with absorption for q > 0 and equal gain for q < 0.
    """

    a: float = 0.5
    b: float = 0.2
    c: float = 5.0
    name: str = "waveguide"
    n: int = 1

    def H(self, z):
        p, q = z
        return self.a * (p * p + q * q)

    def gradH(self, z):
        return 2.0 * self.a * np.asarray(z, dtype=float)

    def hessH(self, z):
        w = 2.0 * self.a + np.zeros_like(np.asarray(z[1], dtype=float))
        return _mat2(w, 0.0, 0.0, w)

    def Gamma(self, z):
        return self.c * np.tanh(self.b * z[1])

    def gradGamma(self, z):
        sech2 = 1.0 / np.cosh(self.b * np.asarray(z[1], dtype=float)) ** 2
        return _vec2(0.0, self.c * self.b * sech2)

    def hessGamma(self, z):
        x = self.b * np.asarray(z[1], dtype=float)
        sech2 = 1.0 / np.cosh(x) ** 2
        return _mat2(0.0, 0.0, 0.0, -2.0 * self.c * self.b**2 * sech2 * np.tanh(x))

    def separable_parts(self):
        a, b, c = self.a, self.b, self.c
        def T(p):
            return a * p**2 + 0j
        def V(q):
            return a * q**2 - 1j * c * np.tanh(b * q)
        return T, V

    def params(self):
        return {"a": self.a, "b": self.b, "c": self.c}


def _fd_grad(f, z, h):
    g = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


def _fd_hess(grad, z, h):
    dim = z.size
    out = np.empty((dim, dim))
    for i in range(dim):
        e = np.zeros_like(z)
        e[i] = h
        out[:, i] = (np.asarray(grad(z + e)) - np.asarray(grad(z - e))) / (2 * h)
    return symmetrize(out)


class FiniteDifferenceModel(ObservablePair):
    """Wrap user callables H(z), Gamma(z); derivatives by central differences.

    Meant for custom models and testing, not for production runs.
    """

    name = "finite-difference"

    def __init__(self, H: Callable, Gamma: Callable, n: int = 1, h: float = 1e-5):
        self._H = H
        self._Gamma = Gamma
        self.n = n
        self.h = h

    def H(self, z):
        return float(self._H(np.asarray(z, dtype=float)))

    def Gamma(self, z):
        return float(self._Gamma(np.asarray(z, dtype=float)))

    def gradH(self, z):
        return _fd_grad(self.H, np.asarray(z, dtype=float), self.h)

    def gradGamma(self, z):
        return _fd_grad(self.Gamma, np.asarray(z, dtype=float), self.h)

    def hessH(self, z):
        return _fd_hess(self.gradH, np.asarray(z, dtype=float), self.h ** 0.5)

    def hessGamma(self, z):
        return _fd_hess(self.gradGamma, np.asarray(z, dtype=float), self.h ** 0.5)


def fd_check(model: ObservablePair, z, h: float = 1e-5) -> dict:
    """Max absolute deviation of analytic derivatives from central differences."""
    z = np.asarray(z, dtype=float)
    gH = _fd_grad(model.H, z, h)
    gG = _fd_grad(model.Gamma, z, h)
    hH = _fd_hess(model.gradH, z, h)
    hG = _fd_hess(model.gradGamma, z, h)
    return {
        "gradH_err": float(np.max(np.abs(gH - model.gradH(z)))),
        "hessH_err": float(np.max(np.abs(hH - model.hessH(z)))),
        "gradGamma_err": float(np.max(np.abs(gG - model.gradGamma(z)))),
        "hessGamma_err": float(np.max(np.abs(hG - model.hessGamma(z)))),
    }


MODELS = {
    "quadratic": QuadraticModel,
    "anharmonic": AnharmonicModel,
    "waveguide": WaveguideModel,
}
