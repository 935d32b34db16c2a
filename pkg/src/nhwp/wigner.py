"""
Wigner functions of grid wavefunctions, their phase-space moments, and the
residual of the leading-order Wigner evolution equation

    hbar dW/dt = (hbar^2/4) div(Gamma''_Omega grad W) + hbar grad H . Omega grad W - 2 Gamma W

which is exact for quadratic H and Gamma and is used as a test oracle.

Axis convention
---------------
For a position grid with N points and spacing dq, the transform

    W(q_j, p_k) = (pi hbar)^-1 sum_m psi(q_j + s_m) conj(psi(q_j - s_m)) exp(-2i p_k s_m / hbar) dq,

with s_m = m dq, m in [-N/2, N/2), is an FFT over m when

    p_k = pi hbar k / (N dq),   k in [-N/2, N/2),

i.e. the Wigner momentum spacing is dp = pi hbar / (N dq), half the FFT
momentum spacing of the grid, and the Wigner p-range is +-p_max/2.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike
from scipy.integrate import trapezoid

from .errors import DegenerateCovariance, GridMismatch
from .grid import GridWavefunction
from .models import ObservablePair

MAGIC = b"NHWP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII5dQ")


@dataclass(frozen=True)
class WignerGrid:
    """W(q_j, p_k) sampled on ascending axes; ``values[j, k]`` (rows are q)."""

    q: np.ndarray
    p: np.ndarray
    values: np.ndarray
    hbar: float = 1.0
    t: float = 0.0
    log_norm_applied: bool = True

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0])

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    @property
    def mass(self) -> float:
        return float(trapezoid(trapezoid(self.values, dx=self.dp, axis=1), dx=self.dq))

    def position_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.dp

    def momentum_marginal(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.dq

    def same_axes(self, other: "WignerGrid") -> bool:
        return (self.values.shape == other.values.shape
                and np.allclose(self.q, other.q, rtol=0, atol=1e-12)
                and np.allclose(self.p, other.p, rtol=0, atol=1e-12)
                and self.hbar == other.hbar)

    @classmethod
    def sample(cls, f, q: ArrayLike, p: ArrayLike, hbar: float = 1.0, t: float = 0.0) -> "WignerGrid":
        """Tabulate a phase-space function f(z) with z = (p, q) stacked on axis 0."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        Qm, Pm = np.meshgrid(q, p, indexing="ij")
        vals = f(np.stack([Pm, Qm], axis=-1))
        return cls(q, p, np.asarray(vals, dtype=float), hbar, t)


def wigner_p_axis(N: int, dq: float, hbar: float) -> np.ndarray:
    return np.pi * hbar / (N * dq) * np.arange(-N // 2, N // 2)


def wigner_transform(wf: GridWavefunction, wrap: bool = False) -> WignerGrid:
    """Wigner function of a grid wavefunction, physical norm factor included.

    The correlation psi(q+s) conj(psi(q-s)) is built by index shifts. With
    ``wrap=False`` (default) samples shifted off the grid are zero; with
    ``wrap=True`` they wrap periodically, which adds cross terms between the
    packet and its periodic image half a box away.
    """
    g = wf.grid
    N, dq, hbar = g.N, g.dq, g.hbar
    psi = np.asarray(wf.psi, dtype=complex)
    j = np.arange(N)[:, None]
    m = np.arange(-N // 2, N // 2)[None, :]
    plus, minus = j + m, j - m
    if wrap:
        corr = psi[plus % N] * np.conj(psi[minus % N])
    else:
        ok = (plus >= 0) & (plus < N) & (minus >= 0) & (minus < N)
        corr = np.where(ok, psi[np.clip(plus, 0, N - 1)] * np.conj(psi[np.clip(minus, 0, N - 1)]), 0.0)
        corr[:, 0] = 0.0  # m = -N/2 has no partner +N/2
    # FFT over m expects m = 0 first
    spec = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(corr, axes=1), axis=1), axes=1)
    values = spec.real * (dq / (np.pi * hbar)) * math.exp(2.0 * wf.log_norm)
    return WignerGrid(g.q.copy(), wigner_p_axis(N, dq, hbar), values, hbar, wf.t, True)


def wigner_imaginary_residue(wf: GridWavefunction) -> float:
    """max |Im W| / max |W| of the raw transform (should be round-off)."""
    g = wf.grid
    N = g.N
    psi = np.asarray(wf.psi, dtype=complex)
    j = np.arange(N)[:, None]
    m = np.arange(-N // 2, N // 2)[None, :]
    plus, minus = j + m, j - m
    ok = (plus >= 0) & (plus < N) & (minus >= 0) & (minus < N)
    corr = np.where(ok, psi[np.clip(plus, 0, N - 1)] * np.conj(psi[np.clip(minus, 0, N - 1)]), 0.0)
    corr[:, 0] = 0.0
    spec = np.fft.fft(np.fft.ifftshift(corr, axes=1), axis=1)
    return float(np.abs(spec.imag).max() / np.abs(spec).max())


# ---------------------------------------------------------------------------
# moments

@dataclass(frozen=True)
class MomentSet:
    """Mass, center Z = (P, Q), covariance Sigma and metric G = (hbar/2) Sigma^-1,
    all in (p, q) ordering."""

    mass: float
    Z: np.ndarray
    Sigma: np.ndarray
    G: np.ndarray


def metric_from_covariance(Sigma: np.ndarray, hbar: float) -> np.ndarray:
    Sigma = np.asarray(Sigma, dtype=float)
    try:
        ev = np.linalg.eigvalsh(Sigma)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariance(str(exc)) from None
    if not ev[0] > 1e-14 * max(1.0, ev[-1]):
        raise DegenerateCovariance(f"covariance not positive definite (eigenvalues {ev})")
    G = 0.5 * hbar * np.linalg.inv(Sigma)
    return 0.5 * (G + G.T)


def moments(W: WignerGrid) -> MomentSet:
    """Normalized first and central second moments by the trapezoid rule."""
    Qm, Pm = np.meshgrid(W.q, W.p, indexing="ij")

    def integral(f):
        return float(trapezoid(trapezoid(f, dx=W.dp, axis=1), dx=W.dq))

    mass = integral(W.values)
    if not abs(mass) > 1e-300:
        raise DegenerateCovariance(f"Wigner mass {mass:.3e} too small for moments")
    mp = integral(Pm * W.values) / mass
    mq = integral(Qm * W.values) / mass
    dP, dQ = Pm - mp, Qm - mq
    vpp = integral(dP * dP * W.values) / mass
    vqq = integral(dQ * dQ * W.values) / mass
    vpq = integral(dP * dQ * W.values) / mass
    Sigma = np.array([[vpp, vpq], [vpq, vqq]])
    return MomentSet(mass, np.array([mp, mq]), Sigma, metric_from_covariance(Sigma, W.hbar))


# ---------------------------------------------------------------------------
# evolution-equation residual

def _spectral_derivative(f, d, axis, order=1):
    n = f.shape[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, d=d)
    if order % 2 == 1:
        k[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    mult = ((1j * k) ** order).reshape(shape)
    return np.real(np.fft.ifft(mult * np.fft.fft(f, axis=axis), axis=axis))


def pde_terms(model: ObservablePair, W: WignerGrid) -> np.ndarray:
    """Right-hand side of hbar dW/dt for a Wigner grid."""
    hbar = W.hbar
    Qm, Pm = np.meshgrid(W.q, W.p, indexing="ij")
    z = np.array([Pm, Qm])
    w = W.values
    Wp = _spectral_derivative(w, W.dp, axis=1)
    Wq = _spectral_derivative(w, W.dq, axis=0)
    gH = np.asarray(model.gradH(z))
    # grad H . Omega grad W = -H_p W_q + H_q W_p
    transport = -gH[0] * Wq + gH[1] * Wp
    hG = np.asarray(model.hessGamma(z))
    M = np.einsum("ji,jk...,kl->il...", _OMEGA1, hG, _OMEGA1)
    # div(M grad W) with grad = (d_p, d_q)
    flux_p = M[0, 0] * Wp + M[0, 1] * Wq
    flux_q = M[1, 0] * Wp + M[1, 1] * Wq
    div = _spectral_derivative(flux_p, W.dp, axis=1) + _spectral_derivative(flux_q, W.dq, axis=0)
    Gam = np.asarray(model.Gamma(z))
    return 0.25 * hbar**2 * div + hbar * transport - 2.0 * Gam * w


_OMEGA1 = np.array([[0.0, -1.0], [1.0, 0.0]])


def pde_residual(model: ObservablePair, W_series, dt: float) -> float:
    """Relative residual of the leading-order evolution equation at the middle
    of three Wigner grids spaced dt apart.

    Returns ||hbar dW/dt - rhs||_2 / ||hbar dW/dt||_2, with L2 norms taken over
    phase-space area and dW/dt by central differences.
    """
    Wm, W0, Wn = W_series
    if not (W0.same_axes(Wm) and W0.same_axes(Wn)):
        raise GridMismatch("Wigner grids do not share axes")
    if model.n != 1:
        raise GridMismatch("Wigner grids are one degree of freedom")
    lhs = W0.hbar * (Wn.values - Wm.values) / (2.0 * dt)
    r = lhs - pde_terms(model, W0)
    area = W0.dq * W0.dp
    return float(math.sqrt(np.sum(r * r) * area) / math.sqrt(np.sum(lhs * lhs) * area))


# ---------------------------------------------------------------------------
# dumps

def wigner_dump_name(t: float, suffix: str = "bin") -> str:
    return f"wigner_t{t:.4}.{suffix}"


def write_wigner_binary(W: WignerGrid, path) -> Path:
    """Little-endian dump: magic "NHWP", u32 version, u32 Nq, u32 Np,
    f64 q_min, dq, p_min, dp, t, u64 log-norm-applied flag, then Nq x Np
    f64 values in row-major order (rows are q)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Nq, Np = W.values.shape
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, Nq, Np, float(W.q[0]), W.dq,
                        float(W.p[0]), W.dp, float(W.t), int(bool(W.log_norm_applied)))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(W.values, dtype="<f8").tobytes())
    return path


def read_wigner_binary(path, hbar: float = 1.0) -> WignerGrid:
    raw = Path(path).read_bytes()
    magic, version, Nq, Np, q0, dq, p0, dp, t, flag = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a Wigner dump (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=Nq * Np).reshape(Nq, Np)
    q = q0 + dq * np.arange(Nq)
    p = p0 + dp * np.arange(Np)
    return WignerGrid(q, p, vals.astype(float), hbar, t, bool(flag))


def write_wigner_csv(W: WignerGrid, path) -> Path:
    """CSV ``q,p,w``; one line per grid point, intended for small grids."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Qm, Pm = np.meshgrid(W.q, W.p, indexing="ij")
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack([Qm.ravel(), Pm.ravel(), W.values.ravel()]),
               delimiter=",", header="q,p,w", comments="", fmt="%.17g")
    path.write_text(buf.getvalue())
    return path
