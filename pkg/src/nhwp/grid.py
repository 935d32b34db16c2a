"""
Exact reference propagation on a uniform 1-D position grid.

Integrates i hbar d/dt psi = (T(p) + V(q)) psi, where T and V are the
complex kinetic and potential symbols of H - i Gamma, with Strang split-step
Fourier stepping. After every step the amplitudes are rescaled to unit
discrete norm and the logarithm of the removed factor is accumulated in
``log_norm``; the physical norm is exp(log_norm) * ||psi||.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import AliasingDetected, MomentumAliasing, NHWPError, NonFinite, PacketOutsideGrid
from .models import ObservablePair

# fraction of the grid, on each side, treated as the edge band
EDGE_FRACTION = 1 / 32
EDGE_TOLERANCE = 1e-8


@dataclass(frozen=True)
class Grid1D:
    """Periodic grid q_j = q_min + j dq, j = 0..N-1, dq = (q_max - q_min)/N.

    The conjugate FFT momenta are p_k = 2 pi hbar k / (N dq), k in [-N/2, N/2),
    so the Nyquist momentum is p_max = pi hbar / dq.
    """

    q_min: float
    q_max: float
    N: int
    hbar: float = 1.0

    def __post_init__(self):
        if not self.q_max > self.q_min:
            raise ValueError("q_max must exceed q_min")
        if self.N < 2 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two, got {self.N}")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.N

    @property
    def q(self) -> np.ndarray:
        return self.q_min + self.dq * np.arange(self.N)

    @property
    def p(self) -> np.ndarray:
        """Momenta in FFT order."""
        return 2 * np.pi * self.hbar * np.fft.fftfreq(self.N, d=self.dq)

    @property
    def p_max(self) -> float:
        return np.pi * self.hbar / self.dq

    def doubled(self) -> "Grid1D":
        return replace(self, N=2 * self.N)


@dataclass(frozen=True)
class GridWavefunction:
    grid: Grid1D
    psi: np.ndarray
    log_norm: float = 0.0
    t: float = 0.0

    @property
    def discrete_norm2(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dq)

    @property
    def norm2(self) -> float:
        """Physical squared norm, including the stripped factor."""
        return math.exp(2 * self.log_norm) * self.discrete_norm2

    @property
    def log_norm2(self) -> float:
        return 2 * self.log_norm + math.log(self.discrete_norm2)

    def momentum_amplitudes(self) -> np.ndarray:
        """phi(p_k) = (2 pi hbar)^(-1/2) sum_j psi_j exp(-i p_k q_j / hbar) dq, FFT order.

        Normalized so that sum |phi|^2 dp = sum |psi|^2 dq.
        """
        g = self.grid
        phase = np.exp(-1j * g.p * g.q_min / g.hbar)
        return np.fft.fft(self.psi) * phase * g.dq / math.sqrt(2 * np.pi * g.hbar)


@dataclass(frozen=True)
class SeparableOperator:
    """H - i Gamma = T(p) + V(q) with complex-valued T and V."""

    T: Callable[[np.ndarray], np.ndarray]
    V: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_model(cls, model: ObservablePair) -> "SeparableOperator":
        T, V = model.separable_parts()
        return cls(T, V)


def coherent_state(grid: Grid1D, P: float, Q: float, B: complex = 1j, check: bool = True) -> GridWavefunction:
    """Discretized Gaussian packet

        psi(q) = (Im B)^(1/4) (pi hbar)^(-1/4) exp(i/hbar [P (q-Q) + B (q-Q)^2 / 2])
    """
    B = complex(np.asarray(B).reshape(()))
    hbar = grid.hbar
    if not B.imag > 0:
        from .errors import InvalidShapeMatrix
        raise InvalidShapeMatrix("Im B must be positive")
    if check:
        margin = 6.0 * math.sqrt(hbar / B.imag)
        if Q - grid.q_min < margin or grid.q_max - Q < margin:
            raise PacketOutsideGrid(
                f"packet at Q={Q} needs {margin:.3g} clearance inside [{grid.q_min}, {grid.q_max})")
        if abs(P) > 0.75 * grid.p_max:
            raise MomentumAliasing(f"|P|={abs(P)} exceeds 0.75 * p_max = {0.75 * grid.p_max:.4g}")
    x = grid.q - Q
    psi = (B.imag / (np.pi * hbar)) ** 0.25 * np.exp(1j / hbar * (P * x + 0.5 * B * x * x))
    return GridWavefunction(grid, psi, 0.0, 0.0)


class SplitStepper:
    """Strang stepper with precomputed exponentials for a fixed dt.

    One step is exp(-i V dt / 2hbar) IFFT exp(-i T dt / hbar) FFT exp(-i V dt / 2hbar),
    followed by renormalization.
    """

    def __init__(self, grid: Grid1D, op: SeparableOperator, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.grid = grid
        self.dt = dt
        h = grid.hbar
        with np.errstate(over="raise", invalid="raise"):
            try:
                self.half_v = np.exp(-0.5j * dt / h * np.asarray(op.V(grid.q), dtype=complex))
                self.kin = np.exp(-1j * dt / h * np.asarray(op.T(grid.p), dtype=complex))
            except FloatingPointError as exc:
                raise NonFinite(f"propagator exponentials overflow: {exc}") from None
        if not (np.all(np.isfinite(self.half_v)) and np.all(np.isfinite(self.kin))):
            raise NonFinite("propagator exponentials are not finite")

    def step_array(self, psi: np.ndarray) -> tuple[np.ndarray, float]:
        """Advance raw amplitudes one step; returns (unit-norm psi, log of norm factor)."""
        out = self.half_v * np.fft.ifft(self.kin * np.fft.fft(self.half_v * psi))
        nrm = math.sqrt(float(np.sum(out.real ** 2 + out.imag ** 2)) * self.grid.dq)
        if not math.isfinite(nrm) or nrm == 0.0:
            raise NonFinite("wavefunction norm became non-finite or zero")
        return out / nrm, math.log(nrm)

    def step(self, wf: GridWavefunction) -> GridWavefunction:
        psi, dlog = self.step_array(wf.psi)
        return GridWavefunction(wf.grid, psi, wf.log_norm + dlog, wf.t + self.dt)


def split_step(psi: GridWavefunction, op: SeparableOperator, dt: float) -> GridWavefunction:
    """One Strang step (convenience wrapper; loops should reuse a SplitStepper)."""
    return SplitStepper(psi.grid, op, dt).step(psi)


def _normalize_input(wf: GridWavefunction) -> GridWavefunction:
    n2 = wf.discrete_norm2
    if not n2 > 0 or not math.isfinite(n2):
        raise NonFinite("initial wavefunction has zero or non-finite norm")
    s = math.sqrt(n2)
    return GridWavefunction(wf.grid, wf.psi / s, wf.log_norm + math.log(s), wf.t)


# ---------------------------------------------------------------------------
# moments

@dataclass(frozen=True)
class GridMoments:
    t: float
    log_norm: float  # log of the physical norm (not squared)
    mean_q: float
    mean_p: float
    var_q: float
    var_p: float
    cov_qp: float

    @property
    def mass(self) -> float:
        return math.exp(2.0 * self.log_norm)

    @property
    def center(self) -> np.ndarray:
        """Z = (P, Q) in (p, q) ordering."""
        return np.array([self.mean_p, self.mean_q])

    @property
    def covariance(self) -> np.ndarray:
        """Covariance in (p, q) ordering."""
        return np.array([[self.var_p, self.cov_qp], [self.cov_qp, self.var_q]])


def grid_moments(wf: GridWavefunction) -> GridMoments:
    """Moments from position and momentum densities; Cov(q, p) from the
    symmetrized operator (qp + pq)/2, i.e. Re <psi| q p |psi>."""
    g = wf.grid
    psi = wf.psi
    rho = np.abs(psi) ** 2
    n2 = float(np.sum(rho))
    q = g.q
    mq = float(np.sum(q * rho) / n2)
    vq = float(np.sum((q - mq) ** 2 * rho) / n2)
    phi = np.fft.fft(psi)
    rho_p = np.abs(phi) ** 2
    p = g.p
    n2p = float(np.sum(rho_p))
    mp = float(np.sum(p * rho_p) / n2p)
    vp = float(np.sum((p - mp) ** 2 * rho_p) / n2p)
    ppsi = np.fft.ifft(p * phi)
    qp = float(np.real(np.sum(np.conj(psi) * q * ppsi)) / n2)
    log_norm = wf.log_norm + 0.5 * math.log(n2 * g.dq)
    return GridMoments(wf.t, log_norm, mq, mp, vq, vp, qp - mq * mp)


def edge_fractions(wf: GridWavefunction) -> tuple[float, float]:
    """Probability fractions in the outer position band and the outer
    momentum band (EDGE_FRACTION of the grid on each side)."""
    g = wf.grid
    m = max(1, int(g.N * EDGE_FRACTION))
    rho = np.abs(wf.psi) ** 2
    pos = float((rho[:m].sum() + rho[-m:].sum()) / rho.sum())
    rho_p = np.fft.fftshift(np.abs(np.fft.fft(wf.psi)) ** 2)
    mom = float((rho_p[:m].sum() + rho_p[-m:].sum()) / rho_p.sum())
    return pos, mom


def check_edges(wf: GridWavefunction, tol: float = EDGE_TOLERANCE):
    pos, mom = edge_fractions(wf)
    if mom > tol:
        raise AliasingDetected(f"t={wf.t:.6g}: momentum density at grid edge {mom:.3e} exceeds {tol:.0e}")
    if pos > tol:
        raise AliasingDetected(f"t={wf.t:.6g}: position density at grid edge {pos:.3e} exceeds {tol:.0e}")


# ---------------------------------------------------------------------------
# propagation

@dataclass
class QuantumRun:
    moments: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    final: Optional[GridWavefunction] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.moments])


def propagate(psi0: GridWavefunction, op: SeparableOperator, dt: float, t_final: float,
              output_stride: int = 1, snapshot_steps=(), check: bool = True,
              callback: Optional[Callable[[GridWavefunction], None]] = None) -> QuantumRun:
    """Repeated Strang steps with moment extraction every ``output_stride`` steps.

    ``snapshot_steps`` lists step indices at which the full wavefunction is
    kept in ``run.snapshots`` (keyed by step). ``t_final`` must be a whole
    number of steps. With ``check`` on, AliasingDetected is raised when
    probability reaches the grid edges at a sample.
    """
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final={t_final} is not a multiple of dt={dt}")
    stepper = SplitStepper(psi0.grid, op, dt)
    wf = _normalize_input(psi0)
    snaps = set(int(s) for s in snapshot_steps)
    run = QuantumRun()
    t0 = wf.t

    def sample(step, wf):
        if check:
            check_edges(wf)
        run.moments.append(grid_moments(wf))

    sample(0, wf)
    if 0 in snaps:
        run.snapshots[0] = wf
    psi, log_norm = wf.psi, wf.log_norm
    try:
        for step in range(1, n_steps + 1):
            psi, dlog = stepper.step_array(psi)
            log_norm += dlog
            if step % output_stride == 0 or step == n_steps or step in snaps:
                cur = GridWavefunction(wf.grid, psi, log_norm, t0 + step * dt)
                if step % output_stride == 0 or step == n_steps:
                    sample(step, cur)
                if step in snaps:
                    run.snapshots[step] = cur
                if callback is not None:
                    callback(cur)
    except NHWPError as exc:
        # callers can still report what was computed before the failure
        exc.partial_run = run
        raise
    run.final = GridWavefunction(wf.grid, psi, log_norm, t0 + n_steps * dt)
    return run


# ---------------------------------------------------------------------------
# dumps

def psi_dump_name(t: float) -> str:
    return f"psi_t{t:.4}.csv"


def write_psi_dump(wf: GridWavefunction, directory) -> Path:
    """CSV ``q,re_psi,im_psi`` plus a JSON sidecar with t, log_norm and the grid."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / psi_dump_name(wf.t)
    data = np.column_stack([wf.grid.q, wf.psi.real, wf.psi.imag])
    np.savetxt(path, data, delimiter=",", header="q,re_psi,im_psi", comments="", fmt="%.17g")
    meta = {
        "t": wf.t, "log_norm": wf.log_norm,
        "q_min": wf.grid.q_min, "q_max": wf.grid.q_max, "N": wf.grid.N, "hbar": wf.grid.hbar,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return path


def read_psi_dump(path) -> GridWavefunction:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    grid = Grid1D(meta["q_min"], meta["q_max"], meta["N"], meta["hbar"])
    return GridWavefunction(grid, data[:, 1] + 1j * data[:, 2], meta["log_norm"], meta["t"])
