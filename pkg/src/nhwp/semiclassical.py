"""
Semiclassical propagation of a Gaussian Wigner function under H - i Gamma.

The packet is described by its center Z, metric G and log-mass
log(alpha). Their equations of motion are

    dZ/dt       = Omega grad H(Z) - G^-1 grad Gamma(Z)
    dG/dt       = H'' Omega G - G Omega H'' + Gamma'' - G Gamma''_Omega G
    dlogalpha/dt = -(2/hbar) Gamma(Z) - 1/2 tr(Gamma''_Omega G)

with Gamma''_Omega = Omega^T Gamma'' Omega. The G equation is a matrix
Riccati flow; its right-hand side is symmetrized before use.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DegenerateMetric, NoConvergence, StepFailure
from .models import ObservablePair, eval_all, omega_conjugate
from .phase_space import (
    b_to_g, check_metric, dof, g_to_b, metric_inverse, omega, symmetrize, symplectic_residual,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SemiclassicalState:
    t: float
    Z: np.ndarray
    G: np.ndarray
    log_alpha: float = 0.0
    hbar: float = 1.0

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float).reshape(-1)
        G = symmetrize(np.array(self.G, dtype=float))
        if Z.size != G.shape[0]:
            raise ValueError("Z and G dimensions disagree")
        if not math.isfinite(self.log_alpha):
            raise ValueError("log_alpha must be finite")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "G", G)

    @property
    def n(self) -> int:
        return dof(self.G)

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 1e-3
    t_final: float = 4.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    output_stride: int = 100

    def __post_init__(self):
        if self.method not in ("rk4", "rk45-adaptive"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if not self.dt > 0 or not self.t_final > 0:
            raise ValueError("dt and t_final must be positive")
        if int(self.output_stride) != self.output_stride or self.output_stride < 1:
            raise ValueError("output_stride must be a positive integer")

    @property
    def n_steps(self) -> int:
        """Number of steps; the last one is shortened to land on t_final."""
        return max(1, int(math.ceil(self.t_final / self.dt - 1e-9)))

    @property
    def sample_interval(self) -> float:
        return self.dt * self.output_stride


class Derivative(NamedTuple):
    dZ: np.ndarray
    dG: np.ndarray
    dlog_alpha: float


def rhs(model: ObservablePair, s: SemiclassicalState) -> Derivative:
    return _rhs(model, s.Z, s.G, s.hbar)


def _rhs(model, Z, G, hbar):
    ev = eval_all(model, Z)
    Om = omega(Z.size // 2)
    Ginv = metric_inverse(G)
    gO = omega_conjugate(ev.hessGamma)
    dZ = Om @ ev.gradH - Ginv @ ev.gradGamma
    HOG = ev.hessH @ Om @ G
    dG = symmetrize(HOG - G @ Om @ ev.hessH + ev.hessGamma - G @ gO @ G)
    dla = -2.0 / hbar * ev.Gamma - 0.5 * float(np.trace(gO @ G))
    return Derivative(dZ, dG, dla)


def riccati_residual(model: ObservablePair, Z, G) -> np.ndarray:
    """The G part of the flow at a frozen center Z."""
    ev = eval_all(model, np.asarray(Z, dtype=float))
    Om = omega(len(Z) // 2)
    gO = omega_conjugate(ev.hessGamma)
    return symmetrize(ev.hessH @ Om @ G - G @ Om @ ev.hessH + ev.hessGamma - G @ gO @ G)


# ---------------------------------------------------------------------------
# trajectory storage

@dataclass
class TrajectoryRecord:
    """Time series from a propagator run.

    ``status`` is "ok" or a short failure tag ("degenerate", "nonfinite");
    on failure the arrays hold everything up to the last good sample.
    """

    hbar: float
    n: int
    t: list = field(default_factory=list)
    Z: list = field(default_factory=list)
    G: list = field(default_factory=list)
    log_alpha: list = field(default_factory=list)
    symplectic_residual: list = field(default_factory=list)
    hbar_norm_g: list = field(default_factory=list)
    status: str = "ok"
    message: str = ""

    def append(self, t, Z, G, log_alpha):
        self.t.append(float(t))
        self.Z.append(np.array(Z, dtype=float))
        self.G.append(np.array(G, dtype=float))
        self.log_alpha.append(float(log_alpha))
        self.symplectic_residual.append(symplectic_residual(G))
        self.hbar_norm_g.append(self.hbar * float(np.linalg.eigvalsh(G)[-1]))

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def alpha(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_alpha))

    def arrays(self) -> dict:
        return {
            "t": np.asarray(self.t),
            "Z": np.asarray(self.Z),
            "G": np.asarray(self.G),
            "log_alpha": np.asarray(self.log_alpha),
            "alpha": self.alpha,
            "symplectic_residual": np.asarray(self.symplectic_residual),
            "hbar_norm_g": np.asarray(self.hbar_norm_g),
        }

    def __len__(self):
        return len(self.t)


def _pack(Z, G, la):
    return np.concatenate([Z, G.ravel(), [la]])


def _unpack(y, n):
    d = 2 * n
    Z = y[:d]
    G = symmetrize(y[d:d + d * d].reshape(d, d))
    return Z, G, y[-1]


def _vector_field(model, n, hbar):
    def f(y):
        Z, G, _ = _unpack(y, n)
        d = _rhs(model, Z, G, hbar)
        return _pack(d.dZ, d.dG, d.dlog_alpha)
    return f


def _healthy(y, n):
    if not np.all(np.isfinite(y)):
        return "nonfinite"
    _, G, _ = _unpack(y, n)
    try:
        check_metric(G)
    except DegenerateMetric:
        return "degenerate"
    return None


def integrate(model: ObservablePair, initial: SemiclassicalState, cfg: IntegratorConfig) -> TrajectoryRecord:
    """Integrate the coupled (Z, G, log alpha) system.

    Samples are written every ``cfg.output_stride`` steps of size ``cfg.dt``
    (for the adaptive method: at the same nominal times). The run stops
    early, with ``record.status`` set, if G stops being positive definite
    or a value becomes non-finite.
    """
    n = initial.n
    rec = TrajectoryRecord(hbar=initial.hbar, n=n)
    y = _pack(initial.Z, initial.G, initial.log_alpha)
    rec.append(initial.t, initial.Z, initial.G, initial.log_alpha)
    f = _vector_field(model, n, initial.hbar)
    if cfg.method == "rk4":
        _rk4_run(f, y, initial.t, cfg, n, rec)
    else:
        _rk45_run(f, y, initial.t, cfg, n, rec)
    return rec


def _fail(rec, status, message):
    rec.status = status
    rec.message = message
    logger.warning("semiclassical integration stopped: %s", message)


def _rk4_run(f, y, t0, cfg, n, rec):
    n_steps = cfg.n_steps
    t = t0
    for step in range(1, n_steps + 1):
        h = cfg.dt if step < n_steps else t0 + cfg.t_final - t
        try:
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
        except DegenerateMetric as exc:
            _fail(rec, "degenerate", f"step {step}: {exc}")
            return
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + cfg.t_final if step == n_steps else t0 + step * cfg.dt
        bad = _healthy(y, n)
        if bad:
            _fail(rec, bad, f"step {step} (t={t:.6g}): state became {bad}")
            return
        if step % cfg.output_stride == 0 or step == n_steps:
            Z, G, la = _unpack(y, n)
            rec.append(t, Z, G, la)


def _rk45_run(f, y, t0, cfg, n, rec):
    dt_s = cfg.sample_interval
    n_samples = int(math.floor(cfg.t_final / dt_s + 1e-9))
    t_eval = t0 + dt_s * np.arange(1, n_samples + 1)
    t_end = t0 + cfg.t_final
    if t_eval.size == 0 or abs(t_eval[-1] - t_end) > 1e-12 * max(1.0, abs(t_end)):
        t_eval = np.append(t_eval, t_end)

    def fun(t, yy):
        return f(yy)

    def degenerate(t, yy):
        _, G, _ = _unpack(yy, n)
        return float(np.linalg.eigvalsh(G)[0])
    degenerate.terminal = True

    try:
        sol = solve_ivp(fun, (t0, t_end), y, method="RK45", t_eval=t_eval,
                        rtol=cfg.rel_tol, atol=cfg.abs_tol, first_step=cfg.dt,
                        events=degenerate)
    except DegenerateMetric as exc:
        _fail(rec, "degenerate", str(exc))
        return
    for t, col in zip(sol.t, sol.y.T):
        bad = _healthy(col, n)
        if bad:
            _fail(rec, bad, f"t={t:.6g}: state became {bad}")
            return
        Z, G, la = _unpack(col, n)
        rec.append(t, Z, G, la)
    if sol.status == -1:
        raise StepFailure(sol.message)
    if sol.status == 1:
        _fail(rec, "degenerate", f"metric lost positive definiteness near t={sol.t_events[0][0]:.6g}")


def ehrenfest_time(traj: TrajectoryRecord, threshold: float = 1.0) -> Optional[float]:
    """First sample time with hbar * lambda_max(G) >= threshold, else None."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    for t, v in zip(traj.t, traj.hbar_norm_g):
        if v >= threshold:
            return t
    return None


# ---------------------------------------------------------------------------
# stationary points

def _sym_index(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def _vech(M, idx):
    return np.array([M[i, j] for i, j in idx])


def _unvech(v, idx, n):
    M = np.zeros((n, n))
    for val, (i, j) in zip(v, idx):
        M[i, j] = M[j, i] = val
    return M


class _ShapeChart:
    """Coordinates theta = (vech Re B, vech Im B) on symplectic metrics.

    Every symmetric positive definite symplectic G is b_to_g(B) for exactly
    one B, so solving in theta keeps iterates on the manifold the flow
    preserves (the Riccati map alone can have whole families of
    non-symplectic zeros, e.g. G = a I when Gamma'' = 0).
    """

    def __init__(self, n):
        self.n = n
        self.idx = _sym_index(n)
        self.m = len(self.idx)

    def theta(self, G):
        # a non-symplectic guess is replaced by the symplectic metric
        # sharing its G_pp and G_pq blocks
        B = g_to_b(G, tol=np.inf)
        return np.concatenate([_vech(B.real, self.idx), _vech(B.imag, self.idx)])

    def parts(self, theta):
        n, m = self.n, self.m
        return _unvech(theta[:m], self.idx, n), _unvech(theta[m:], self.idx, n)

    def valid(self, theta):
        return _is_pd(self.parts(theta)[1])

    def metric(self, theta):
        re, im = self.parts(theta)
        return b_to_g(re + 1j * im)

    def tangents(self, theta):
        """dG/dtheta_k for every coordinate, as a list of 2n x 2n matrices."""
        n = self.n
        re, im = self.parts(theta)
        im_inv = np.linalg.inv(im)
        eye, zero = np.eye(n), np.zeros((n, n))
        L = np.block([[eye, zero], [-re, eye]])
        D = np.block([[im_inv, zero], [zero, im]])
        out = []
        for i, j in self.idx:
            S = np.zeros((n, n))
            S[i, j] = S[j, i] = 1.0
            dL = np.block([[zero, zero], [-S, zero]])
            out.append(symmetrize(dL @ D @ L.T + L @ D @ dL.T))
        for i, j in self.idx:
            S = np.zeros((n, n))
            S[i, j] = S[j, i] = 1.0
            dD = np.block([[-im_inv @ S @ im_inv, zero], [zero, S]])
            out.append(symmetrize(L @ dD @ L.T))
        return out


def _riccati_linear(ev, Om, G, E):
    """Derivative of the Riccati map at G in the direction E."""
    gO = omega_conjugate(ev.hessGamma)
    return symmetrize(ev.hessH @ Om @ E - E @ Om @ ev.hessH - E @ gO @ G - G @ gO @ E)


def _is_pd(G):
    try:
        np.linalg.cholesky(G)
        return True
    except np.linalg.LinAlgError:
        return False


def _newton(residual, jacobian, x0, accept, tol, max_iter):
    """Gauss-Newton with backtracking on ||residual||_2.

    Least-squares steps handle the overdetermined chart systems and
    rank-deficient Jacobians alike.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    nr = np.linalg.norm(r)
    for it in range(max_iter):
        if nr <= tol:
            return x, nr, it
        J = jacobian(x)
        dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        while lam > 1e-8:
            xn = x + lam * dx
            if accept(xn):
                try:
                    rn = residual(xn)
                except DegenerateMetric:
                    rn = None
                if rn is not None and np.linalg.norm(rn) < nr * (1 - 1e-4 * lam):
                    break
            lam *= 0.5
        else:
            return x, nr, it
        x, r = xn, rn
        nr = np.linalg.norm(r)
    return x, nr, max_iter


def stationary_g(model: ObservablePair, Z, G_guess, tol: float = 1e-10, max_iter: int = 100,
                 relax_time: float = 200.0, relax_dt: float = 1e-2) -> np.ndarray:
    """Solve the algebraic Riccati equation dG/dt = 0 at a frozen center Z.

    Newton with line search over symplectic metrics first; if it stalls,
    relax by integrating the G flow at frozen Z and polish with Newton.
    """
    Z = np.asarray(Z, dtype=float)
    G0 = symmetrize(np.asarray(G_guess, dtype=float))
    check_metric(G0)
    d = G0.shape[0]
    Om = omega(d // 2)
    chart = _ShapeChart(d // 2)
    ev = eval_all(model, Z)
    sym = _sym_index(d)

    def res(th):
        return _vech(riccati_residual(model, Z, chart.metric(th)), sym)

    def jac(th):
        G = chart.metric(th)
        return np.array([_vech(_riccati_linear(ev, Om, G, E), sym) for E in chart.tangents(th)]).T

    def solve(G):
        th, nr, _ = _newton(res, jac, chart.theta(G), chart.valid, tol, max_iter)
        return chart.metric(th), nr

    G, nr = solve(G0)
    if nr <= tol:
        return G

    logger.info("Riccati Newton stalled at residual %.3e; relaxing along the flow", nr)
    t = 0.0
    f = lambda M: riccati_residual(model, Z, M)
    while t < relax_time:
        k1 = f(G)
        k2 = f(G + 0.5 * relax_dt * k1)
        k3 = f(G + 0.5 * relax_dt * k2)
        k4 = f(G + relax_dt * k3)
        G = symmetrize(G + relax_dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
        t += relax_dt
        if not np.all(np.isfinite(G)) or not _is_pd(G):
            break
        if np.linalg.norm(f(G)) < 1e-6:
            break
    if np.all(np.isfinite(G)) and _is_pd(G):
        G, nr = solve(G)
        if nr <= tol:
            return G
    raise NoConvergence(f"stationary metric not found (residual {nr:.3e})")


@dataclass(frozen=True)
class FixedPoint:
    Z: np.ndarray
    G: np.ndarray
    residual: float
    iterations: int
    jacobian: np.ndarray
    eigenvalues: np.ndarray

    @property
    def max_real_part(self) -> float:
        return float(np.max(self.eigenvalues.real))

    def stability(self, tol: float = 1e-9) -> str:
        """'asymptotically stable', 'elliptic' (neutral, purely imaginary
        spectrum) or 'unstable', from the Z-subsystem eigenvalues."""
        m = self.max_real_part
        if m < -tol:
            return "asymptotically stable"
        if m <= tol:
            return "elliptic"
        return "unstable"


def z_jacobian(model: ObservablePair, Z, G) -> np.ndarray:
    """d(dZ/dt)/dZ at frozen G: Omega H''(Z) - G^-1 Gamma''(Z)."""
    ev = eval_all(model, np.asarray(Z, dtype=float))
    return omega(len(Z) // 2) @ ev.hessH - metric_inverse(G) @ ev.hessGamma


def fixed_point(model: ObservablePair, Z_guess, G_guess, tol: float = 1e-10,
                max_iter: int = 100, fd_step: float = 1e-6) -> FixedPoint:
    """Joint stationary point of the (Z, G) flow by Newton with line search.

    G is parametrized through its shape matrix B, so the solution is
    symplectic. Derivatives with respect to G are analytic; derivatives of
    the G flow with respect to Z need third derivatives of H and Gamma and
    are taken by central differences.
    """
    Z0 = np.asarray(Z_guess, dtype=float).reshape(-1)
    G0 = symmetrize(np.asarray(G_guess, dtype=float))
    check_metric(G0)
    d = Z0.size
    Om = omega(d // 2)
    chart = _ShapeChart(d // 2)
    sym = _sym_index(d)

    def split(x):
        return x[:d], chart.metric(x[d:])

    def res(x):
        Z, G = split(x)
        out = _rhs(model, Z, G, 1.0)
        return np.concatenate([out.dZ, _vech(out.dG, sym)])

    def jac(x):
        Z, G = split(x)
        ev = eval_all(model, Z)
        Ginv = metric_inverse(G)
        tangents = chart.tangents(x[d:])
        J = np.zeros((d + len(sym), d + len(tangents)))
        J[:d, :d] = Om @ ev.hessH - Ginv @ ev.hessGamma
        for i in range(d):
            e = np.zeros(d)
            e[i] = fd_step * (1.0 + abs(Z[i]))
            rp = _vech(riccati_residual(model, Z + e, G), sym)
            rm = _vech(riccati_residual(model, Z - e, G), sym)
            J[d:, i] = (rp - rm) / (2 * e[i])
        for k, E in enumerate(tangents):
            J[:d, d + k] = Ginv @ E @ Ginv @ ev.gradGamma
            J[d:, d + k] = _vech(_riccati_linear(ev, Om, G, E), sym)
        return J

    def accept(x):
        return chart.valid(x[d:])

    x0 = np.concatenate([Z0, chart.theta(G0)])
    x, nr, it = _newton(res, jac, x0, accept, tol, max_iter)
    if nr > tol:
        raise NoConvergence(f"fixed point not found after {it} iterations (residual {nr:.3e})")
    Z, G = split(x)
    Jz = z_jacobian(model, Z, G)
    return FixedPoint(Z, G, float(nr), it, Jz, np.linalg.eigvals(Jz))
