"""
Run drivers shared by the CLI and the test suite: semiclassical and grid runs
from a RunConfig, the comparison report, and CSV writers.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig
from .errors import NHWPError, StepFailure
from .grid import (GridMoments, GridWavefunction, QuantumRun, SeparableOperator, coherent_state,
                   propagate, write_psi_dump)
from .semiclassical import TrajectoryRecord, ehrenfest_time, integrate
from .wigner import metric_from_covariance, wigner_dump_name, wigner_transform, write_wigner_binary

FLOAT_FMT = "%.17g"
_TIME_MATCH = 1e-9


def fmt_float(x) -> str:
    return FLOAT_FMT % x


def write_table(path, columns: list, rows, comments=(), footer: Optional[str] = None) -> Path:
    """CSV with leading ``#`` comment lines, one header row and %.17g floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(fmt_float(v) for v in r) + "\n")
    if footer:
        buf.write(f"# {footer}\n")
    path.write_text(buf.getvalue())
    return path


# ---------------------------------------------------------------------------
# semiclassical

def run_semiclassical(cfg: RunConfig) -> TrajectoryRecord:
    """Integrate from the configured initial state. StepFailure from the
    adaptive method is turned into a failed record."""
    try:
        return integrate(cfg.model, cfg.initial_state(), cfg.semiclassical)
    except StepFailure as exc:
        rec = TrajectoryRecord(hbar=cfg.hbar, n=cfg.n)
        rec.status, rec.message = "stepfailure", str(exc)
        return rec


def semiclassical_columns(n: int) -> list:
    cols = ["t"] + [f"P_{i + 1}" for i in range(n)] + [f"Q_{i + 1}" for i in range(n)]
    cols += [f"G_{i + 1}_{j + 1}" for i in range(2 * n) for j in range(i, 2 * n)]
    return cols + ["alpha", "log_alpha", "symplectic_residual", "hbar_norm_g"]


def semiclassical_rows(rec: TrajectoryRecord):
    iu = np.triu_indices(2 * rec.n)
    with np.errstate(over="ignore"):
        alpha = np.exp(np.asarray(rec.log_alpha, dtype=float))
    for k in range(len(rec)):
        G = rec.G[k]
        yield ([rec.t[k], *rec.Z[k], *G[iu], alpha[k], rec.log_alpha[k],
                rec.symplectic_residual[k], rec.hbar_norm_g[k]])


def write_semiclassical(rec: TrajectoryRecord, path) -> Path:
    comments = [
        "semiclassical Gaussian packet trajectory; coordinates ordered z = (p, q)",
        "columns: t time; P_i, Q_i packet center; G_i_j metric entries (row-major upper triangle);",
        "alpha Wigner mass; log_alpha its log; symplectic_residual ||G Omega G - Omega||_F;",
        "hbar_norm_g hbar * largest eigenvalue of G (reaches 1 at the Ehrenfest time)",
    ]
    footer = None if rec.ok else f"FAILED ({rec.status}): {rec.message}"
    return write_table(path, semiclassical_columns(rec.n), semiclassical_rows(rec), comments, footer)


# ---------------------------------------------------------------------------
# quantum

QUANTUM_COLUMNS = ["t", "log_norm", "mean_q", "mean_p", "var_q", "var_p", "cov_qp"]


def initial_wavefunction(cfg: RunConfig) -> GridWavefunction:
    B = cfg.B if cfg.B is not None else _shape_from_metric(cfg.G0)
    return coherent_state(cfg.grid(), float(cfg.P[0]), float(cfg.Q[0]), complex(np.asarray(B).reshape(())))


def _shape_from_metric(G):
    from .phase_space import g_to_b
    return g_to_b(G)


@dataclass
class QuantumResult:
    run: QuantumRun
    failure: Optional[NHWPError] = None
    dumps: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failure is None


def run_quantum(cfg: RunConfig, dump_dir=None) -> QuantumResult:
    """Split-step run from the configured coherent state.

    Input errors (non-separable model, packet outside the grid, ...) are
    raised. Failures during propagation are returned in ``failure`` along
    with the samples collected up to that point. With ``dump_dir`` set,
    Wigner and wavefunction dumps are written at the configured times.
    """
    if cfg.n != 1:
        from .errors import NotSeparable
        raise NotSeparable("grid propagation supports one degree of freedom only")
    op = SeparableOperator.from_model(cfg.model)
    psi0 = initial_wavefunction(cfg)
    dumps = cfg.dump_steps()
    result = QuantumResult(QuantumRun())

    def dump(wf):
        result.dumps.append(write_wigner_binary(wigner_transform(wf), Path(dump_dir) / wigner_dump_name(wf.t)))
        result.dumps.append(write_psi_dump(wf, dump_dir))

    if dump_dir is not None and 0 in dumps:
        dump(psi0)
    todo = {k for k in dumps if k > 0} if dump_dir is not None else set()
    q = cfg.quantum
    try:
        run = propagate(psi0, op, q.dt, q.t_final, cfg.outputs.stride, snapshot_steps=todo,
                        callback=None)
    except NHWPError as exc:
        if not hasattr(exc, "partial_run"):
            raise
        result.run, result.failure = exc.partial_run, exc
        run = exc.partial_run
    else:
        result.run = run
    for step in sorted(run.snapshots):
        if step in todo:
            dump(run.snapshots[step])
    return result


def quantum_rows(moments: list):
    for m in moments:
        yield [m.t, m.log_norm, m.mean_q, m.mean_p, m.var_q, m.var_p, m.cov_qp]


def write_quantum(result: QuantumResult, path) -> Path:
    comments = [
        "grid split-step reference; per-sample moments of the normalized state",
        "columns: t time; log_norm ln of the physical norm (norm^2 = exp(2 log_norm));",
        "mean_q, mean_p first moments; var_q, var_p, cov_qp central second moments (cov symmetrized)",
    ]
    footer = None if result.ok else f"FAILED ({type(result.failure).__name__}): {result.failure}"
    return write_table(path, QUANTUM_COLUMNS, quantum_rows(result.run.moments), comments, footer)


# ---------------------------------------------------------------------------
# comparison

COMPARE_COLUMNS = ["t", "dZ", "dG_F", "abs_norm_error", "rel_norm_error",
                   "P_sc", "Q_sc", "P_emp", "Q_emp", "alpha_sc", "mass_q"]


@dataclass
class ComparisonReport:
    rows: np.ndarray  # columns as COMPARE_COLUMNS
    ehrenfest_time: Optional[float] = None

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, COMPARE_COLUMNS.index(name)] if len(self.rows) else np.array([])

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    def max(self, name: str) -> float:
        c = self.column(name)
        return float(np.max(c)) if c.size else float("nan")

    def summary(self) -> str:
        te = "none" if self.ehrenfest_time is None else fmt_float(self.ehrenfest_time)
        return (f"max_dZ={fmt_float(self.max('dZ'))} max_dG_F={fmt_float(self.max('dG_F'))} "
                f"max_rel_norm_error={fmt_float(self.max('rel_norm_error'))} ehrenfest_breach_t={te}")


def empirical(m: GridMoments, hbar: float):
    """(Z_emp, G_emp, mass) from grid moments."""
    return m.center, metric_from_covariance(m.covariance, hbar), m.mass


def compare(traj: TrajectoryRecord, moments: list, hbar: float) -> ComparisonReport:
    """Match samples by time and tabulate the differences."""
    qt = np.array([m.t for m in moments])
    rows = []
    for k, t in enumerate(traj.t):
        if qt.size == 0:
            break
        j = int(np.argmin(np.abs(qt - t)))
        if abs(qt[j] - t) > _TIME_MATCH * max(1.0, abs(t)):
            continue
        Z_emp, G_emp, mass = empirical(moments[j], hbar)
        Z, G = traj.Z[k], traj.G[k]
        with np.errstate(over="ignore"):
            alpha = float(np.exp(traj.log_alpha[k]))
        rows.append([t, float(np.linalg.norm(Z - Z_emp)), float(np.linalg.norm(G - G_emp)),
                     abs(alpha - mass), abs(alpha - mass) / mass, Z[0], Z[1], Z_emp[0], Z_emp[1],
                     alpha, mass])
    arr = np.array(rows, dtype=float).reshape(-1, len(COMPARE_COLUMNS))
    return ComparisonReport(arr, ehrenfest_time(traj))


def write_compare(report: ComparisonReport, path, footer: Optional[str] = None) -> Path:
    comments = [
        "semiclassical vs grid reference at shared sample times",
        "columns: t; dZ Euclidean |Z_sc - Z_emp|; dG_F Frobenius ||G_sc - G_emp||;",
        "abs_norm_error |alpha - norm^2|; rel_norm_error the same divided by norm^2;",
        "P_sc, Q_sc, P_emp, Q_emp centers; alpha_sc semiclassical mass; mass_q grid norm^2",
        "G_emp = (hbar/2) Sigma^-1 with Sigma the grid covariance in (p, q) order",
    ]
    return write_table(path, COMPARE_COLUMNS, report.rows, comments, footer)
