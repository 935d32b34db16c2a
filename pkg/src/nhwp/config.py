"""
Run configuration: a single JSON document.

    {
      "model":        {"name": "anharmonic", "params": {"omega": 1, "beta": 0.5, "gamma": 0.2}},
      "hbar":         1.0,
      "initial":      {"P": 5, "Q": 0, "B": {"re": 0, "im": 1}},       # or "G": [[...]]
      "semiclassical": {"method": "rk4", "dt": 1e-3, "t_final": 4, "output_stride": 100},
      "quantum":      {"q_min": -12, "q_max": 12, "N": 1024, "dt": 1e-3},
      "outputs":      {"directory": "out", "stride": 100, "wigner_dump_times": [1, 2.5, 4]}
    }

Every key is checked: missing required keys and unknown keys both raise
ConfigError naming the offending key. Optional keys are listed in
``_OPTIONAL``; nothing else has a default.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .grid import Grid1D
from .models import AnharmonicModel, ObservablePair, QuadraticModel, WaveguideModel
from .phase_space import b_to_g, check_metric
from .semiclassical import IntegratorConfig, SemiclassicalState

_SECTIONS = {"model", "hbar", "initial", "semiclassical", "quantum", "outputs"}
_REQUIRED = {
    "model": {"name", "params"},
    "semiclassical": {"method", "dt", "t_final", "output_stride"},
    "quantum": {"q_min", "q_max", "N", "dt"},
    "outputs": {"directory", "stride"},
    "initial": {"P", "Q"},
}
_OPTIONAL = {
    "model": set(),
    "semiclassical": {"rel_tol", "abs_tol"},
    "quantum": {"t_final"},
    "outputs": {"wigner_dump_times"},
    "initial": {"B", "G"},
}
_MODEL_PARAMS = {
    "anharmonic": ({"omega", "beta", "gamma"}, set()),
    "waveguide": ({"a", "b", "c"}, set()),
    "quadratic": ({"M_H", "M_Gamma"}, {"b_H", "b_Gamma", "c_H", "c_Gamma"}),
}


@dataclass(frozen=True)
class QuantumConfig:
    q_min: float
    q_max: float
    N: int
    dt: float
    t_final: float


@dataclass(frozen=True)
class OutputConfig:
    directory: Path
    stride: int
    wigner_dump_times: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    model: ObservablePair
    model_name: str
    params: dict
    hbar: float
    P: np.ndarray
    Q: np.ndarray
    B: Optional[np.ndarray]
    G0: np.ndarray
    semiclassical: IntegratorConfig
    quantum: QuantumConfig
    outputs: OutputConfig
    source: Optional[Path] = None

    @property
    def n(self) -> int:
        return self.model.n

    def initial_state(self) -> SemiclassicalState:
        Z = np.concatenate([self.P, self.Q])
        return SemiclassicalState(0.0, Z, self.G0, 0.0, self.hbar)

    def grid(self) -> Grid1D:
        q = self.quantum
        return Grid1D(q.q_min, q.q_max, q.N, self.hbar)

    def quantum_stride(self) -> int:
        return self.outputs.stride

    def dump_steps(self) -> dict:
        """Quantum step index for each requested dump time."""
        steps = {}
        for t in self.outputs.wigner_dump_times:
            steps[int(round(t / self.quantum.dt))] = t
        return steps


def _keys(block, name, required, optional):
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' must be an object")
    for k in block:
        if k not in required and k not in optional:
            raise ConfigError(f"unknown key '{name}.{k}'")
    for k in sorted(required):
        if k not in block:
            raise ConfigError(f"missing key '{name}.{k}'")


def _real(v, key, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"'{key}' must be finite")
    if positive and not v > 0:
        raise ConfigError(f"'{key}' must be positive, got {v}")
    return v


def _int(v, key):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"'{key}' must be a positive integer, got {v!r}")
    return v


def _array(v, key):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"'{key}' must be numeric") from None
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"'{key}' must be finite")
    return a


def _build_model(block) -> tuple[ObservablePair, str, dict]:
    _keys(block, "model", _REQUIRED["model"], _OPTIONAL["model"])
    name = block["name"]
    if name not in _MODEL_PARAMS:
        raise ConfigError(f"'model.name' must be one of {sorted(_MODEL_PARAMS)}, got {name!r}")
    req, opt = _MODEL_PARAMS[name]
    params = block["params"]
    _keys(params, "model.params", req, opt)
    try:
        if name == "quadratic":
            kw = {k: _array(v, f"model.params.{k}") for k, v in params.items()}
            for k in ("c_H", "c_Gamma"):
                if k in kw:
                    kw[k] = float(kw[k])
            model = QuadraticModel(**kw)
        else:
            kw = {k: _real(v, f"model.params.{k}") for k, v in params.items()}
            model = (AnharmonicModel if name == "anharmonic" else WaveguideModel)(**kw)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"model.params: {exc}") from None
    return model, name, dict(params)


def parse_config(doc: dict, source: Optional[Path] = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _keys(doc, "config", _SECTIONS, set())
    model, name, params = _build_model(doc["model"])
    n = model.n
    hbar = _real(doc["hbar"], "hbar", positive=True)

    ini = doc["initial"]
    _keys(ini, "initial", _REQUIRED["initial"], _OPTIONAL["initial"])
    if ("B" in ini) == ("G" in ini):
        raise ConfigError("'initial' needs exactly one of 'B' or 'G'")
    P = _array(ini["P"], "initial.P").reshape(-1)
    Q = _array(ini["Q"], "initial.Q").reshape(-1)
    if P.size != n or Q.size != n:
        raise ConfigError(f"'initial.P' and 'initial.Q' must have {n} entries")
    B = None
    try:
        if "B" in ini:
            _keys(ini["B"], "initial.B", {"re", "im"}, set())
            B = (_array(ini["B"]["re"], "initial.B.re") + 1j * _array(ini["B"]["im"], "initial.B.im"))
            B = np.atleast_2d(B)
            if B.shape != (n, n):
                raise ConfigError(f"'initial.B' must be {n}x{n}")
            G0 = b_to_g(B)
        else:
            G0 = _array(ini["G"], "initial.G")
            if G0.shape != (2 * n, 2 * n):
                raise ConfigError(f"'initial.G' must be {2 * n}x{2 * n}")
            check_metric(G0)
    except ConfigError:
        raise
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(f"initial: {exc}") from None

    sc = doc["semiclassical"]
    _keys(sc, "semiclassical", _REQUIRED["semiclassical"], _OPTIONAL["semiclassical"])
    if sc["method"] not in ("rk4", "rk45-adaptive"):
        raise ConfigError(f"'semiclassical.method' must be 'rk4' or 'rk45-adaptive', got {sc['method']!r}")
    kw = dict(method=sc["method"], dt=_real(sc["dt"], "semiclassical.dt", True),
              t_final=_real(sc["t_final"], "semiclassical.t_final", True),
              output_stride=_int(sc["output_stride"], "semiclassical.output_stride"))
    for k in ("rel_tol", "abs_tol"):
        if k in sc:
            kw[k] = _real(sc[k], f"semiclassical.{k}", True)
    try:
        icfg = IntegratorConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"semiclassical: {exc}") from None

    qb = doc["quantum"]
    _keys(qb, "quantum", _REQUIRED["quantum"], _OPTIONAL["quantum"])
    qc = QuantumConfig(
        _real(qb["q_min"], "quantum.q_min"), _real(qb["q_max"], "quantum.q_max"),
        _int(qb["N"], "quantum.N"), _real(qb["dt"], "quantum.dt", True),
        _real(qb.get("t_final", icfg.t_final), "quantum.t_final", True))
    try:
        Grid1D(qc.q_min, qc.q_max, qc.N, hbar)
    except ValueError as exc:
        raise ConfigError(f"quantum: {exc}") from None

    ob = doc["outputs"]
    _keys(ob, "outputs", _REQUIRED["outputs"], _OPTIONAL["outputs"])
    if not isinstance(ob["directory"], str) or not ob["directory"]:
        raise ConfigError("'outputs.directory' must be a non-empty string")
    times = ob.get("wigner_dump_times", [])
    if not isinstance(times, list):
        raise ConfigError("'outputs.wigner_dump_times' must be a list")
    times = tuple(_real(t, "outputs.wigner_dump_times") for t in times)
    oc = OutputConfig(Path(ob["directory"]), _int(ob["stride"], "outputs.stride"), times)

    _check_alignment(icfg, qc, oc)
    return RunConfig(model, name, params, hbar, P, Q, B, G0, icfg, qc, oc, source)


def _check_alignment(icfg: IntegratorConfig, qc: QuantumConfig, oc: OutputConfig):
    def whole(x, d):
        k = round(x / d)
        return k >= 1 and abs(k * d - x) <= 1e-9 * max(1.0, abs(x))

    if not whole(qc.t_final, qc.dt):
        raise ConfigError("'quantum.t_final' must be a whole number of 'quantum.dt' steps")
    q_sample = qc.dt * oc.stride
    s_sample = icfg.sample_interval
    if abs(q_sample - s_sample) > 1e-9 * max(1.0, s_sample):
        raise ConfigError(
            f"sample times do not align: quantum.dt*outputs.stride={q_sample:g} "
            f"but semiclassical.dt*output_stride={s_sample:g}")
    for t in oc.wigner_dump_times:
        if t < 0 or t > qc.t_final + 1e-12 or not (t == 0 or whole(t, qc.dt)):
            raise ConfigError(f"'outputs.wigner_dump_times' entry {t} is not a step time in [0, t_final]")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc, path)
