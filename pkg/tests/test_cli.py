import copy
import json
import math
from pathlib import Path

import numpy as np
import pytest

from nhwp.cli import main
from nhwp.config import load_config, parse_config
from nhwp.errors import ConfigError
from nhwp.harness import compare, run_quantum, run_semiclassical
from nhwp.wigner import read_wigner_binary

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "model": {"name": "quadratic", "params": {"M_H": [[1.0, 0.0], [0.0, 1.0]], "M_Gamma": [[0.2, 0.0], [0.0, 0.2]]}},
    "hbar": 1.0,
    "initial": {"P": 5.0, "Q": 0.0, "B": {"re": 0.0, "im": 1.0}},
    "semiclassical": {"method": "rk4", "dt": 1e-3, "t_final": 1.0, "output_stride": 100},
    "quantum": {"q_min": -12.0, "q_max": 12.0, "N": 1024, "dt": 1e-3},
    "outputs": {"directory": "out", "stride": 100},
}


def write(tmp_path, doc, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def edited(**changes):
    doc = copy.deepcopy(BASE)
    for path, value in changes.items():
        keys = path.split("__")
        d = doc
        for k in keys[:-1]:
            d = d[k]
        if value is None:
            del d[keys[-1]]
        else:
            d[keys[-1]] = value
    return doc


def read_csv(path):
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(x) for x in l.split(",")] for l in lines[1:]])
    return header, data


# ---------------------------------------------------------------------------
# config

def test_shipped_configs_parse():
    names = sorted(p.name for p in CONFIGS.glob("*.json"))
    assert {"damped_harmonic.json", "fig1_anharmonic.json", "fig2_waveguide.json"} <= set(names)
    for p in CONFIGS.glob("*.json"):
        cfg = load_config(p)
        assert cfg.n == 1


@pytest.mark.parametrize("changes, key", [
    ({"quantum__N": None}, "quantum.N"),
    ({"quantum__Nq": 5}, "quantum.Nq"),
    ({"model__params__omega": 1.0}, "model.params.omega"),
    ({"semiclassical__methd": "rk4"}, "semiclassical.methd"),
    ({"hbar": None}, "hbar"),
    ({"outputs__stride": None}, "outputs.stride"),
    ({"initial__B__imag": 1.0}, "initial.B.imag"),
    ({"extra": {}}, "config.extra"),
])
def test_config_names_missing_and_unknown_keys(changes, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(edited(**changes))


def test_config_anharmonic_params_complete():
    doc = edited(model={"name": "anharmonic", "params": {"omega": 1.0, "beta": 0.5}})
    with pytest.raises(ConfigError, match="model.params.gamma"):
        parse_config(doc)


@pytest.mark.parametrize("changes", [
    {"initial__G": [[1.0, 0.0], [0.0, 1.0]]},                      # both B and G
    {"initial__B": None},                                          # neither
    {"model__name": "harmonic"},
    {"semiclassical__method": "euler"},
    {"semiclassical__dt": -1.0},
    {"quantum__N": 1000},
    {"outputs__stride": 50},                                       # sample times misaligned
    {"outputs__wigner_dump_times": [0.00015]},
    {"initial__B": {"re": 0.0, "im": -1.0}},
    {"hbar": "1"},
])
def test_config_rejects_invalid_values(changes):
    with pytest.raises(ConfigError):
        parse_config(edited(**changes))


def test_config_metric_initial():
    cfg = parse_config(edited(initial__B=None, initial__G=[[0.5, 0.0], [0.0, 2.0]]))
    assert np.allclose(cfg.G0, np.diag([0.5, 2.0]))
    assert cfg.B is None
    assert cfg.quantum.t_final == cfg.semiclassical.t_final


# ---------------------------------------------------------------------------
# commands

def test_cli_semiclassical_damped(tmp_path):
    doc = edited(semiclassical__t_final=math.pi / 2, semiclassical__output_stride=1,
                 quantum__dt=math.pi / 2 / 1000, semiclassical__dt=math.pi / 2 / 1000, outputs__stride=1)
    code = main(["semiclassical", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path / "o")])
    assert code == 0
    text = (tmp_path / "o" / "semiclassical.csv").read_text()
    assert text.startswith("#")
    header, data = read_csv(tmp_path / "o" / "semiclassical.csv")
    assert header == ["t", "P_1", "Q_1", "G_1_1", "G_1_2", "G_2_2", "alpha", "log_alpha",
                      "symplectic_residual", "hbar_norm_g"]
    last = data[-1]
    assert last[0] == pytest.approx(math.pi / 2, abs=1e-12)
    assert abs(last[2] - 5 * math.exp(-0.1 * math.pi)) <= 1e-4
    assert last[7] == pytest.approx(-12.5 * (1 - math.exp(-0.2 * math.pi)) - 0.1 * math.pi, abs=1e-9)


def test_cli_semiclassical_hermitian_alpha_constant(tmp_path):
    doc = edited(model__params__M_Gamma=[[0.0, 0.0], [0.0, 0.0]])
    assert main(["semiclassical", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "semiclassical.csv")
    assert np.all(data[:, header.index("alpha")] == 1.0)


def test_cli_fig1_semiclassical_runs_clean(tmp_path):
    assert main(["semiclassical", "--config", str(CONFIGS / "fig1_anharmonic.json"), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "semiclassical.csv").read_text()
    assert "FAILED" not in text
    header, data = read_csv(tmp_path / "semiclassical.csv")
    assert data[-1, 0] == pytest.approx(4.0)


def test_cli_quantum_with_dumps(tmp_path):
    doc = edited(outputs__wigner_dump_times=[0.0, 0.5])
    assert main(["quantum", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 0
    header, data = read_csv(tmp_path / "o" / "quantum.csv")
    assert header == ["t", "log_norm", "mean_q", "mean_p", "var_q", "var_p", "cov_qp"]
    t = data[:, 0]
    la = -12.5 * (1 - np.exp(-0.4 * t)) - 0.2 * t
    assert np.abs(2 * data[:, 1] - la).max() <= 1e-5
    W = read_wigner_binary(tmp_path / "o" / "wigner_t0.5.bin")
    assert W.t == 0.5
    assert W.mass == pytest.approx(math.exp(2 * data[5, 1]), rel=1e-8)
    assert (tmp_path / "o" / "psi_t0.0.csv").exists() and (tmp_path / "o" / "psi_t0.5.json").exists()


def test_cli_quantum_hermitian_log_norm(tmp_path):
    doc = edited(model__params__M_Gamma=[[0.0, 0.0], [0.0, 0.0]], semiclassical__t_final=2.0)
    assert main(["quantum", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path)]) == 0
    _, data = read_csv(tmp_path / "quantum.csv")
    assert np.abs(data[:, 1]).max() <= 1e-10


def test_cli_quantum_waveguide_norm_not_monotone(tmp_path):
    assert main(["quantum", "--config", str(CONFIGS / "fig2_waveguide.json"), "--out", str(tmp_path)]) == 0
    _, data = read_csv(tmp_path / "quantum.csv")
    d = np.diff(data[:, 1])
    assert np.any(d > 0) and np.any(d < 0)


def test_cli_compare_damped(tmp_path, capsys):
    doc = edited(semiclassical__t_final=4.0)
    assert main(["compare", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path)]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    summary = dict(kv.split("=") for kv in line.split())
    for k in ("max_dZ", "max_dG_F", "max_rel_norm_error"):
        assert float(summary[k]) <= 1e-4
    assert summary["ehrenfest_breach_t"] == "0"
    header, data = read_csv(tmp_path / "compare.csv")
    assert header[:5] == ["t", "dZ", "dG_F", "abs_norm_error", "rel_norm_error"]
    assert data[-1, 0] == pytest.approx(4.0)
    assert np.all(np.diff(data[:, 0]) > 0)


def test_compare_fig1_reports_finite_maxima():
    cfg = load_config(CONFIGS / "fig1_anharmonic.json")
    rep = compare(run_semiclassical(cfg), run_quantum(cfg).run.moments, cfg.hbar)
    assert len(rep.rows) == 41
    assert all(math.isfinite(rep.max(k)) for k in ("dZ", "dG_F", "rel_norm_error"))


def test_cli_output_is_reproducible(tmp_path):
    cfg = write(tmp_path, BASE)
    for d in ("a", "b"):
        assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for f in ("semiclassical.csv", "quantum.csv", "compare.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_fixed_point_examples(tmp_path, capsys):
    assert main(["fixed-point", "--config", str(write(tmp_path, BASE)), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    z = [float(x) for x in out.splitlines()[0].split("=")[1].split()]
    assert np.abs(z).max() <= 1e-10
    assert "asymptotically stable" in out
    herm = edited(model__params__M_Gamma=[[0.0, 0.0], [0.0, 0.0]])
    assert main(["fixed-point", "--config", str(write(tmp_path, herm)), "--out", str(tmp_path),
                 "--guess-p", "0.1", "--guess-q", "0.1"]) == 0
    z = [float(x) for x in capsys.readouterr().out.splitlines()[0].split("=")[1].split()]
    assert np.abs(z).max() <= 1e-10


def test_cli_fixed_point_waveguide(tmp_path, capsys):
    assert main(["fixed-point", "--config", str(CONFIGS / "fig2_waveguide.json"), "--out", str(tmp_path),
                 "--guess-p", "0", "--guess-q", "1"]) == 0
    out = capsys.readouterr().out
    z = [float(x) for x in out.splitlines()[0].split("=")[1].split()]
    assert np.allclose(z, [1.0, 0.0], atol=1e-8)
    assert (tmp_path / "fixed_point.txt").read_text().strip() == out.strip()


# ---------------------------------------------------------------------------
# exit codes

def test_exit_config_errors(tmp_path, capsys):
    assert main(["semiclassical", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["quantum", "--config", str(bad)]) == 2
    assert main(["compare", "--config", str(write(tmp_path, edited(quantum__Nq=3)))]) == 2
    assert "quantum.Nq" in capsys.readouterr().err
    assert main(["bogus", "--config", str(bad)]) == 2


def test_exit_semiclassical_failure(tmp_path):
    doc = edited(model__params__M_H=[[0.0, 0.0], [0.0, 0.0]], model__params__M_Gamma=[[-50.0, 0.0], [0.0, -50.0]],
                 semiclassical__dt=0.05, semiclassical__t_final=50.0, semiclassical__output_stride=1,
                 quantum__dt=0.05, outputs__stride=1)
    assert main(["semiclassical", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path)]) == 3
    lines = (tmp_path / "semiclassical.csv").read_text().splitlines()
    assert lines[-1].startswith("# FAILED")
    assert len([l for l in lines if not l.startswith("#")]) >= 2


def test_exit_quantum_unsupported(tmp_path):
    cross = edited(model__params__M_Gamma=[[0.2, 0.1], [0.1, 0.2]])
    assert main(["quantum", "--config", str(write(tmp_path, cross)), "--out", str(tmp_path)]) == 4
    twod = edited(model__params__M_H=np.eye(4).tolist(), model__params__M_Gamma=(0.1 * np.eye(4)).tolist(),
                  initial__P=[1.0, 0.0], initial__Q=[0.0, 0.0],
                  initial__B={"re": [[0.0, 0.0], [0.0, 0.0]], "im": [[1.0, 0.0], [0.0, 1.0]]})
    assert main(["quantum", "--config", str(write(tmp_path, twod)), "--out", str(tmp_path)]) == 4
    assert main(["semiclassical", "--config", str(write(tmp_path, twod)), "--out", str(tmp_path)]) == 0
    outside = edited(initial__Q=10.0)
    assert main(["quantum", "--config", str(write(tmp_path, outside)), "--out", str(tmp_path)]) == 4


def test_exit_quantum_aliasing_partial(tmp_path):
    doc = edited(model__params__M_H=[[1.0, 0.0], [0.0, 0.0]], model__params__M_Gamma=[[0.0, 0.0], [0.0, 0.0]],
                 initial__P=0.0, quantum__q_min=-6.0, quantum__q_max=6.0, quantum__N=256,
                 semiclassical__t_final=10.0)
    assert main(["quantum", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path)]) == 4
    lines = (tmp_path / "quantum.csv").read_text().splitlines()
    assert lines[-1].startswith("# FAILED (AliasingDetected)")


def test_exit_no_convergence(tmp_path):
    doc = edited(model__params__M_H=[[0.0, 1.0], [1.0, 0.0]], model__params__M_Gamma=[[0.0, 0.0], [0.0, 0.0]])
    assert main(["fixed-point", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path)]) == 5
