"""
Command line entry point ``nhwp``.

    nhwp semiclassical|quantum|compare|fixed-point --config run.json [--out DIR]
         [--guess-p X --guess-q Y]

Exit codes: 0 ok, 2 configuration error, 3 semiclassical numerical failure,
4 grid propagation failure (including unsupported models), 5 solver did not
converge.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, NHWPError, NoConvergence
from .harness import (compare, run_quantum, run_semiclassical, write_compare, write_quantum,
                      write_semiclassical, fmt_float)
from .semiclassical import fixed_point

EXIT_OK, EXIT_CONFIG, EXIT_SEMICLASSICAL, EXIT_QUANTUM, EXIT_NOCONV = 0, 2, 3, 4, 5

log = logging.getLogger("nhwp")


def _out_dir(cfg: RunConfig, args) -> Path:
    d = Path(args.out) if args.out else cfg.outputs.directory
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_semiclassical(cfg: RunConfig, out: Path, args) -> int:
    rec = run_semiclassical(cfg)
    path = write_semiclassical(rec, out / "semiclassical.csv")
    if not rec.ok:
        print(f"nhwp: semiclassical run failed ({rec.status}): {rec.message}", file=sys.stderr)
        return EXIT_SEMICLASSICAL
    print(f"wrote {path}")
    return EXIT_OK


def _quantum(cfg, out):
    try:
        return run_quantum(cfg, dump_dir=out), None
    except NHWPError as exc:
        print(f"nhwp: grid propagation not possible: {exc}", file=sys.stderr)
        return None, EXIT_QUANTUM


def cmd_quantum(cfg: RunConfig, out: Path, args) -> int:
    res, code = _quantum(cfg, out)
    if res is None:
        return code
    path = write_quantum(res, out / "quantum.csv")
    if not res.ok:
        print(f"nhwp: grid propagation failed: {res.failure}", file=sys.stderr)
        return EXIT_QUANTUM
    print(f"wrote {path}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, out: Path, args) -> int:
    rec = run_semiclassical(cfg)
    write_semiclassical(rec, out / "semiclassical.csv")
    res, code = _quantum(cfg, out)
    if res is None:
        return code
    write_quantum(res, out / "quantum.csv")
    report = compare(rec, res.run.moments, cfg.hbar)
    footer = None
    if not rec.ok:
        footer = f"FAILED semiclassical ({rec.status}): {rec.message}"
    elif not res.ok:
        footer = f"FAILED quantum ({type(res.failure).__name__}): {res.failure}"
    write_compare(report, out / "compare.csv", footer)
    print(report.summary())
    if not rec.ok:
        print(f"nhwp: semiclassical run failed ({rec.status}): {rec.message}", file=sys.stderr)
        return EXIT_SEMICLASSICAL
    if not res.ok:
        print(f"nhwp: grid propagation failed: {res.failure}", file=sys.stderr)
        return EXIT_QUANTUM
    return EXIT_OK


def cmd_fixed_point(cfg: RunConfig, out: Path, args) -> int:
    n = cfg.n
    Z = np.concatenate([cfg.P, cfg.Q]).astype(float)
    if args.guess_p is not None:
        Z[:n] = args.guess_p
    if args.guess_q is not None:
        Z[n:] = args.guess_q
    try:
        fp = fixed_point(cfg.model, Z, cfg.G0)
    except NoConvergence as exc:
        print(f"nhwp: fixed point solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except NHWPError as exc:
        print(f"nhwp: fixed point solver failed: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    ev = fp.eigenvalues
    lines = [
        "Z* = " + " ".join(fmt_float(v) for v in fp.Z),
        "G* = " + " ; ".join(" ".join(fmt_float(v) for v in row) for row in fp.G),
        f"residual = {fmt_float(fp.residual)}",
        f"iterations = {fp.iterations}",
        "jacobian_eigenvalues = " + " ".join(f"{fmt_float(e.real)}{'+' if e.imag >= 0 else '-'}{fmt_float(abs(e.imag))}j"
                                             for e in ev),
        f"stability = {fp.stability()}",
    ]
    text = "\n".join(lines)
    (out / "fixed_point.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {
    "semiclassical": cmd_semiclassical,
    "quantum": cmd_quantum,
    "compare": cmd_compare,
    "fixed-point": cmd_fixed_point,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nhwp", description="Gaussian wave packets under H - i Gamma")
    ap.add_argument("command", choices=list(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides outputs.directory)")
    ap.add_argument("--guess-p", type=float, help="fixed-point initial guess for P")
    ap.add_argument("--guess-q", type=float, help="fixed-point initial guess for Q")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = _out_dir(cfg, args)
    except ConfigError as exc:
        print(f"nhwp: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[args.command](cfg, out, args)


if __name__ == "__main__":
    sys.exit(main())
