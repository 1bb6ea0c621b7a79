"""Command-line front door: ``fracmix spectral|solve|sweep|verify``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .config import ConfigError, parse_config
from .mesh import DomainError, EllipticityError
from .solver import SolverAbort

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("fracmix")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracmix", description="Fractional porous-medium experiments.")
    p.add_argument("command", choices=("spectral", "solve", "sweep", "verify"))
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None, help="output directory (default: [output] directory)")
    p.add_argument("--jobs", type=int, default=None, help="sweep worker count (default: available CPUs)")
    p.add_argument("--no-timestamp", action="store_true", help="omit the generated-at header line")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _echo_defaults(cfg):
    if cfg.defaulted:
        print("defaults applied: " + ", ".join(sorted(cfg.defaulted)))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config.read_text())
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _echo_defaults(cfg)
    out = args.out or Path(cfg.output.directory)
    stamp = not args.no_timestamp
    jobs = args.jobs or ex.default_jobs()

    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            status, files = _dispatch(args.command, cfg, out, stamp, jobs)
    except (DomainError, EllipticityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverAbort, RuntimeError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(files)} file(s) to {out}")
    return status


def _dispatch(command, cfg, out, stamp, jobs):
    prob = ex.build_problem(cfg)
    print(f"config {cfg.digest()}: dim={cfg.domain.dimension} n={cfg.domain.resolution} "
          f"dofs={prob.ops.free_dofs.size} lambda1={prob.dec.lambda1:.6g}")
    if command == "spectral":
        files, ok = ex.cmd_spectral(cfg, out, stamp, prob)
        print("lowest eigenvalues: " + ", ".join(f"{v:.6g}" for v in prob.dec.eigenvalues[:5]))
        print(f"operator suite: {'pass' if ok else 'FAIL'}")
        return (EXIT_OK if ok else EXIT_VERIFY), files
    if command == "solve":
        files, traj, reps = ex.cmd_solve(cfg, out, stamp, prob)
        for k, v in traj.summary().items():
            print(f"  {k}: {v}")
        for rep in reps:
            print(f"  {rep.check}: {'pass' if rep.passed else 'FAIL ' + ','.join(rep.failed_quantities)}")
        return EXIT_OK, files
    if command == "sweep":
        files, report = ex.cmd_sweep(cfg, out, stamp, jobs, prob)
        for r in report.runs:
            print(f"  delta={r.delta:g} mu={r.mu:g} drift={r.mass_drift:.4g} linf={r.linf_violation + 0.0:.3g} "
                  f"cauchy={r.cauchy_diff:.4g}" + (f" error={r.error}" if r.error else ""))
        failed = all(r.trajectory is None for r in report.runs)
        return (EXIT_RUNTIME if failed else EXIT_OK), files
    files, ok, failed = ex.cmd_verify(cfg, out, stamp, prob)
    print("verify: all checks pass" if ok else "verify: FAILED " + ", ".join(failed))
    return (EXIT_OK if ok else EXIT_VERIFY), files


if __name__ == "__main__":
    sys.exit(main())
