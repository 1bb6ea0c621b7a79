"""Orchestration behind the CLI subcommands, including CSV output."""
from __future__ import annotations

import csv
import datetime as _dt
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import ExperimentConfig
from .mesh import assemble, build_coefficients, build_domain, build_shells
from .profiles import initial_profile
from .solver import SolverAbort, imex_step, limit_sweep, run
from .spectral import eigendecompose, verify_operator_suite

TRAJECTORY_HEADER = ["t", "mass", "min_u", "max_u", "entropy", "hs_energy", "clamp_count"]
SWEEP_HEADER = ["delta", "mu", "mass_drift", "linf_violation", "cauchy_diff"]
REPORT_HEADER = ["check", "quantity", "tau_or_t_or_k", "value", "bound", "pass"]
RUNS_HEADER = ["delta", "mu", "phase", "steps", "t_final", "mass_initial", "mass_final",
               "min_u", "max_u", "clamps", "halvings", "picard_caps", "error"]
CUTOFF_KS = (1, 2, 4, 8, 16, 32, 64, 128, 256)


@dataclass
class Problem:
    config: ExperimentConfig
    domain: object
    ops: object
    dec: object
    u0: np.ndarray


def build_problem(cfg: ExperimentConfig) -> Problem:
    d = cfg.domain
    dom = build_domain(d.dimension, d.resolution, d.gamma0)
    coeff = build_coefficients(dom, d.coefficient_spec())
    ops = assemble(dom, coeff, cfg.operator.mass_mode, seed=cfg.operator.seed)
    dec = eigendecompose(ops)
    return Problem(cfg, dom, ops, dec, initial_profile(dom, cfg.solver.initial))


# ---------------------------------------------------------------------------
# CSV output


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v) + 0.0)  # no negative zero
    if v is None:
        return ""
    return str(v)


class CsvWriter:
    def __init__(self, out_dir, cfg: ExperimentConfig, timestamp: bool = True):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.digest = cfg.digest()
        self.timestamp = timestamp
        self.written: list[Path] = []

    def write(self, name, header, rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash={self.digest}\n")
            if self.timestamp:
                fh.write(f"# generated={_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        self.written.append(path)
        return path

    def report(self, name, reports) -> Path:
        rows = [(r.check, r.quantity, r.at, r.value, r.bound, r.passed) for rep in reports for r in rep.rows]
        return self.write(name, REPORT_HEADER, rows)

    def report_each(self, prefix, reports) -> None:
        """One CSV per check, named ``<prefix><check>.csv``."""
        for rep in reports:
            self.report(f"{prefix}{rep.check}.csv", [rep])


def suite_report(dec, ops, trials, seed) -> dg.CheckReport:
    rep = dg.CheckReport("operator_suite")
    for law, res in verify_operator_suite(dec, ops, trials=trials, seed=seed).items():
        rep.add(law, 0.0, res["max_violation"], res["bound"], res["passed"])
    rep.add("m_orthonormality", 0.0, dec.m_norm_check, 1e-10, dec.m_norm_check <= 1e-10)
    rep.add("eigen_residual", 0.0, dec.residual_check, 1e-8, dec.residual_check <= 1e-8)
    rep.add("lambda1_positive", 0.0, dec.lambda1, 0.0, dec.lambda1 > 0)
    return rep


def trajectory_rows(traj):
    led = traj.ledgers
    for n, t in enumerate(traj.times):
        yield (t, led["mass"][n], led["min_u"][n], led["max_u"][n], led["entropy"][n],
               led["hs_energy"][n], int(led["clamp_count"][n]))


def diagnostics_reports(prob: Problem, traj) -> list:
    dec, dom = prob.dec, prob.domain
    rates = dg.energy_rates(traj, dec)
    bank = dg.build_test_bank(dec, traj.config.t_end)
    reps = [
        dg.check_bounds(traj),
        dg.check_mass(traj, dom),
        dg.ledger_consistency(traj, dec),
        dg.check_first_energy(traj, dec, rates),
        dg.check_second_energy(traj, dec, rates),
        dg.weak_residual(traj, dec, bank),
        dg.initial_trace(traj, dec, bank),
        dg.dirichlet_scaling(traj, dom, traj.config.s),
        dg.cutoff_experiment(dom, CUTOFF_KS),
    ]
    if dom.gamma1_sides and prob.config.operator.n_shells <= dom.resolution // 2:
        reps.append(dg.shell_flux(traj, build_shells(dom, prob.config.operator.n_shells), dec))
    return reps


# ---------------------------------------------------------------------------
# subcommands


def cmd_spectral(cfg: ExperimentConfig, out, timestamp=True, prob=None):
    prob = prob or build_problem(cfg)
    w = CsvWriter(out, cfg, timestamp)
    lam = prob.dec.eigenvalues
    w.write("eigenvalues.csv", ["k", "lambda"], ((k + 1, v) for k, v in enumerate(lam)))
    rep = suite_report(prob.dec, prob.ops, cfg.operator.trials, cfg.operator.seed)
    w.report("operator_suite.csv", [rep])
    return w.written, rep.passed


def _snapshot(w, prob, traj, t_req):
    n = int(np.argmin(np.abs(traj.times - t_req)))
    u = traj.states[n]
    ksu = prob.dec.power_matrix(-traj.config.s) @ u
    X = prob.domain.node_coords
    header = ["x", "u", "ksu"] if X.shape[1] == 1 else ["x", "y", "u", "ksu"]
    rows = (tuple(X[i]) + (u[i], ksu[i]) for i in range(len(u)))
    w.write(f"snapshot_t{traj.times[n]:.6g}.csv", header, rows)


def cmd_solve(cfg: ExperimentConfig, out, timestamp=True, prob=None):
    prob = prob or build_problem(cfg)
    w = CsvWriter(out, cfg, timestamp)
    traj = run(prob.u0, cfg.solver_config(), prob.dec, prob.ops)
    w.write("trajectory.csv", TRAJECTORY_HEADER, trajectory_rows(traj))
    for t in cfg.output.snapshot_times:
        _snapshot(w, prob, traj, t)
    reps = diagnostics_reports(prob, traj)
    w.report_each("diagnostics_", reps)
    return w.written, traj, reps


def cmd_sweep(cfg: ExperimentConfig, out, timestamp=True, jobs=1, prob=None):
    prob = prob or build_problem(cfg)
    w = CsvWriter(out, cfg, timestamp)
    sw = cfg.sweep
    report = limit_sweep(prob.u0, cfg.solver_config(), sw.delta_grid, sw.mu_grid, prob.dec, prob.ops,
                         mode=sw.mode, jobs=jobs)
    w.write("sweep.csv", SWEEP_HEADER,
            ((r["delta"], r["mu"], r["mass_drift"], r["linf_violation"], r["cauchy_diff"]) for r in report.rows()))
    runs = []
    for r in report.runs:
        s = r.trajectory.summary() if r.trajectory is not None else {}
        runs.append((r.delta, r.mu, r.phase, s.get("steps"), s.get("t_final"), s.get("mass_initial"),
                     s.get("mass_final"), s.get("min_u"), s.get("max_u"), s.get("clamps"),
                     s.get("halvings"), s.get("picard_caps"), r.error or ""))
    w.write("runs.csv", RUNS_HEADER, runs)
    return w.written, report


def solver_property_report(prob: Problem) -> dg.CheckReport:
    cfg = prob.config.solver_config()
    dec = prob.dec
    rep = dg.CheckReport("solver")
    zero = np.zeros(prob.domain.n_nodes)
    z1 = imex_step(zero, cfg, dec, prob.ops)
    rep.add("zero_fixed_point", cfg.dt, float(np.max(np.abs(z1))), 0.0, not np.any(z1))
    rep.rows += dg.check_linear_decay(dec, cfg, prob.u0).rows
    short = replace(cfg, t_end=min(cfg.t_end, 5 * cfg.dt))
    a, b = run(prob.u0, short, dec, prob.ops), run(prob.u0, short, dec, prob.ops)
    same = a.states.shape == b.states.shape and bool(np.all(a.states == b.states))
    rep.add("determinism", short.t_end, 0.0 if same else 1.0, 0.0, same)
    return rep


def cmd_verify(cfg: ExperimentConfig, out, timestamp=True, prob=None):
    """Full invariant suite; returns the written files, a pass flag and the failed checks."""
    prob = prob or build_problem(cfg)
    w = CsvWriter(out, cfg, timestamp)
    reps = [suite_report(prob.dec, prob.ops, cfg.operator.trials, cfg.operator.seed),
            solver_property_report(prob)]
    try:
        traj = run(prob.u0, cfg.solver_config(), prob.dec, prob.ops)
        reps += diagnostics_reports(prob, traj)
    except SolverAbort as exc:
        rep = dg.CheckReport("run")
        rep.add("abort", exc.snapshot.times[-1] if exc.snapshot is not None else 0.0, 1.0, 0.0, False)
        reps.append(rep)
        if exc.snapshot is not None and exc.snapshot.n_steps > 0:
            reps.append(dg.check_bounds(exc.snapshot))
    w.report_each("check_", reps)
    w.report("report.csv", reps)
    failed = [r.check for r in reps if not r.passed]
    return w.written, not failed, failed


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
