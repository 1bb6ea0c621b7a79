"""IMEX time stepping of the regularized degenerate nonlocal problem

    du/dt - delta div(A grad u) = div((mu + u) A grad K_s u)

with u = 0 on Gamma_0 and the combined conormal flux vanishing on Gamma_1
(imposed weakly, no boundary term).  The viscous part is implicit, the
nonlocal transport explicit.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .mesh import AssembledOperators
from .spectral import SpectralDecomposition, check_exponent

log = logging.getLogger(__name__)


class SolverAbort(RuntimeError):
    """Raised when a step is rejected and no halving is left; carries the
    partial trajectory in ``snapshot``."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass(frozen=True)
class SolverConfig:
    s: float = 0.5
    delta: float = 1e-2
    mu: float = 1e-2
    dt: float = 1e-4
    t_end: float = 0.1
    picard_iters: int = 0
    picard_tol: float = 1e-10
    adapt: bool = False
    mass_mode: str = "lumped"
    # relative to ||u0||_inf; None -> defaults below
    tol_neg: float | None = None
    tol_pos: float | None = None
    regularize_data: bool = True
    replay: bool = False
    max_halvings: int = 10

    def __post_init__(self):
        check_exponent(self.s)
        if not self.dt > 0 or not self.t_end > 0:
            raise ValueError("dt and t_end must be positive")
        if not 0.0 < self.mu <= 1.0:
            raise ValueError(f"mu must lie in (0,1], got {self.mu}")
        if self.replay:
            if self.delta < 0:
                raise ValueError("delta must be >= 0")
            if self.picard_iters < 1:
                raise ValueError("limit replay (delta = 0) requires picard_iters >= 1")
        elif not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0,1], got {self.delta}")
        if self.picard_iters < 0:
            raise ValueError("picard_iters must be >= 0")
        if self.mass_mode not in ("lumped", "consistent"):
            raise ValueError(f"unknown mass_mode {self.mass_mode!r}")

    def tolerances(self, u0_sup: float) -> tuple[float, float]:
        neg = 1e-8 if self.tol_neg is None else self.tol_neg
        pos = 1e-6 if self.tol_pos is None else self.tol_pos
        return neg * u0_sup, pos * u0_sup


@dataclass
class StateTrajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, n_nodes)
    ledgers: dict
    config: SolverConfig
    u0: np.ndarray  # data before regularization
    adapt_log: list = field(default_factory=list)
    picard_caps: int = 0
    experimental: bool = False

    @property
    def u_start(self) -> np.ndarray:
        return self.states[0]

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def summary(self) -> dict:
        led = self.ledgers
        return {
            "steps": self.n_steps,
            "t_final": float(self.times[-1]),
            "mass_initial": float(led["mass"][0]),
            "mass_final": float(led["mass"][-1]),
            "min_u": float(np.min(led["min_u"])),
            "max_u": float(np.max(led["max_u"])),
            "clamps": int(np.sum(led["clamp_count"])),
            "halvings": len(self.adapt_log),
            "picard_caps": self.picard_caps,
        }


def eta(lam, mu: float):
    """Entropy density (lam + mu) log(1 + lam/mu) - lam."""
    lam = np.asarray(lam, dtype=float)
    return (lam + mu) * np.log1p(lam / mu) - lam


def regularize_initial(u0: np.ndarray, mu: float) -> np.ndarray:
    """Scale data so that u0d + mu <= ||u0||_inf; u0d -> u0 as mu -> 0."""
    sup = float(np.max(np.abs(u0)))
    if sup == 0.0:
        return u0.copy()
    return (1.0 - mu / sup) * u0


def check_initial(u0, ops: AssembledOperators) -> np.ndarray:
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (ops.domain.n_nodes,):
        raise ValueError("initial data has wrong length")
    if not np.all(np.isfinite(u0)):
        raise ValueError("initial data not finite")
    if np.any(u0 < 0):
        raise ValueError("initial data must be non-negative")
    if np.any(u0[ops.domain.gamma0_nodes] != 0):
        raise ValueError("initial data must vanish on Gamma_0")
    return u0


def flux_form(dec: SpectralDecomposition, ops: AssembledOperators, s: float, mu: float,
              u: np.ndarray, return_clamps: bool = False):
    """Load vector B_i = sum_e int_e (mu + u_e) A_e grad(K_s u) . grad phi_i.

    ``u_e`` is the element average; negative (mu + u_e) is clamped to zero.
    """
    dom = ops.domain
    ksu = dec.power_matrix(-s) @ u
    grad = dom.element_gradient(ksu)
    weight = mu + dom.element_average(u)
    clamps = int(np.count_nonzero(weight < 0))
    weight = np.maximum(weight, 0.0)
    q = weight[:, None] * np.einsum("edf,ef->ed", ops.coeff.matrices, grad)
    local = dom.volumes[:, None] * np.einsum("ed,ead->ea", q, dom.grads)
    B = np.bincount(dom.elements.ravel(), weights=local.ravel(), minlength=dom.n_nodes)
    if return_clamps:
        return B, clamps
    return B


class _Stepper:
    """Caches the Cholesky factor of (M/dt + delta K_A) on free DOFs per dt."""

    def __init__(self, dec, ops, config):
        self.dec, self.ops, self.config = dec, ops, config
        self.free = ops.free_dofs
        self.Mf = ops.restrict(ops.M).toarray()
        self.Kf = ops.restrict(ops.K_A).toarray()
        self._factors = {}

    def factor(self, dt):
        fac = self._factors.get(dt)
        if fac is None:
            fac = sla.cho_factor(self.Mf / dt + self.config.delta * self.Kf)
            self._factors[dt] = fac
        return fac

    def step(self, u, dt, transport=True):
        cfg, f = self.config, self.free
        fac = self.factor(dt)
        base = self.Mf @ u[f] / dt
        if transport:
            B, clamps = flux_form(self.dec, self.ops, cfg.s, cfg.mu, u, return_clamps=True)
        else:
            B, clamps = np.zeros_like(u), 0
        new = np.zeros_like(u)
        new[f] = sla.cho_solve(fac, base - B[f], check_finite=False)
        iters, capped = 0, False
        if transport and cfg.picard_iters > 0:
            for iters in range(1, cfg.picard_iters + 1):
                B, clamps = flux_form(self.dec, self.ops, cfg.s, cfg.mu, new, return_clamps=True)
                nxt = np.zeros_like(u)
                nxt[f] = sla.cho_solve(fac, base - B[f], check_finite=False)
                diff = nxt - new
                new = nxt
                if math.sqrt(diff @ (self.ops.M @ diff)) < cfg.picard_tol:
                    break
            else:
                capped = True
        return new, {"clamps": clamps, "picard_iters": iters, "picard_capped": capped, "B": B}


def imex_step(u, config: SolverConfig, dec: SpectralDecomposition, ops: AssembledOperators | None = None,
              dt: float | None = None, transport: bool = True) -> np.ndarray:
    """One step of (M/dt + delta K_A) u1 = M u0/dt - B(u0) on free DOFs."""
    ops = ops or dec.source
    new, _ = _Stepper(dec, ops, config).step(np.asarray(u, dtype=float), dt or config.dt, transport)
    if not np.all(np.isfinite(new)):
        raise FloatingPointError("non-finite step result")
    return new


def _ledger_row(u, dec, ops, cfg, w):
    c = dec.coefficients(u, warn=False)
    return {
        "mass": float(np.sum(ops.M @ u)),
        "min_u": float(u.min()),
        "max_u": float(u.max()),
        "entropy": float(w @ eta(u, cfg.mu)),
        "hs_energy": float(0.5 * np.sum(dec.eigenvalues ** (-cfg.s) * c * c)),
    }


def run(u0, config: SolverConfig, dec: SpectralDecomposition, ops: AssembledOperators | None = None,
        transport: bool = True) -> StateTrajectory:
    """Integrate from t = 0 to ``config.t_end``.

    With ``config.adapt`` a step whose result leaves
    [-tol_neg, ||u0||_inf - mu + tol_pos] is retried with dt halved; the
    reduced dt is kept afterwards.
    """
    ops = ops or dec.source
    u0 = check_initial(u0, ops)
    cfg = config
    if cfg.mass_mode != ops.mass_mode:
        raise ValueError("config.mass_mode does not match the assembled operators")
    sup = float(np.max(u0))
    start = regularize_initial(u0, cfg.mu) if cfg.regularize_data else u0.copy()
    tol_neg, tol_pos = cfg.tolerances(sup)
    stepper = _Stepper(dec, ops, cfg)
    w = ops.lumped_weights

    times, states = [0.0], [start]
    led = {k: [v] for k, v in _ledger_row(start, dec, ops, cfg, w).items()}
    led["clamp_count"] = [0]
    led["flux_norm"] = [0.0]
    led["rate_norm"] = [0.0]
    adapt_log, caps = [], 0

    t, u, dt = 0.0, start, cfg.dt
    halvings = 0
    eps = 1e-12 * cfg.t_end
    while t < cfg.t_end - eps:
        h = min(dt, cfg.t_end - t)
        new, info = stepper.step(u, h, transport)
        reason = None
        if not np.all(np.isfinite(new)):
            reason = "non-finite"
        elif cfg.adapt:
            if new.min() < -tol_neg:
                reason = "undershoot"
            elif new.max() + cfg.mu > sup + tol_pos:
                reason = "overshoot"
        if reason is not None:
            if not cfg.adapt or halvings >= cfg.max_halvings:
                traj = _finish(times, states, led, cfg, u0, adapt_log, caps)
                raise SolverAbort(f"step rejected at t={t:.6g} ({reason}) after {halvings} halvings", traj)
            halvings += 1
            adapt_log.append({"t": t, "dt": dt, "reason": reason})
            log.debug("halving dt at t=%g (%s)", t, reason)
            dt *= 0.5
            continue
        halvings = 0
        caps += int(info["picard_capped"])
        rate = (new - u) / h
        t = t + h
        u = new
        times.append(t)
        states.append(u)
        for k, v in _ledger_row(u, dec, ops, cfg, w).items():
            led[k].append(v)
        led["clamp_count"].append(info["clamps"])
        Bf = info["B"][ops.free_dofs]
        led["flux_norm"].append(float(np.linalg.norm(Bf)))
        led["rate_norm"].append(float(np.sqrt(rate @ (ops.M @ rate))))
    return _finish(times, states, led, cfg, u0, adapt_log, caps)


def _finish(times, states, led, cfg, u0, adapt_log, caps):
    return StateTrajectory(
        times=np.array(times),
        states=np.array(states),
        ledgers={k: np.array(v) for k, v in led.items()},
        config=cfg,
        u0=u0,
        adapt_log=adapt_log,
        picard_caps=caps,
        experimental=cfg.replay,
    )


# ---------------------------------------------------------------------------
# double-limit sweep


@dataclass
class SweepRun:
    delta: float
    mu: float
    phase: str
    mass_drift: float = float("nan")
    linf_violation: float = float("nan")
    cauchy_diff: float = float("nan")
    error: str | None = None
    trajectory: StateTrajectory | None = None


@dataclass
class SweepReport:
    runs: list

    def rows(self):
        for r in self.runs:
            yield {"delta": r.delta, "mu": r.mu, "mass_drift": r.mass_drift,
                   "linf_violation": r.linf_violation, "cauchy_diff": r.cauchy_diff}

    def phase(self, name):
        return [r for r in self.runs if r.phase == name]

    @property
    def final_run(self) -> SweepRun:
        ok = [r for r in self.runs if r.trajectory is not None]
        return min(ok, key=lambda r: (r.delta + r.mu, r.delta))


def max_mass_drift(traj: StateTrajectory) -> float:
    m = traj.ledgers["mass"]
    if m[0] == 0.0:
        return 0.0
    return float(np.max(np.abs(m - m[0])) / abs(m[0]))


def linf_violation(traj: StateTrajectory) -> float:
    sup = float(np.max(traj.u0))
    under = max(0.0, -float(np.min(traj.ledgers["min_u"])))
    over = max(float(np.max(traj.ledgers["max_u"])) + traj.config.mu - sup, 0.0)
    return max(under, over)


def _resample(traj, times):
    st = traj.states
    if st.shape[0] == len(times) and np.allclose(traj.times, times, rtol=0, atol=1e-14):
        return st
    return np.stack([np.interp(times, traj.times, st[:, j]) for j in range(st.shape[1])], axis=1)


def spacetime_l2(ops: AssembledOperators, a: StateTrajectory, b: StateTrajectory) -> float:
    """L2(Omega_T) distance, trapezoid in time on the first run's grid."""
    times = a.times
    d = _resample(a, times) - _resample(b, times)
    dens = np.einsum("ti,ti->t", d, (ops.M @ d.T).T)
    return float(np.sqrt(np.trapezoid(dens, times)))


def _one_run(args):
    u0, cfg, dec, ops = args
    try:
        return run(u0, cfg, dec, ops), None
    except (SolverAbort, FloatingPointError, ValueError) as exc:
        return None, str(exc)


def limit_sweep(u0, base_config: SolverConfig, delta_grid, mu_grid, dec: SpectralDecomposition,
                ops: AssembledOperators | None = None, mode: str = "staged", jobs: int = 1) -> SweepReport:
    """Runs for the vanishing-viscosity / flux-regularization limits.

    ``staged``: sweep delta_grid at mu = base_config.mu, then mu_grid at the
    smallest delta.  ``diagonal``: (delta_grid[i], mu_grid[i]) pairs.
    Cauchy differences compare consecutive runs inside a phase.
    """
    ops = ops or dec.source
    for name, grid in (("delta_grid", delta_grid), ("mu_grid", mu_grid)):
        if any(b >= a for a, b in zip(grid, grid[1:])):
            raise ValueError(f"{name} must be strictly decreasing")
    if mode == "staged":
        plan = [(d, base_config.mu, "delta") for d in delta_grid]
        plan += [(min(delta_grid), m, "mu") for m in mu_grid]
    elif mode == "diagonal":
        if len(delta_grid) != len(mu_grid):
            raise ValueError("diagonal sweep needs grids of equal length")
        plan = [(d, m, "diagonal") for d, m in zip(delta_grid, mu_grid)]
    else:
        raise ValueError(f"unknown sweep mode {mode!r}")

    tasks = [(u0, replace(base_config, delta=d, mu=m), dec, ops) for d, m, _ in plan]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run, tasks))
    else:
        results = [_one_run(t) for t in tasks]

    runs = []
    for (d, m, phase), (traj, err) in zip(plan, results):
        r = SweepRun(d, m, phase, error=err, trajectory=traj)
        if traj is not None:
            r.mass_drift = max_mass_drift(traj)
            r.linf_violation = linf_violation(traj)
            prev = runs[-1] if runs and runs[-1].phase == phase else None
            if prev is not None and prev.trajectory is not None:
                r.cauchy_diff = spacetime_l2(ops, prev.trajectory, traj)
        runs.append(r)
    return SweepReport(runs)


def config_dict(cfg: SolverConfig) -> dict:
    return asdict(cfg)
