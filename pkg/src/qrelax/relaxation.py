"""The eps-sweep: QNSP runs at decreasing eps compared with one QDD run."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import qdd as qdd_mod
from . import qnsp as qnsp_mod
from .errors import DegenerateError, MismatchError, NumericalError
from .fields import QddState, QnspState, project_doping
from .grid import make_grid
from .quantum import bohm_stress
from .timeloop import DtPolicy, Trajectory


def hilbert_velocity(grid, rho, V, gamma: float, eps: float, delta: float):
    """First term of the Hilbert expansion, ``eps (2 grad(Lap s/s) - gamma rho^(gamma-2) grad rho - grad V)``."""
    return eps * qdd_mod.qdd_velocity(grid, rho, V, gamma, delta)


def _same_times(a: Trajectory, b: Trajectory):
    if a.grid != b.grid:
        raise MismatchError("trajectories live on different grids")
    ta, tb = a.times, b.times
    if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=0.0, atol=1e-12):
        raise MismatchError(f"snapshot times differ ({len(ta)} vs {len(tb)} snapshots)")
    return ta


def trapezoid_weights(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.size < 2:
        return np.ones_like(t)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def error_norm(traj_eps: Trajectory, traj_qdd: Trajectory) -> tuple[float, float]:
    """``(err_rho, err_V)``.

    ``err_rho`` is the trapezoid-in-time ``L2(0,T; H1)`` distance of the
    square-root densities; ``err_V`` the largest ``L2`` distance of the
    fields ``grad V`` over the snapshots.  A single snapshot gets weight 1.
    """
    t = _same_times(traj_eps, traj_qdd)
    grid = traj_eps.grid
    w = trapezoid_weights(t)
    acc = 0.0
    ev = 0.0
    for wi, ra, rb, va, vb in zip(w, traj_eps.rho, traj_qdd.rho, traj_eps.V, traj_qdd.V):
        diff = np.sqrt(np.maximum(ra, 0.0)) - np.sqrt(np.maximum(rb, 0.0))
        acc += wi * grid.norm(diff, "H1") ** 2
        ev = max(ev, grid.norm(grid.gradient(va - vb), "L2"))
    return math.sqrt(acc), ev


def lambda_residual(grid, rho, m, V, eps, gamma, delta) -> float:
    """Dual-norm residual of ``m/eps = div(2 s Hess s - 2 grad s (x) grad s - rho^gamma I) - rho grad V``."""
    T = bohm_stress(grid, rho, delta)
    p = np.maximum(rho, 0.0) ** gamma
    for i in range(grid.dim):
        T[i, i] -= p
    target = grid.divergence(T) - rho * grid.gradient(V)
    return grid.negative_norm(m / eps - target)


def lambda_recovery(traj_eps: Trajectory) -> float:
    """Time average (trapezoid) of :func:`lambda_residual` over the snapshots."""
    if traj_eps.m is None or traj_eps.eps is None:
        raise MismatchError("trajectory carries no momentum data")
    grid = traj_eps.grid
    vals = np.array([
        lambda_residual(grid, r, m, V, traj_eps.eps, traj_eps.gamma, traj_eps.delta_floor)
        for r, m, V in zip(traj_eps.rho, traj_eps.m, traj_eps.V)
    ])
    t = traj_eps.times
    if t.size < 2 or t[-1] == t[0]:
        return float(vals.mean())
    return float(np.sum(trapezoid_weights(t) * vals) / (t[-1] - t[0]))


def fit_rate(eps_list, err_list) -> float:
    """Least-squares slope of ``log err`` against ``log eps``."""
    e = np.asarray(eps_list, dtype=float)
    r = np.asarray(err_list, dtype=float)
    if e.size < 3 or r.size != e.size:
        raise DegenerateError("need at least three (eps, err) pairs")
    if np.any(e <= 0) or np.any(~(r > 0)):
        raise DegenerateError("eps and errors must be positive for a log-log fit")
    slope = np.polyfit(np.log(e), np.log(r), 1)[0]
    return float(slope)


# ----------------------------------------------------------------------
# sweep

BOUND_KEYS = ("sup_mass", "sup_kinetic", "sup_fisher", "sup_rho_gamma", "sup_hess_V", "damp_integral")


@dataclass
class SweepConfig:
    rho0: np.ndarray
    g: np.ndarray
    eps_list: list
    t_end: float
    record_every: float
    dim: int = 1
    n: int = 128
    length: float = 1.0
    gamma: float = 2.0
    preparation: str = "ill"          # "ill" (u0 = 0) or "well" (Hilbert velocity)
    cfl: float = 0.4
    qdd_dt: float | None = None       # None: automatic step
    delta_floor: float | None = None

    def __post_init__(self):
        if self.preparation not in ("ill", "well"):
            raise ValueError("preparation must be 'ill' or 'well'")
        eps = list(self.eps_list)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("eps_list must contain positive values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be strictly decreasing")


@dataclass
class SweepReport:
    eps_list: list
    err_rho: list
    err_V: list
    err_lambda: list
    fitted_rate: float
    fitted_rate_V: float
    bounds_table: list
    inheritance_table: list
    qdd_final: dict
    preparation: str
    partial: bool = False
    failures: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        return cls(**d)


def _grid_and_data(cfg: SweepConfig):
    grid = make_grid(cfg.dim, cfg.n, cfg.length)
    rho0 = np.asarray(cfg.rho0, dtype=float).reshape(grid.shape)
    g = project_doping(grid, np.asarray(cfg.g, dtype=float).reshape(grid.shape), rho0)
    delta = cfg.delta_floor if cfg.delta_floor is not None else 1e-8 * float(rho0.max())
    return grid, rho0, g, delta


def initial_qnsp_state(cfg: SweepConfig, eps: float) -> QnspState:
    grid, rho0, g, delta = _grid_and_data(cfg)
    state = QnspState.create(grid, rho0, g, eps=eps, gamma=cfg.gamma, delta_floor=delta)
    if cfg.preparation == "well":
        u = hilbert_velocity(grid, rho0, state.V, cfg.gamma, eps, delta)
        state = state.replace(m=rho0 * u)
    return state


def run_qdd_reference(cfg: SweepConfig):
    grid, rho0, g, delta = _grid_and_data(cfg)
    state = QddState.create(grid, rho0, g, gamma=cfg.gamma, delta_floor=delta)
    policy = DtPolicy(cfl=cfg.cfl, dt=cfg.qdd_dt)
    return qdd_mod.qdd_run(state, cfg.t_end, policy, cfg.record_every)


def run_qnsp_member(cfg: SweepConfig, eps: float):
    state = initial_qnsp_state(cfg, eps)
    return qnsp_mod.qnsp_run(state, cfg.t_end, DtPolicy(cfl=cfg.cfl), cfg.record_every)


def _bounds_row(eps, records):
    return {
        "eps": eps,
        "sup_mass": max(r.mass for r in records),
        "sup_kinetic": max(2.0 * r.kinetic for r in records),
        "sup_fisher": max(r.fisher for r in records),
        "sup_rho_gamma": max(r.rho_gamma for r in records),
        "sup_hess_V": max(r.hess_V for r in records),
        "damp_integral": records[-1].cum_damp_scaled,
        "sup_free_energy": max(r.free_energy for r in records),
        "fisher_bound": 0.5 * records[0].energy,
        "free_energy_bound": records[0].bd_entropy,
    }


def _member(args):
    cfg, eps = args
    try:
        traj, recs = run_qnsp_member(cfg, eps)
        return eps, traj, recs, None
    except NumericalError as exc:
        return eps, None, None, f"{type(exc).__name__}: {exc}"


def run_sweep(cfg: SweepConfig, sequential: bool = True, workers: int | None = None,
              reference=None, on_member=None) -> SweepReport:
    """Run QDD once and QNSP for every eps; assemble the report.

    ``reference`` may carry a precomputed QDD ``(trajectory, records)``.
    ``on_member(eps, trajectory, records)`` is called as each run finishes.
    Runs that fail numerically are listed in ``failures`` and their error
    entries are NaN.
    """
    ref_traj, ref_recs = reference if reference is not None else run_qdd_reference(cfg)
    jobs = [(cfg, e) for e in cfg.eps_list]
    if sequential or (workers is not None and workers <= 1):
        results = [_member(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_member, jobs))

    err_rho, err_V, err_lam, bounds, inherit = [], [], [], [], []
    failures = {}
    for eps, traj, recs, err in results:
        if on_member is not None and traj is not None:
            on_member(eps, traj, recs)
        if err is not None:
            failures[str(eps)] = err
            err_rho.append(float("nan"))
            err_V.append(float("nan"))
            err_lam.append(float("nan"))
            continue
        a, b = error_norm(traj, ref_traj)
        err_rho.append(a)
        err_V.append(b)
        err_lam.append(lambda_recovery(traj))
        bounds.append(_bounds_row(eps, recs))
        last = recs[-1]
        inherit.append({
            "eps": eps,
            "energy": last.energy,
            "bd_entropy": last.bd_entropy,
            "fisher": last.fisher,
            "free_energy": last.free_energy,
            "cum_energy_diss": last.cum_energy_diss,
            "cum_bd_diss": last.cum_bd_diss,
            "energy_defect": last.energy_defect,
            "bd_defect": last.bd_defect,
        })
    qlast = ref_recs[-1]
    qdd_final = {
        "qdd_energy": qlast.energy,
        "free_energy": qlast.free_energy,
        "fisher": qlast.fisher,
        "cum_energy_diss": qlast.cum_energy_diss,
        "cum_free_energy_diss": qlast.cum_bd_diss,
        "energy_defect": qlast.energy_defect,
        "free_energy_defect": qlast.bd_defect,
    }

    def rate(errs):
        ok = [(e, r) for e, r in zip(cfg.eps_list, errs) if r > 0]
        if len(ok) < 3:
            return float("nan")
        return fit_rate([e for e, _ in ok], [r for _, r in ok])

    return SweepReport(
        eps_list=[float(e) for e in cfg.eps_list],
        err_rho=err_rho,
        err_V=err_V,
        err_lambda=err_lam,
        fitted_rate=rate(err_rho),
        fitted_rate_V=rate(err_V),
        bounds_table=bounds,
        inheritance_table=inherit,
        qdd_final=qdd_final,
        preparation=cfg.preparation,
        partial=bool(failures),
        failures=failures,
    )


def bound_variation(report: SweepReport) -> dict:
    """For each bound, ``max over eps / value at the largest eps``.

    Values are taken as running suprema from the largest eps downwards,
    so the ratio measures growth as eps decreases.
    """
    rows = report.bounds_table
    out = {}
    for key in BOUND_KEYS:
        vals = [r[key] for r in rows]
        base = vals[0]
        out[key] = float(max(vals) / base) if base > 0 else float("inf")
    return out
