"""Relaxation-scaled quantum Navier-Stokes-Poisson solver.

Conservative variables ``(rho, m = rho u)`` evolve under

    d_t rho + (1/eps) div m = 0
    d_t m + (1/eps) [div(m (x) u) - div(rho Du) + grad rho^gamma + rho grad V - Bohm(rho)]
        = -m / eps^2,        -Lap V = rho - g.

Time stepping is Strang splitting: exact exponential damping for half a
step, classical RK4 on the flux part, exact damping for the other half.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import quantum
from .errors import StabilityError
from .fields import DiagnosticsRecord, QnspState, mass
from .grid import contract, outer
from .quantum import DEFAULT_FORM, BohmForm
from .timeloop import Trajectory, as_policy, check_finite, record_times

# RK4 reaches about 2.62 along the ray where the linearised flux
# eigenvalues sit (|arg| ~ 120 degrees); keep a small margin.
RK4_RADIUS = 2.5


@dataclass
class QnspRhs:
    d_rho: np.ndarray
    d_m: np.ndarray


def _potential(grid, rho, g):
    # no compatibility check here: RK stages keep the mean exactly
    return grid.ifft((grid.fft(rho) - grid.fft(g)) * grid.inv_k2)


def _rhs_arrays(grid, rho, m, g_hat, eps, gamma, delta, form):
    """Flux derivatives with batched transforms; the Bohm stress is formed on the refined grid."""
    d = grid.dim
    sp = grid.spectral_shape
    r = np.maximum(rho, delta)
    u = m / r
    X = grid.fft(np.concatenate([rho[None], u, m]))
    rho_h, u_h, m_h = X[0], X[1:1 + d], X[1 + d:]
    V_h = (rho_h - g_hat) * grid.inv_k2
    ik = grid.grad_symbols
    Y = grid.ifft(np.concatenate([
        (ik * V_h).reshape((d,) + sp),
        (ik[None, :] * u_h[:, None]).reshape((d * d,) + sp),   # [i, j] = d_j u_i
        (ik * m_h).sum(axis=0)[None],
    ]))
    gV = Y[:d]
    grad_u = Y[d:d + d * d].reshape((d, d) + grid.shape)
    div_m = Y[-1]
    Du = 0.5 * (grad_u + np.swapaxes(grad_u, 0, 1))
    F = outer(m, u, d) - rho * Du
    p = rho ** gamma
    for i in range(d):
        F[i, i] += p
    if form is BohmForm.SQRT_TENSOR_DIV:
        Z = grid.fft(np.concatenate([F.reshape((d * d,) + grid.shape), rho * gV]))
        Z_F = Z[:d * d].reshape((d, d) + sp) - quantum.bohm_stress_hat(grid, rho, delta, rho_hat=rho_h)
        acc = (Z_F * ik[None]).sum(axis=1) + Z[d * d:]
    else:
        force = quantum.bohm_force(grid, r, form, delta)
        Z = grid.fft(np.concatenate([F.reshape((d * d,) + grid.shape), rho * gV - force]))
        acc = (Z[:d * d].reshape((d, d) + sp) * ik[None]).sum(axis=1) + Z[d * d:]
    d_m = -grid.ifft(acc * grid.dealias_mask) / eps
    d_rho = -div_m / eps
    return d_rho, d_m


def qnsp_rhs(state: QnspState, form=DEFAULT_FORM, strict: bool = False) -> QnspRhs:
    """Flux part of the time derivative (the damping is handled by the integrator)."""
    quantum.check_vacuum(state.rho, state.delta_floor, strict)
    d_rho, d_m = _rhs_arrays(state.grid, state.rho, state.m, state.grid.fft(state.g), state.eps,
                             state.gamma, state.delta_floor, BohmForm(form))
    return QnspRhs(d_rho, d_m)


def stable_dt(state: QnspState) -> float:
    """Largest step the explicit flux integrator accepts.

    The linearised flux has eigenvalues of modulus about
    ``(k^2 + c_s^2 + k |u|) / eps`` at the highest retained wavenumber.
    """
    grid = state.grid
    kc = grid.k_cut
    cs2 = state.gamma * float(np.max(np.maximum(state.rho, 0.0))) ** (state.gamma - 1.0)
    umax = float(np.max(np.sqrt(np.sum(state.u ** 2, axis=0))))
    return RK4_RADIUS * state.eps / (kc * kc + cs2 + kc * umax)


def damp(state: QnspState, dt: float) -> QnspState:
    """Exact solution of ``d_t m = -m / eps^2`` over ``dt``."""
    return state.replace(m=state.m * math.exp(-dt / state.eps ** 2))


def _flux_rk4(state, dt, form):
    grid, eps, gam, dl = state.grid, state.eps, state.gamma, state.delta_floor
    g = grid.fft(state.g)
    rho, m = state.rho, state.m

    def f(r, q):
        return _rhs_arrays(grid, r, q, g, eps, gam, dl, form)

    k1r, k1m = f(rho, m)
    k2r, k2m = f(rho + 0.5 * dt * k1r, m + 0.5 * dt * k1m)
    k3r, k3m = f(rho + 0.5 * dt * k2r, m + 0.5 * dt * k2m)
    k4r, k4m = f(rho + dt * k3r, m + dt * k3m)
    rho = rho + dt / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r)
    m = m + dt / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m)
    return rho, m


def qnsp_step(state: QnspState, dt: float, form=DEFAULT_FORM, strict: bool = False,
              dt_max: float | None = None, flux: bool = True) -> QnspState:
    """One Strang step.  ``flux=False`` applies only the damping."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if flux:
        bound = stable_dt(state) if dt_max is None else dt_max
        if dt > bound * (1 + 1e-12):
            raise StabilityError(f"dt = {dt:.3e} exceeds the stability bound {bound:.3e}")
    quantum.check_vacuum(state.rho, state.delta_floor, strict)
    half = damp(state, 0.5 * dt)
    if flux:
        rho, m = _flux_rk4(half, dt, BohmForm(form))
        half = half.replace(rho=rho, m=m)
    out = damp(half, 0.5 * dt)
    check_finite(out.rho, out.m)
    V = _potential(out.grid, out.rho, out.g)
    out = out.replace(V=V, t=state.t + dt)
    if strict:
        quantum.check_vacuum(out.rho, out.delta_floor, True)
    return out


# ----------------------------------------------------------------------
# functionals

def _parts(state: QnspState):
    grid, d = state.grid, state.grid.dim
    r = np.maximum(state.rho, state.delta_floor)
    u = state.m / r
    s = np.sqrt(np.maximum(state.rho, 0.0))
    gs = grid.gradient(s)
    gV = grid.gradient(state.V)
    return grid, d, r, u, gs, gV


def energy_parts(state: QnspState) -> dict:
    grid, d, r, u, gs, gV = _parts(state)
    rho = state.rho
    return {
        "kinetic": float(grid.integrate(0.5 * np.sum(state.m * u, axis=0))),
        "pressure_energy": float(grid.integrate(np.maximum(rho, 0.0) ** state.gamma)) / (state.gamma - 1.0),
        "fisher": float(grid.integrate(np.sum(gs * gs, axis=0))),
        "potential_energy": float(grid.integrate(0.5 * np.sum(gV * gV, axis=0))),
    }


def energy_functional(state: QnspState) -> float:
    """``int (rho|u|^2/2 + rho^gamma/(gamma-1) + 2|grad sqrt rho|^2 + |grad V|^2/2)``."""
    p = energy_parts(state)
    return p["kinetic"] + p["pressure_energy"] + 2.0 * p["fisher"] + p["potential_energy"]


def free_energy_density(rho, delta):
    r = np.maximum(rho, delta)
    return rho * (np.log(r) - 1.0) + 1.0


def bd_entropy_functional(state: QnspState) -> float:
    """``eps * (energy with u replaced by u + grad log rho) + int (rho(log rho - 1) + 1)``."""
    grid = state.grid
    p = energy_parts(state)
    w = quantum.effective_velocity(grid, state.rho, state.u, state.delta_floor)
    kin_w = float(grid.integrate(0.5 * state.rho * np.sum(w * w, axis=0)))
    free = float(grid.integrate(free_energy_density(state.rho, state.delta_floor)))
    return state.eps * (kin_w + p["pressure_energy"] + 2.0 * p["fisher"] + p["potential_energy"]) + free


def dissipation_rates(state: QnspState) -> DiagnosticsRecord:
    """Dissipation integrands of the energy and BD entropy balances.

    Only the ``diss_*`` fields (and ``t``) are filled.
    """
    grid, d, r, u, gs, gV = _parts(state)
    rho = state.rho
    grad_u = grid.gradient(u)
    gT = np.swapaxes(grad_u, 0, 1)
    Du = 0.5 * (grad_u + gT)
    Au = 0.5 * (grad_u - gT)
    hl = grid.hessian(np.log(r))
    gp = grid.gradient(np.maximum(rho, 0.0) ** (0.5 * state.gamma))
    return DiagnosticsRecord(
        t=state.t,
        diss_visc=float(grid.integrate(rho * contract(Du, Du, d))),
        diss_antisym=float(grid.integrate(rho * contract(Au, Au, d))),
        diss_damp=float(grid.integrate(np.sum(state.m * u, axis=0))),
        diss_log=float(grid.integrate(rho * contract(hl, hl, d))),
        diss_pressure=float(grid.integrate(np.sum(gp * gp, axis=0))),
        diss_charge=float(grid.integrate(rho * (rho - state.g))),
    )


def energy_dissipation(rec: DiagnosticsRecord, eps: float) -> float:
    return rec.diss_visc / eps + rec.diss_damp / eps ** 2


def bd_dissipation(rec: DiagnosticsRecord, eps: float, gamma: float) -> float:
    return (rec.diss_antisym + rec.diss_log + 4.0 / gamma * rec.diss_pressure
            + rec.diss_charge + rec.diss_damp / eps)


def diagnostics(state: QnspState, rates: DiagnosticsRecord | None = None) -> DiagnosticsRecord:
    """Full record for one state (cumulative columns left as NaN)."""
    grid = state.grid
    rec = rates if rates is not None else dissipation_rates(state)
    p = energy_parts(state)
    app = quantum.appendix_inequality_check(grid, state.rho, state.delta_floor)
    hV = grid.hessian(state.V)
    out = DiagnosticsRecord(**rec.to_dict())
    out.t = state.t
    out.mass = mass(grid, state.rho)
    out.energy = p["kinetic"] + p["pressure_energy"] + 2.0 * p["fisher"] + p["potential_energy"]
    out.bd_entropy = bd_entropy_functional(state)
    out.fisher = p["fisher"]
    out.pressure_energy = p["pressure_energy"]
    out.potential_energy = p["potential_energy"]
    out.kinetic = p["kinetic"]
    out.free_energy = float(grid.integrate(free_energy_density(state.rho, state.delta_floor)))
    out.appendixA_lhs = app.lhs_quartic + app.lhs_hessian
    out.appendixA_rhs = app.rhs
    out.rho_gamma = float(grid.integrate(np.maximum(state.rho, 0.0) ** state.gamma))
    out.hess_V = float(grid.integrate(contract(hV, hV, grid.dim)))
    out.min_rho = float(np.min(state.rho))
    return out


# ----------------------------------------------------------------------
# driver

def qnsp_run(state0: QnspState, t_end: float, dt_policy=None, record_every: float | None = None,
             form=DEFAULT_FORM, strict: bool = False, keep_snapshots: bool = True):
    """Advance to ``t_end`` and return ``(trajectory, records)``.

    Dissipation rates are integrated in time with the trapezoid rule on
    every step, so the balance defects in the records converge with the
    step size.  Records are taken at ``t0 + j*record_every`` and at
    ``t_end``; steps are shortened to hit those times exactly.
    """
    policy = as_policy(dt_policy)
    form = BohmForm(form)
    if strict:
        quantum.check_vacuum(state0.rho, state0.delta_floor, True)
    traj = Trajectory(grid=state0.grid, m=[], eps=state0.eps, gamma=state0.gamma,
                      g=state0.g, delta_floor=state0.delta_floor)
    state = state0
    rates = dissipation_rates(state)
    first = diagnostics(state, rates)
    E0, B0 = first.energy, first.bd_entropy
    cum_e = cum_b = cum_d = 0.0

    def finish(rec):
        rec.cum_energy_diss = cum_e
        rec.cum_bd_diss = cum_b
        rec.cum_damp_scaled = cum_d
        rec.energy_defect = rec.energy + cum_e - E0
        rec.bd_defect = rec.bd_entropy + cum_b - B0
        return rec

    records = [finish(first)]
    if keep_snapshots:
        traj.append(state)
    eps, gam = state0.eps, state0.gamma
    for target in record_times(state0.t, t_end, record_every):
        while state.t < target - 1e-13 * max(1.0, abs(target)):
            bound = stable_dt(state)
            dt = policy.dt if policy.dt is not None else policy.cfl * bound
            if dt > bound * (1 + 1e-12):
                raise StabilityError(f"dt = {dt:.3e} exceeds the stability bound {bound:.3e}")
            land = target - state.t <= dt * (1 + 1e-9)
            if land:
                dt = target - state.t
            new = qnsp_step(state, dt, form=form, strict=strict, dt_max=bound)
            if land:
                new.t = target
            new_rates = dissipation_rates(new)
            h = 0.5 * dt
            cum_e += h * (energy_dissipation(rates, eps) + energy_dissipation(new_rates, eps))
            cum_b += h * (bd_dissipation(rates, eps, gam) + bd_dissipation(new_rates, eps, gam))
            cum_d += h * (rates.diss_damp + new_rates.diss_damp) / eps ** 2
            state, rates = new, new_rates
        records.append(finish(diagnostics(state, rates)))
        if keep_snapshots:
            traj.append(state)
    if not keep_snapshots:
        traj.append(state)
    return traj, records
