"""Quantum drift-diffusion-Poisson solver.

    d_t rho = -div( div(2 s Hess s - 2 grad s (x) grad s) - grad rho^gamma - rho grad V ),
    -Lap V = rho - g,   s = sqrt(rho).

The equation is fourth order and stiff (the spectral radius grows like
``k^4``), so it is integrated with a two-stage, L-stable, stiffly accurate
SDIRK method.  Each stage is solved by simplified Newton iteration with a
dense finite-difference Jacobian frozen over the step.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from . import quantum
from .errors import PositivityError, StabilityError
from .fields import DiagnosticsRecord, QddState, mass
from .grid import contract
from .qnsp import free_energy_density
from .quantum import DEFAULT_FORM, BohmForm
from .timeloop import Trajectory, as_policy, check_finite, record_times

SDIRK_GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
NEWTON_MAXITER = 30
NEWTON_RTOL = 1e-14
JACOBIAN_STEP = 1e-7
MAX_DENSE_UNKNOWNS = 4096
# initial step: fraction of the slowest-mode relaxation time
AUTO_DT_FRACTION = 0.025
# local error tolerance of the automatic policy, per unit of cfl
AUTO_RTOL_PER_CFL = 2.5e-7
MAX_REJECTS = 40


def _rhs_arrays(grid, rho, g_hat, gamma, delta, form=DEFAULT_FORM):
    """Right-hand side for ``rho`` of shape ``(..., *grid.shape)``."""
    d = grid.dim
    r = np.maximum(rho, delta)
    ik = grid.grad_symbols
    rho_h = grid.fft(rho)
    V_h = (rho_h - g_hat) * grid.inv_k2
    gV = grid.ifft(np.expand_dims(V_h, -d - 1) * ik)
    if form is BohmForm.SQRT_TENSOR_DIV:
        T_h = quantum.bohm_stress_hat(grid, rho, delta, rho_hat=rho_h)
        p_h = grid.fft(rho ** gamma)
        for i in range(d):
            T_h[(Ellipsis, i, i) + (slice(None),) * d] -= p_h
        flux_h = (T_h * ik).sum(axis=-d - 1) - grid.fft(np.expand_dims(rho, -d - 1) * gV)
    else:
        force = quantum.bohm_force(grid, r, form, delta)
        flux_h = grid.fft(force - np.expand_dims(rho, -d - 1) * gV) \
            - np.expand_dims(grid.fft(rho ** gamma), -d - 1) * ik
    flux_h = flux_h * grid.dealias_mask
    return -grid.ifft((flux_h * ik).sum(axis=-d - 1))


def qdd_rhs(state: QddState, form=DEFAULT_FORM, strict: bool = False):
    quantum.check_vacuum(state.rho, state.delta_floor, strict)
    return _rhs_arrays(state.grid, state.rho, state.grid.fft(state.g), state.gamma,
                       state.delta_floor, BohmForm(form))


def auto_dt(state: QddState, cfl: float = 0.4) -> float:
    """Initial step of the automatic policy.

    Accuracy, not stability, limits the implicit integrator, so the step
    starts at a fixed fraction of ``1/lambda_1``, where ``lambda_1`` is the
    decay rate of the first Fourier mode about the mean density, and is
    then adapted by local error control.
    """
    k1 = 2.0 * math.pi / state.grid.length
    rbar = float(state.grid.mean(state.rho))
    lam = k1 ** 4 + state.gamma * rbar ** (state.gamma - 1.0) * k1 ** 2 + rbar
    return cfl * AUTO_DT_FRACTION / lam


def _jacobian(grid, rho, f0, g_hat, gamma, delta, form):
    n = rho.size
    eye = np.eye(n).reshape((n,) + grid.shape)
    fp = _rhs_arrays(grid, rho[None] + JACOBIAN_STEP * eye, g_hat, gamma, delta, form)
    return ((fp - f0[None]) / JACOBIAN_STEP).reshape(n, n).T


def _sdirk_step(state: QddState, dt: float, form: BohmForm, strict: bool):
    """One SDIRK2 step; returns the new state and a local error estimate.

    The estimate compares the method with its first-order companion and
    is filtered through ``(I - gamma dt J)^-1`` so stiff components do
    not inflate it.
    """
    grid = state.grid
    quantum.check_vacuum(state.rho, state.delta_floor, strict)
    n = state.rho.size
    if n > MAX_DENSE_UNKNOWNS:
        raise StabilityError(f"{n} unknowns exceed the dense Newton limit {MAX_DENSE_UNKNOWNS}")
    g_hat = grid.fft(state.g)
    args = (g_hat, state.gamma, state.delta_floor, form)
    a = SDIRK_GAMMA
    rho0 = state.rho
    f0 = _rhs_arrays(grid, rho0, *args)
    J = _jacobian(grid, rho0, f0, *args)
    if not np.all(np.isfinite(J)):
        raise StabilityError(f"non-finite Jacobian at t = {state.t:.6g}")
    lu = sla.lu_factor(np.eye(n) - a * dt * J)

    def stage(base, guess):
        Y = guess
        fY = _rhs_arrays(grid, Y, *args)
        for _ in range(NEWTON_MAXITER):
            res = Y - base - a * dt * fY
            if not np.all(np.isfinite(res)):
                break
            step = sla.lu_solve(lu, -res.ravel()).reshape(grid.shape)
            Y = Y + step
            if not np.all(np.isfinite(Y)):
                break
            fY = _rhs_arrays(grid, Y, *args)
            if np.max(np.abs(step)) <= NEWTON_RTOL * np.max(np.abs(Y)):
                return Y, fY
        raise StabilityError(f"Newton iteration did not converge at t = {state.t:.6g}, dt = {dt:.3e}")

    Y1, f1 = stage(rho0, rho0 + a * dt * f0)
    Y2, f2 = stage(rho0 + (1.0 - a) * dt * f1, Y1 + (1.0 - a) * dt * f1)
    check_finite(Y2)
    if float(np.min(Y2)) < 0.5 * state.delta_floor:
        raise PositivityError(f"min(rho) = {float(np.min(Y2)):.3e} below half the floor at t = {state.t + dt:.6g}")
    est = sla.lu_solve(lu, (a * dt * (f2 - f1)).ravel())
    err = float(np.max(np.abs(est))) / max(1.0, float(np.max(np.abs(Y2))))
    V = grid.ifft((grid.fft(Y2) - g_hat) * grid.inv_k2)
    out = state.replace(rho=Y2, V=V, t=state.t + dt)
    if strict:
        quantum.check_vacuum(out.rho, out.delta_floor, True)
    return out, err


def qdd_step(state: QddState, dt: float, form=DEFAULT_FORM, strict: bool = False) -> QddState:
    """One SDIRK2 step (``gamma = 1 - 1/sqrt 2``, stiffly accurate)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return _sdirk_step(state, dt, BohmForm(form), strict)[0]


# ----------------------------------------------------------------------
# functionals

def qdd_energy(state: QddState) -> float:
    """``int (2|grad sqrt rho|^2 + rho^gamma/(gamma-1) + |grad V|^2/2)``."""
    grid = state.grid
    gs = grid.gradient(np.sqrt(np.maximum(state.rho, 0.0)))
    gV = grid.gradient(state.V)
    return float(grid.integrate(2.0 * np.sum(gs * gs, axis=0)
                                + np.maximum(state.rho, 0.0) ** state.gamma / (state.gamma - 1.0)
                                + 0.5 * np.sum(gV * gV, axis=0)))


def qdd_velocity(grid, rho, V, gamma, delta):
    """``2 grad(Lap s / s) - gamma rho^(gamma-2) grad rho - grad V``."""
    r = np.maximum(rho, delta)
    q = quantum.quantum_potential(grid, r, delta)
    return 2.0 * grid.gradient(q) - gamma * r ** (gamma - 2.0) * grid.gradient(rho) - grid.gradient(V)


def qdd_energy_dissipation(state: QddState) -> float:
    """``int rho |2 grad(Lap s / s) - gamma rho^(gamma-2) grad rho - grad V|^2``."""
    v = qdd_velocity(state.grid, state.rho, state.V, state.gamma, state.delta_floor)
    return float(state.grid.integrate(state.rho * np.sum(v * v, axis=0)))


def free_energy(state) -> float:
    """``int (rho (log rho - 1) + 1)``."""
    return float(state.grid.integrate(free_energy_density(state.rho, state.delta_floor)))


def free_energy_dissipation(state) -> DiagnosticsRecord:
    """Log-Hessian (as ``||S||^2``), pressure and charge pieces; only those fields are filled."""
    grid, d = state.grid, state.grid.dim
    S = quantum.entropy_tensor_S(grid, state.rho, state.delta_floor)
    gp = grid.gradient(np.maximum(state.rho, 0.0) ** (0.5 * state.gamma))
    return DiagnosticsRecord(
        t=state.t,
        diss_log=float(grid.integrate(contract(S, S, d))),
        diss_pressure=float(grid.integrate(np.sum(gp * gp, axis=0))),
        diss_charge=float(grid.integrate(state.rho * (state.rho - state.g))),
    )


def free_energy_rate(rec: DiagnosticsRecord, gamma: float) -> float:
    return rec.diss_log + 4.0 / gamma * rec.diss_pressure + rec.diss_charge


def _rates(state):
    rec = free_energy_dissipation(state)
    rec.diss_qdd = qdd_energy_dissipation(state)
    return rec


def diagnostics(state: QddState, rates: DiagnosticsRecord | None = None) -> DiagnosticsRecord:
    """Record for a QDD state.

    ``energy`` holds the QDD energy functional and ``bd_entropy`` is NaN;
    the cumulative columns refer to the energy and free-energy balances.
    """
    grid = state.grid
    rec = rates if rates is not None else _rates(state)
    out = DiagnosticsRecord(**rec.to_dict())
    gs = grid.gradient(np.sqrt(np.maximum(state.rho, 0.0)))
    gV = grid.gradient(state.V)
    app = quantum.appendix_inequality_check(grid, state.rho, state.delta_floor)
    hV = grid.hessian(state.V)
    out.t = state.t
    out.mass = mass(grid, state.rho)
    out.fisher = float(grid.integrate(np.sum(gs * gs, axis=0)))
    out.pressure_energy = float(grid.integrate(np.maximum(state.rho, 0.0) ** state.gamma)) / (state.gamma - 1.0)
    out.potential_energy = float(grid.integrate(0.5 * np.sum(gV * gV, axis=0)))
    out.energy = 2.0 * out.fisher + out.pressure_energy + out.potential_energy
    out.free_energy = free_energy(state)
    out.appendixA_lhs = app.lhs_quartic + app.lhs_hessian
    out.appendixA_rhs = app.rhs
    out.rho_gamma = out.pressure_energy * (state.gamma - 1.0)
    out.hess_V = float(grid.integrate(contract(hV, hV, grid.dim)))
    out.min_rho = float(np.min(state.rho))
    return out


def _advance(state, target, policy, form, strict, ctl):
    """Take one accepted step towards ``target``; returns ``(state, dt)``."""
    tol = target - state.t
    if policy.dt is not None:
        dt = policy.dt
        land = tol <= dt * (1 + 1e-9)
        new, _ = _sdirk_step(state, tol if land else dt, form, strict)
        if land:
            new.t = target
        return new, (tol if land else dt)
    rtol = policy.cfl * AUTO_RTOL_PER_CFL
    dt = ctl["dt"]
    for _ in range(MAX_REJECTS):
        land = tol <= dt * (1 + 1e-9)
        h = tol if land else dt
        try:
            new, err = _sdirk_step(state, h, form, strict)
        except (StabilityError, PositivityError):
            dt = 0.25 * h
            continue
        factor = 0.9 * math.sqrt(rtol / err) if err > 0 else 2.0
        if err <= rtol:
            if not land:
                ctl["dt"] = h * min(2.0, max(0.5, factor))
            if land:
                new.t = target
            return new, h
        dt = h * max(0.2, min(0.9, factor))
    raise StabilityError(f"step size control failed at t = {state.t:.6g} (last dt {dt:.3e})")


def qdd_run(state0: QddState, t_end: float, dt_policy=None, record_every: float | None = None,
            form=DEFAULT_FORM, strict: bool = False, keep_snapshots: bool = True):
    """Advance to ``t_end``; returns ``(trajectory, records)``.

    ``energy_defect`` tracks the energy balance and ``bd_defect`` the
    free-energy balance, both with trapezoid-in-time dissipation.
    """
    policy = as_policy(dt_policy)
    form = BohmForm(form)
    traj = Trajectory(grid=state0.grid, gamma=state0.gamma, g=state0.g,
                      delta_floor=state0.delta_floor)
    state = state0
    rates = _rates(state)
    first = diagnostics(state, rates)
    E0, F0 = first.energy, first.free_energy
    cum_e = cum_f = 0.0
    gam = state0.gamma

    def finish(rec):
        rec.cum_energy_diss = cum_e
        rec.cum_bd_diss = cum_f
        rec.energy_defect = rec.energy + cum_e - E0
        rec.bd_defect = rec.free_energy + cum_f - F0
        return rec

    records = [finish(first)]
    if keep_snapshots:
        traj.append(state)
    ctl = {"dt": auto_dt(state0, policy.cfl)}
    for target in record_times(state0.t, t_end, record_every):
        while state.t < target - 1e-13 * max(1.0, abs(target)):
            new, dt = _advance(state, target, policy, form, strict, ctl)
            new_rates = _rates(new)
            h = 0.5 * dt
            cum_e += h * (rates.diss_qdd + new_rates.diss_qdd)
            cum_f += h * (free_energy_rate(rates, gam) + free_energy_rate(new_rates, gam))
            state, rates = new, new_rates
        records.append(finish(diagnostics(state, rates)))
        if keep_snapshots:
            traj.append(state)
    if not keep_snapshots:
        traj.append(state)
    return traj, records
