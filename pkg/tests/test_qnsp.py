import math

import numpy as np
import pytest

from qrelax.errors import NaNError, StabilityError, VacuumError
from qrelax.fields import QnspState
from qrelax.grid import make_grid
from qrelax.qnsp import (bd_entropy_functional, dissipation_rates, energy_functional, qnsp_rhs,
                         qnsp_run, qnsp_step, stable_dt)
from qrelax.timeloop import DtPolicy

TWO_PI = 2 * np.pi
# mpmath quadrature of the energy for rho = 1 + 0.3 cos(2 pi x), u = 0, g = 1, gamma = 2
E_COS_ORACLE = 1.95477365248399557894293080353
# BD entropy for rho = exp(cos 2 pi x) / I0(1), u = 0, g = 1, gamma = 2, eps = 0.1
# (potential energy summed from the Bessel-series coefficients of rho)
B_EXP_ORACLE = 2.11547895569401820822871693528
FREE_EXP_ORACLE = 0.210475607389355858358266948993


def cos_state(grid, eps=0.2, amp=0.3, m=None, gamma=2.0):
    x = grid.coords()[0]
    return QnspState.create(grid, 1 + amp * np.cos(TWO_PI * x), np.ones(grid.shape), m=m, eps=eps, gamma=gamma)


class TestRhs:
    def test_stationary_state(self, grid1):
        s = QnspState.create(grid1, np.full(128, 1.3), np.full(128, 1.3), eps=0.1, gamma=2.0)
        r = qnsp_rhs(s)
        assert np.max(np.abs(r.d_rho)) <= 1e-14 and np.max(np.abs(r.d_m)) <= 1e-12

    def test_inverse_eps_homogeneity(self, grid1, x128):
        m = 0.2 * np.sin(TWO_PI * x128)
        a = qnsp_rhs(cos_state(grid1, eps=0.2, m=m))
        b = qnsp_rhs(cos_state(grid1, eps=0.1, m=m))
        assert np.array_equal(b.d_rho, 2 * a.d_rho)
        assert np.array_equal(b.d_m, 2 * a.d_m)

    def test_mass_flux_assembly(self, grid1, x128):
        m = 0.2 * np.sin(2 * TWO_PI * x128)
        s = cos_state(grid1, eps=0.3, m=m)
        hand = -grid1.spectral_derivative(m, (1,)) / 0.3
        assert np.max(np.abs(qnsp_rhs(s).d_rho - hand)) <= 1e-12
        assert abs(grid1.integrate(qnsp_rhs(s).d_rho)) <= 1e-12

    def test_momentum_flux_assembly_1d(self, grid1, x128):
        # term-by-term: -(1/eps)[ (m u)' - (rho u')' + (rho^g)' + rho V' - Bohm ]
        m = 0.1 * np.cos(TWO_PI * x128)
        s = cos_state(grid1, eps=0.25, m=m)
        rho, V = s.rho, s.V
        D = lambda f: grid1.spectral_derivative(f, (1,))
        u = m / rho
        sq = np.sqrt(rho)
        bohm = D(2 * sq * D(D(sq)) - 2 * D(sq) ** 2)
        hand = -(D(m * u) - D(rho * D(u)) + D(rho ** 2) + rho * D(V) - bohm) / 0.25
        got = qnsp_rhs(s).d_m[0]
        assert np.max(np.abs(got - grid1.dealias(hand))) <= 1e-9 * np.max(np.abs(hand))

    def test_all_forms_close(self, grid1):
        s = cos_state(grid1)
        ref = qnsp_rhs(s, "SqrtTensorDiv").d_m
        for f in ("Variational", "LogHessianDiv"):
            assert np.max(np.abs(qnsp_rhs(s, f).d_m - ref)) <= 1e-8 * np.max(np.abs(ref))

    def test_strict_vacuum(self, grid1, x128):
        s = QnspState.create(grid1, 1 + np.cos(TWO_PI * x128), eps=0.1, gamma=2.0, delta_floor=1e-3)
        with pytest.raises(VacuumError):
            qnsp_rhs(s, strict=True)


class TestStep:
    def test_damping_only(self, grid1, x128):
        m = np.sin(TWO_PI * x128)
        s = cos_state(grid1, eps=0.1, m=m)
        out = qnsp_step(s, 0.003, flux=False)
        assert np.max(np.abs(out.m - m * math.exp(-0.003 / 0.01))) <= 1e-15
        assert np.array_equal(out.rho, s.rho)

    def test_stationary_invariance(self, grid1):
        s = QnspState.create(grid1, np.full(128, 1.3), np.full(128, 1.3), eps=0.1, gamma=2.0)
        dt = 0.4 * stable_dt(s)
        for _ in range(100):
            new = qnsp_step(s, dt)
            assert np.max(np.abs(new.rho - s.rho)) <= 1e-12
            assert np.max(np.abs(new.m - s.m)) <= 1e-12
            s = new

    def test_richardson_order(self, grid1, x128):
        s = cos_state(grid1, eps=0.2, m=0.05 * np.sin(TWO_PI * x128))
        dt = 0.9 * stable_dt(s)

        def defect(h):
            one = qnsp_step(s, h)
            two = qnsp_step(qnsp_step(s, h / 2), h / 2)
            return max(np.max(np.abs(one.rho - two.rho)), np.max(np.abs(one.m - two.m)))

        ratio = defect(dt) / defect(dt / 2)
        assert ratio >= 4.0

    def test_stability_bound_enforced(self, grid1):
        s = cos_state(grid1)
        with pytest.raises(StabilityError):
            qnsp_step(s, 1.01 * stable_dt(s))

    def test_nan_detected(self, grid1):
        s = cos_state(grid1)
        s.m[0, 3] = np.nan
        with pytest.raises(NaNError):
            qnsp_step(s, 0.5 * stable_dt(cos_state(grid1)))

    def test_stable_dt_scales_with_eps(self, grid1):
        a, b = stable_dt(cos_state(grid1, eps=0.2)), stable_dt(cos_state(grid1, eps=0.1))
        assert a == pytest.approx(2 * b, rel=1e-14)


class TestRun:
    def test_zero_length(self, grid1):
        traj, recs = qnsp_run(cos_state(grid1), 0.0, None, 0.001)
        assert len(recs) == 1 and len(traj) == 1

    def test_stationary_diagnostics_constant(self):
        grid = make_grid(1, 32)
        s = QnspState.create(grid, np.full(32, 1.0), np.full(32, 1.0), eps=0.2, gamma=2.0)
        _, recs = qnsp_run(s, 0.002, None, 0.0005)
        for key in ("mass", "energy", "bd_entropy", "fisher", "free_energy"):
            vals = [getattr(r, key) for r in recs]
            assert max(vals) - min(vals) <= 1e-13

    def test_record_times_exact(self):
        grid = make_grid(1, 32)
        traj, recs = qnsp_run(cos_state(grid), 0.003, None, 0.001)
        assert [r.t for r in recs] == [0.0, 0.001, 0.002, 0.003]
        assert traj.t == [0.0, 0.001, 0.002, 0.003]

    def test_mass_drift_smooth_run(self):
        grid = make_grid(1, 64)
        _, recs = qnsp_run(cos_state(grid), 0.01, None, 0.005)
        assert abs(recs[-1].mass - recs[0].mass) <= 1e-11 * recs[0].mass

    def test_fixed_dt_policy(self):
        grid = make_grid(1, 32)
        s = cos_state(grid)
        dt = 0.5 * stable_dt(s)
        traj, _ = qnsp_run(s, 10 * dt, DtPolicy(dt=dt))
        assert traj.t[-1] == pytest.approx(10 * dt, rel=1e-14)
        with pytest.raises(StabilityError):
            qnsp_run(s, 0.001, DtPolicy(dt=1.5 * stable_dt(s)))


class TestFunctionals:
    def test_constant_state_energy(self, grid1):
        s = QnspState.create(grid1, np.ones(128), np.ones(128), eps=0.1, gamma=2.0)
        assert energy_functional(s) == pytest.approx(1.0, rel=1e-15)
        moving = s.replace(m=np.ones((1, 128)))
        assert energy_functional(moving) - energy_functional(s) == pytest.approx(0.5, rel=1e-14)

    def test_cosine_energy_oracle(self, grid1):
        assert energy_functional(cos_state(grid1)) == pytest.approx(E_COS_ORACLE, rel=1e-9)

    def test_bd_constant(self, grid1):
        s = QnspState.create(grid1, np.ones(128), np.ones(128), eps=0.1, gamma=2.0)
        assert bd_entropy_functional(s) == pytest.approx(0.1, rel=1e-14)

    def test_bd_linear_in_eps(self, grid1):
        s = cos_state(grid1)
        b1, b2 = bd_entropy_functional(s.replace(eps=1e-3)), bd_entropy_functional(s.replace(eps=2e-3))
        b0 = 2 * b1 - b2
        free = grid1.integrate(s.rho * (np.log(s.rho) - 1) + 1)
        assert b0 == pytest.approx(free, rel=1e-10)

    def test_bd_exponential_oracle(self, grid1, x128):
        from scipy.special import i0
        rho = np.exp(np.cos(TWO_PI * x128)) / i0(1.0)
        s = QnspState.create(grid1, rho, np.ones(128), eps=0.1, gamma=2.0)
        assert bd_entropy_functional(s) == pytest.approx(B_EXP_ORACLE, rel=1e-8)


class TestDissipationRates:
    def test_at_rest_constant(self, grid1):
        s = QnspState.create(grid1, np.full(128, 2.0), np.full(128, 2.0), eps=0.1, gamma=2.0)
        r = dissipation_rates(s)
        for v in (r.diss_visc, r.diss_antisym, r.diss_damp, r.diss_log, r.diss_pressure):
            assert abs(v) <= 1e-20
        assert r.diss_charge == pytest.approx(0.0, abs=1e-15)

    def test_charge_term(self, grid1, x128):
        s = cos_state(grid1)
        # int rho (rho - 1) = int 0.09 cos^2 = 0.045
        assert dissipation_rates(s).diss_charge == pytest.approx(0.045, rel=1e-12)

    def test_rotation_split_2d(self):
        grid = make_grid(2, 32)
        x, y = grid.coords()
        u = np.stack([-np.sin(TWO_PI * y), np.sin(TWO_PI * x)])
        rho = 1 + 0.3 * np.cos(TWO_PI * x)
        s = QnspState.create(grid, rho, m=rho * u, eps=0.1, gamma=2.0)
        r = dissipation_rates(s)
        # Du_12 = pi (cos 2pi x - cos 2pi y), Au_12 = -pi (cos 2pi x + cos 2pi y);
        # both contract to 2 pi^2 against rho (the cos^3 and cross terms vanish)
        assert r.diss_visc == pytest.approx(2 * np.pi ** 2, rel=1e-8)
        assert r.diss_antisym == pytest.approx(2 * np.pi ** 2, rel=1e-8)
        assert r.diss_damp == pytest.approx(1.0, rel=1e-12)
