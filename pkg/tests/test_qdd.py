import math

import numpy as np
import pytest

from qrelax.errors import PositivityError, StabilityError
from qrelax.fields import QddState
from qrelax.grid import make_grid
from qrelax.qdd import (auto_dt, diagnostics, free_energy, free_energy_dissipation, qdd_energy,
                        qdd_energy_dissipation, qdd_rhs, qdd_run, qdd_step)
from qrelax.timeloop import DtPolicy

TWO_PI = 2 * np.pi
# mpmath values for rho = 1 + 0.2 cos(2 pi x), gamma = 2, g = 1
ENERGY_ORACLE = 1.41906630850094662849832571192
DISSIPATION_ORACLE = 1449.58085573360800383947067937
DISS_LOG_ORACLE = 31.8136759122162413169060757374
GRAD_RHO_SQ_ORACLE = 0.78956835208714868950675927999
RHS_ORACLE = {0.0: -226.99570132263010132, 0.125: -213.96303194832624435, 0.3: -18.519013153493362886}


def cos_state(grid, amp=0.2):
    x = grid.coords()[0]
    return QddState.create(grid, 1 + amp * np.cos(TWO_PI * x), np.ones(grid.shape), gamma=2.0)


class TestRhsOracles:
    def test_pointwise(self, grid1, trig_eval):
        # fourth derivatives amplify round-off by ~k_cut^4, so compare against max|f|
        f = qdd_rhs(cos_state(grid1))
        for x, want in RHS_ORACLE.items():
            assert abs(trig_eval(f, x) - want) <= 1e-9 * np.max(np.abs(f))

    def test_zero_mean(self, grid1, rng):
        from qrelax.grid import random_density
        for _ in range(5):
            s = QddState.create(grid1, random_density(grid1, rng), gamma=2.0)
            f = qdd_rhs(s)
            assert abs(grid1.integrate(f)) <= 1e-14 * np.max(np.abs(f))

    def test_forms_agree(self, grid1):
        s = cos_state(grid1)
        ref = qdd_rhs(s, "SqrtTensorDiv")
        for f in ("Variational", "LogHessianDiv"):
            assert np.max(np.abs(qdd_rhs(s, f) - ref)) <= 1e-8 * np.max(np.abs(ref))

    def test_stationary(self, grid1):
        s = QddState.create(grid1, np.full(128, 1.7), np.full(128, 1.7), gamma=2.0)
        assert np.max(np.abs(qdd_rhs(s))) <= 1e-12


class TestFunctionals:
    def test_energy(self, grid1):
        assert qdd_energy(cos_state(grid1)) == pytest.approx(ENERGY_ORACLE, rel=1e-10)

    def test_energy_dissipation(self, grid1):
        assert qdd_energy_dissipation(cos_state(grid1)) == pytest.approx(DISSIPATION_ORACLE, rel=1e-9)

    def test_free_energy_dissipation_parts(self, grid1):
        rec = free_energy_dissipation(cos_state(grid1))
        assert rec.diss_log == pytest.approx(DISS_LOG_ORACLE, rel=1e-9)
        assert rec.diss_pressure == pytest.approx(GRAD_RHO_SQ_ORACLE, rel=1e-10)
        assert rec.diss_charge == pytest.approx(0.02, rel=1e-12)

    def test_free_energy_constant(self, grid1):
        s = QddState.create(grid1, np.full(128, 2.0), np.full(128, 2.0), gamma=2.0)
        assert free_energy(s) == pytest.approx(2 * math.log(2) - 1, rel=1e-14)

    def test_diagnostics_energy_matches(self, grid1):
        rec = diagnostics(cos_state(grid1))
        assert rec.energy == pytest.approx(ENERGY_ORACLE, rel=1e-10)
        assert math.isnan(rec.bd_entropy)


class TestStepping:
    def test_stationary_steps(self):
        grid = make_grid(1, 32)
        s = QddState.create(grid, np.full(32, 1.2), np.full(32, 1.2), gamma=2.0)
        for _ in range(20):
            new = qdd_step(s, 1e-3)
            assert np.max(np.abs(new.rho - s.rho)) <= 1e-12
            s = new

    def test_mass_conserved(self):
        grid = make_grid(1, 64)
        s = cos_state(grid, 0.4)
        m0 = grid.integrate(s.rho)
        for _ in range(10):
            s = qdd_step(s, 1e-4)
        assert abs(grid.integrate(s.rho) - m0) <= 1e-12

    def test_richardson_order(self):
        grid = make_grid(1, 64)
        s = cos_state(grid, 0.3)
        T = 2e-4

        def run(dt):
            st = s
            for _ in range(round(T / dt)):
                st = qdd_step(st, dt)
            return st.rho

        a, b, c = run(T / 4), run(T / 8), run(T / 16)
        ratio = np.max(np.abs(a - b)) / np.max(np.abs(b - c))
        assert ratio == pytest.approx(4.0, rel=0.15)

    def test_decay_of_first_mode(self):
        # small-amplitude data decays like exp(-(k^4 + 2k^2 + 1) t) for gamma = 2, rho_bar = 1
        grid = make_grid(1, 32)
        x = grid.coords()[0]
        s = QddState.create(grid, 1 + 1e-6 * np.cos(TWO_PI * x), np.ones(32), gamma=2.0)
        t = 1e-3
        for _ in range(40):
            s = qdd_step(s, t / 40)
        lam = TWO_PI ** 4 + 2 * TWO_PI ** 2 + 1
        amp = 2 * np.abs(np.fft.rfft(s.rho)[1]) / 32
        assert amp == pytest.approx(1e-6 * math.exp(-lam * t), rel=2e-3)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_positivity_error(self):
        grid = make_grid(1, 32)
        x = grid.coords()[0]
        s = QddState.create(grid, 1 + 0.999 * np.cos(TWO_PI * x), gamma=2.0, delta_floor=1e-2)
        with pytest.raises((PositivityError, StabilityError)):
            qdd_run(s, 0.01, DtPolicy(dt=5e-3), 0.01)


class TestRun:
    def test_balances_auto(self):
        grid = make_grid(1, 64)
        s = cos_state(grid, 0.3)
        _, recs = qdd_run(s, 0.005, None, 0.001)
        assert [r.t for r in recs] == pytest.approx([0, 0.001, 0.002, 0.003, 0.004, 0.005], abs=1e-15)
        e = recs[-1]
        assert abs(e.energy_defect) <= 1e-4 * recs[0].energy
        assert abs(e.bd_defect) <= 1e-4 * abs(recs[0].free_energy)
        assert abs(e.mass - recs[0].mass) <= 1e-12

    def test_energy_decreases(self):
        grid = make_grid(1, 64)
        _, recs = qdd_run(cos_state(grid, 0.3), 0.004, None, 0.001)
        en = [r.energy for r in recs]
        assert all(b < a for a, b in zip(en, en[1:]))

    def test_auto_dt_positive(self, grid1):
        assert 0 < auto_dt(cos_state(grid1)) < 1e-4
