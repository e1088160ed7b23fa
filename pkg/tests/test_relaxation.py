import json
import math

import numpy as np
import pytest

from qrelax.errors import DegenerateError, MismatchError
from qrelax.fields import QddState, QnspState
from qrelax.grid import make_grid
from qrelax.relaxation import (SweepConfig, SweepReport, bound_variation, error_norm, fit_rate,
                               hilbert_velocity, lambda_recovery, lambda_residual, run_sweep,
                               trapezoid_weights)
from qrelax.timeloop import Trajectory

TWO_PI = 2 * np.pi
# eps = 0.1, rho = 1 + 0.2 cos(2 pi x), gamma = 2, g = 1 (mpmath)
HILBERT_ORACLE = {0.0: 0.0, 0.125: 2.4445470802643940899, 0.3: 5.7269144707111380649}
# || sqrt(1 + 1e-3 cos) - 1 ||_{H1}^2
SQRT_GAP_H1SQ = 5.05980346354273411363764484545e-6


def qdd_traj(grid, rho, times, g=None):
    tr = Trajectory(grid=grid, gamma=2.0)
    for t in times:
        tr.append(QddState.create(grid, rho, np.ones(grid.shape) if g is None else g, gamma=2.0, t=t))
    return tr


class TestHilbertVelocity:
    def test_oracle(self, grid1, x128, trig_eval):
        s = QddState.create(grid1, 1 + 0.2 * np.cos(TWO_PI * x128), np.ones(128), gamma=2.0)
        u = hilbert_velocity(grid1, s.rho, s.V, 2.0, 0.1, s.delta_floor)[0]
        for x, want in HILBERT_ORACLE.items():
            assert trig_eval(u, x) == pytest.approx(want, rel=1e-9, abs=1e-11)

    def test_linear_in_eps(self, grid1, x128):
        s = QddState.create(grid1, 1 + 0.2 * np.cos(TWO_PI * x128), np.ones(128), gamma=2.0)
        a = hilbert_velocity(grid1, s.rho, s.V, 2.0, 0.1, s.delta_floor)
        b = hilbert_velocity(grid1, s.rho, s.V, 2.0, 0.3, s.delta_floor)
        np.testing.assert_allclose(b, 3 * a, rtol=1e-14, atol=1e-14)


class TestErrorNorm:
    def test_identical(self, grid1, x128):
        tr = qdd_traj(grid1, 1 + 0.3 * np.cos(TWO_PI * x128), [0.0, 0.5, 1.0])
        assert error_norm(tr, tr) == (0.0, 0.0)

    def test_synthetic_gap(self, grid1, x128):
        times = [0.0, 0.25, 0.5]
        a = qdd_traj(grid1, np.ones(128), times)
        b = qdd_traj(grid1, 1 + 1e-3 * np.cos(TWO_PI * x128), times)
        err_rho, err_V = error_norm(a, b)
        assert err_rho == pytest.approx(math.sqrt(0.5 * SQRT_GAP_H1SQ), rel=1e-10)
        assert err_V == pytest.approx(1e-3 / TWO_PI * math.sqrt(0.5), rel=1e-10)

    def test_single_snapshot_weight_one(self, grid1, x128):
        a = qdd_traj(grid1, np.ones(128), [0.0])
        b = qdd_traj(grid1, 1 + 1e-3 * np.cos(TWO_PI * x128), [0.0])
        assert error_norm(a, b)[0] == pytest.approx(math.sqrt(SQRT_GAP_H1SQ), rel=1e-10)

    def test_mismatched_times(self, grid1):
        a = qdd_traj(grid1, np.ones(128), [0.0, 0.5])
        b = qdd_traj(grid1, np.ones(128), [0.0, 0.4])
        with pytest.raises(MismatchError):
            error_norm(a, b)
        with pytest.raises(MismatchError):
            error_norm(a, qdd_traj(grid1, np.ones(128), [0.0]))

    def test_mismatched_grids(self, grid1):
        other = make_grid(1, 64)
        with pytest.raises(MismatchError):
            error_norm(qdd_traj(grid1, np.ones(128), [0.0]), qdd_traj(other, np.ones(64), [0.0]))

    def test_trapezoid_weights(self):
        np.testing.assert_allclose(trapezoid_weights([0, 1, 3]), [0.5, 1.5, 1.0])


class TestLambdaRecovery:
    def _state(self, grid, x, eps, well):
        rho = 1 + 0.2 * np.cos(TWO_PI * x)
        s = QnspState.create(grid, rho, np.ones(grid.shape), eps=eps, gamma=2.0)
        if well:
            s = s.replace(m=rho * hilbert_velocity(grid, rho, s.V, 2.0, eps, s.delta_floor))
        return s

    def test_hilbert_state_has_small_residual(self, grid1, x128):
        s = self._state(grid1, x128, 0.1, True)
        r = lambda_residual(grid1, s.rho, s.m, s.V, s.eps, s.gamma, s.delta_floor)
        scale = lambda_residual(grid1, s.rho, 0 * s.m, s.V, s.eps, s.gamma, s.delta_floor)
        assert r <= 1e-10 * scale

    def test_at_rest_residual_is_target_norm(self, grid1, x128):
        tr = Trajectory(grid=grid1, m=[], eps=0.1, gamma=2.0)
        a = self._state(grid1, x128, 0.1, False)
        tr.append(a)
        tr.append(a.replace(t=1.0))
        want = lambda_residual(grid1, a.rho, a.m, a.V, 0.1, 2.0, a.delta_floor)
        assert want > 1.0
        assert lambda_recovery(tr) == pytest.approx(want, rel=1e-14)

    def test_requires_momentum(self, grid1):
        with pytest.raises(MismatchError):
            lambda_recovery(qdd_traj(grid1, np.ones(128), [0.0]))


class TestFitRate:
    eps = [0.4, 0.2, 0.1, 0.05]

    @pytest.mark.parametrize("p", [1.0, 2.0, 0.0, 0.5])
    def test_power_law(self, p):
        assert fit_rate(self.eps, [3.0 * e ** p for e in self.eps]) == pytest.approx(p, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateError):
            fit_rate([0.4, 0.2], [1.0, 0.5])
        with pytest.raises(DegenerateError):
            fit_rate(self.eps, [1.0, 0.0, 1.0, 1.0])
        with pytest.raises(DegenerateError):
            fit_rate(self.eps, [1.0, float("nan"), 1.0, 1.0])


def small_config(**kw):
    grid = make_grid(1, 32)
    x = grid.coords()[0]
    base = dict(rho0=1 + 0.3 * np.cos(TWO_PI * x), g=np.ones(32), eps_list=[0.4, 0.2, 0.1],
                t_end=0.002, record_every=0.001, n=32)
    base.update(kw)
    return SweepConfig(**base)


class TestSweep:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            small_config(eps_list=[0.1, 0.2])
        with pytest.raises(ValueError):
            small_config(preparation="medium")

    def test_deterministic(self):
        a = run_sweep(small_config()).to_dict()
        b = run_sweep(small_config()).to_dict()
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
        assert len(a["err_rho"]) == 3 and not a["partial"]
        rep = SweepReport.from_dict(json.loads(json.dumps(a)))
        assert rep.err_rho == a["err_rho"]

    def test_process_pool_matches_sequential(self):
        cfg = small_config(eps_list=[0.4, 0.2])
        a = run_sweep(cfg)
        b = run_sweep(cfg, sequential=False, workers=2)
        assert a.err_rho == b.err_rho and a.err_lambda == b.err_lambda

    def test_stationary_data(self):
        rep = run_sweep(small_config(rho0=np.full(32, 1.5), g=np.full(32, 1.5)))
        assert max(rep.err_rho) <= 1e-12 and max(rep.err_V) <= 1e-12
        assert max(rep.err_lambda) <= 1e-12
        assert math.isnan(rep.fitted_rate)

    def test_callback_sees_every_member(self):
        seen = []
        run_sweep(small_config(), on_member=lambda e, tr, recs: seen.append((e, len(tr))))
        assert seen == [(0.4, 3), (0.2, 3), (0.1, 3)]

    def test_bound_variation(self):
        rows = [dict(eps=e, sup_mass=1.0, sup_kinetic=v, sup_fisher=1.0, sup_rho_gamma=1.0,
                     sup_hess_V=1.0, damp_integral=1.0) for e, v in [(0.4, 2.0), (0.2, 2.2), (0.1, 2.1)]]
        rep = SweepReport([0.4, 0.2, 0.1], [], [], [], 0.0, 0.0, rows, [], {}, "ill")
        var = bound_variation(rep)
        assert var["sup_kinetic"] == pytest.approx(1.1)
        assert var["sup_mass"] == 1.0
