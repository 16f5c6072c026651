import math

import numpy as np
import pytest

from lef import energy, flow, geometry, nodal, radial, spectrum
from lef.flow import Classification, FlowConfig
from tests.conftest import ring_bump


@pytest.fixture(scope="module")
def grid():
    return geometry.PolarGrid(48, 24)


@pytest.fixture(scope="module")
def ball_field(grid):
    return flow.field_from_radial(grid, radial.solve_ball(5.0))


class TestStep:
    def test_pure_heat_damps_first_mode_at_oracle_rate(self, grid):
        # e^{-lambda_1 t} decay of the first eigenmode, lambda_1 = j_{0,1}^2
        z = flow.ScalarField(grid, np.zeros(grid.n_nodes))
        A = spectrum.assemble_linearized(z, 2.0)
        vals, vecs = spectrum.lowest_eigenpairs(A, grid, 1)
        lam = vals[0]
        v = flow.ScalarField(grid, vecs[:, 0])
        dt = 1e-3
        out = flow.step(v, 2.0, dt, reaction=False)
        # implicit Euler: division by (1 + lam dt)
        ratio = out.values / v.values
        assert np.allclose(ratio, 1.0 / (1.0 + lam * dt), rtol=1e-6)

    def test_invalid_dt(self, ball_field):
        with pytest.raises(ValueError):
            flow.step(ball_field, 5.0, 0.0)


class TestEvolve:
    def test_small_data_decay(self, ball_field):
        tr = flow.evolve(ball_field.scaled(0.5), 5.0, FlowConfig(t_max=50.0))
        assert tr.classification == Classification.DECAY
        assert tr.sup_norms[-1] < 1e-5 * tr.sup_norms[0]

    def test_large_data_blowup(self, ball_field):
        tr = flow.evolve(ball_field.scaled(1.8), 5.0, FlowConfig(t_max=50.0))
        assert tr.classification == Classification.BLOWUP

    def test_steady_state_detected(self, ball_field):
        u, res = spectrum.newton_polish(ball_field, 5.0)
        assert res < 1e-10
        tr = flow.evolve(u, 5.0, FlowConfig(t_max=5.0))
        assert tr.classification == Classification.STEADY
        assert tr.final_residual < 1e-6

    def test_energy_monotone_along_trajectories(self, ball_field):
        for lam in (0.5, 0.9, 1.3):
            tr = flow.evolve(ball_field.scaled(lam), 5.0,
                             FlowConfig(t_max=20.0))
            dE = np.diff(tr.energies)
            scale = np.abs(tr.energies[:-1])
            assert np.all(dE <= 1e-10 * np.maximum(scale, 1.0))

    def test_max_time_classification(self, ball_field):
        tr = flow.evolve(ball_field.scaled(0.99), 5.0, FlowConfig(t_max=0.3))
        assert tr.classification == Classification.MAXTIME
        assert tr.t_final >= 0.3

    def test_zero_datum_is_steady(self, grid):
        z = flow.ScalarField(grid, np.zeros(grid.n_nodes))
        tr = flow.evolve(z, 5.0)
        assert tr.classification == Classification.STEADY

    def test_nodal_recording(self, grid):
        v = ring_bump(grid, 0.1, 0.9)
        cfg = FlowConfig(t_max=1.0, record_nodal_every=5)
        tr = flow.evolve(v.scaled(0.5), 5.0, cfg)
        assert len(tr.nodal_counts) > 0
        assert all(c >= 1 for _, c in tr.nodal_counts)


class TestThresholdBisect:
    def test_ball_direction_threshold_near_one(self, ball_field):
        # the steady state itself separates decay from blow-up along its ray
        u, _ = spectrum.newton_polish(ball_field, 5.0)
        direction, _ = energy.nehari_project(u, 5.0)
        cfg = FlowConfig(t_max=40.0)
        res = flow.threshold_bisect(direction, 5.0, cfg, polish=False,
                                    lambda_init=0.7)
        assert abs(res.lambda_star - 1.0) < 0.01
        assert res.bisection_width <= 1e-3 * res.lambda_star

    def test_unbracketable_direction_raises(self, grid):
        # a tiny bump whose blow-up scale exceeds the bracket budget
        v = ring_bump(grid, 0.45, 0.55).scaled(1e-3)
        cfg = FlowConfig(t_max=0.5)
        with pytest.raises(flow.BracketError):
            flow.threshold_bisect(v, 5.0, cfg, max_bracket=2)


class TestRestartSelection:
    def test_needs_at_least_three_domains(self, grid):
        v = ring_bump(grid, 0.1, 0.9)
        dec = nodal.decompose(v)
        with pytest.raises(ValueError):
            flow.select_restart_pair(v, dec, 5.0)

    def test_picks_opposite_sign_pair(self, grid):
        r = np.hypot(grid.xy[:, 0], grid.xy[:, 1])
        vals = np.where(r < 0.3, np.cos(r * np.pi / 0.6),
                        np.where(r < 0.6, -np.sin((r - 0.3) * np.pi / 0.3),
                                 np.sin((r - 0.6) * np.pi / 0.4)))
        v = flow.ScalarField(grid, vals)
        dec = nodal.decompose(v)
        assert dec.n_domains == 3
        u_pos, u_neg = flow.select_restart_pair(v, dec, 5.0)
        assert u_pos.values.max() > 0 and u_pos.values.min() >= 0
        assert u_neg.values.min() < 0 and u_neg.values.max() <= 0
        for u in (u_pos, u_neg):
            assert energy.field_energy(u, 5.0).nehari_residual < 1e-10
