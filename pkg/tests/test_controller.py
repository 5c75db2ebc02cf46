import numpy as np
import pytest

from trailer_mpc.controller import (LqController, MpcConfig, MpcController, assemble_constraints,
                                    build_objective_map, build_stage_cost, compute_terminal_costs,
                                    condense_qp, lq_step, ss2t_mpc_config)
from trailer_mpc.error_model import auxiliary_errors, linearize_along
from trailer_mpc.errors import ConfigError, HorizonExceedsPathError
from trailer_mpc.numcore import dare_residual
from trailer_mpc.path import build_figure_eight, build_straight
from trailer_mpc.vehicle import ControlInput, VehicleState


def test_objective_map_linearizes_auxiliary_errors(cfg):
    M = build_objective_map(cfg).M
    assert M.shape == (8, 4)
    np.testing.assert_array_equal(M[:4], np.eye(4))
    h = 1e-6
    J = np.column_stack([(auxiliary_errors(cfg, h * e) - auxiliary_errors(cfg, -h * e)) / (2 * h)
                         for e in np.eye(4)])
    np.testing.assert_allclose(M[4:], J, atol=1e-8)


def test_stage_cost(cfg):
    mpc = MpcConfig()
    Q, R = build_stage_cost(build_objective_map(cfg), mpc.q_bar, mpc.R)
    assert np.all(np.linalg.eigvalsh(Q) >= -1e-12)
    np.testing.assert_array_equal(R, np.diag([4.0, 3.0]))
    with pytest.raises(ConfigError):
        build_stage_cost(build_objective_map(cfg), mpc.q_bar[:3], mpc.R)


def test_terminal_cost_solves_dare(cfg):
    mpc = MpcConfig()
    Q, R = build_stage_cost(build_objective_map(cfg), mpc.q_bar, mpc.R)
    P_fwd, P_bwd = compute_terminal_costs(cfg, mpc, Q, R)
    assert not np.allclose(P_fwd, P_bwd)
    for P in (P_fwd, P_bwd):
        assert np.all(np.linalg.eigvalsh(P) > 0)


@pytest.mark.parametrize("bad", [dict(horizon=0), dict(delta_s=0.0), dict(r=(4.0, -1.0)), dict(w_q=0.0)])
def test_mpc_config_validation(bad):
    with pytest.raises(ConfigError):
        MpcConfig(**bad)


def test_controller_rejects_mismatched_r(cfg):
    with pytest.raises(ConfigError):
        MpcController(cfg, ss2t_mpc_config())


def qp_setup(cfg, N=8, soft=True):
    mpc = MpcConfig(horizon=N, soft_joint_constraints=soft)
    path = build_figure_eight(cfg, 0.07, -1)
    s0 = 30.0
    s = s0 + mpc.delta_s * np.arange(N + 1)
    models = linearize_along(path, s[:N])
    Q, R = build_stage_cost(build_objective_map(cfg), mpc.q_bar, mpc.R)
    P = compute_terminal_costs(cfg, mpc, Q, R)[1]
    cons = assemble_constraints(mpc, path, s0, np.array([0.01, 0.0]), -1.0)
    return mpc, models, Q, R, P, cons


def test_condensed_predictions_match_recursion(cfg, rng):
    mpc, models, Q, R, P, cons = qp_setup(cfg)
    x0 = rng.standard_normal(4) * 0.1
    qp = condense_qp(models, Q, P, R, cons, x0, mpc)
    u = rng.standard_normal(qp.n_inputs) * 0.01
    x = x0.copy()
    cost = 0.0
    for k in range(mpc.horizon):
        uk = u[2 * k:2 * k + 2]
        cost += x @ Q @ x + uk @ R @ uk
        x = models.F[k] @ x + models.G[k] @ uk
        np.testing.assert_allclose(qp.Phi[4 * k:4 * k + 4] @ x0 + qp.Gamma[4 * k:4 * k + 4] @ u, x,
                                   atol=1e-12)
    cost += x @ P @ x
    z = np.concatenate([u, np.zeros(qp.n_slack * 2)])
    const = cost - qp.problem.objective(z)
    # the condensed objective differs from the stage sum by a constant only
    u2 = rng.standard_normal(qp.n_inputs) * 0.01
    x = x0.copy()
    cost2 = 0.0
    for k in range(mpc.horizon):
        uk = u2[2 * k:2 * k + 2]
        cost2 += x @ Q @ x + uk @ R @ uk
        x = models.F[k] @ x + models.G[k] @ uk
    cost2 += x @ P @ x
    z2 = np.concatenate([u2, np.zeros(qp.n_slack * 2)])
    assert cost2 - qp.problem.objective(z2) == pytest.approx(const, abs=1e-10)


def test_constraint_rows(cfg):
    mpc, models, Q, R, P, cons = qp_setup(cfg, soft=False)
    qp = condense_qp(models, Q, P, R, cons, np.zeros(4), mpc)
    assert qp.n_slack == 0
    N, m = mpc.horizon, 2
    assert qp.problem.A_in.shape == (N * m + (N - 1) * m, N * m)
    ub = cfg.control_bounds()
    u_ref = cons.u_ref
    np.testing.assert_allclose(cons.u_hi[1:], ub - u_ref[1:])
    # stage 0 honours the slew window around the previous control
    assert np.all(cons.u_hi[0] <= np.array([0.01, 0.0]) - u_ref[0] + cons.slew[0] + 1e-15)


def test_first_stage_without_previous_control(cfg):
    mpc = MpcConfig(horizon=5)
    path = build_straight(cfg, 10.0, -1)
    cons = assemble_constraints(mpc, path, 1.0, None, -1.0)
    np.testing.assert_allclose(cons.u_hi[0], cfg.control_bounds())
    np.testing.assert_allclose(cons.slew, np.tile(cfg.control_rate_bounds() * mpc.delta_s, (5, 1)))
    with pytest.raises(HorizonExceedsPathError):
        assemble_constraints(mpc, path, 9.5, None, -1.0)


def test_mpc_on_path_applies_nominal_control(cfg):
    path = build_figure_eight(cfg, 0.07, 1)
    ctrl = MpcController(cfg, MpcConfig(horizon=10))
    smp = path.sample_at(40.0)
    res = ctrl.step(smp.state, path, 1.0, s_hint=40.0)
    np.testing.assert_allclose(res.control.as_array(), smp.control.as_array(), atol=1e-6)
    assert res.qp_status == "optimal"
    assert res.predicted_errors.shape == (11, 4)


def test_mpc_respects_slew_after_first_step(cfg):
    path = build_straight(cfg, 30.0, -1)
    ctrl = MpcController(cfg, MpcConfig(horizon=10))
    x = VehicleState(-5.0, 0.5, 0.0, (0.0, 0.0))
    u0 = ctrl.step(x, path, -1.0, s_hint=5.0).control.as_array()
    u1 = ctrl.step(x, path, -1.0).control.as_array()
    assert np.all(np.abs(u1 - u0) <= cfg.control_rate_bounds() * 0.2 + 1e-12)


def test_lq_step_saturates(cfg):
    K = np.ones((2, 4))
    applied, raw = lq_step(K, np.array([1.0, 0, 0, 0]), [0.0, 0.0], cfg)
    np.testing.assert_allclose(raw, [-1.0, -1.0])
    np.testing.assert_allclose(applied, -cfg.control_bounds())


def test_lq_controller_gain_solves_dare(cfg):
    from trailer_mpc.error_model import discretize, straight_path_matrices
    lq = LqController(cfg)
    F, G = discretize(*straight_path_matrices(cfg), lq.mpc.delta_s, -1)
    assert dare_residual(F, G, lq.Q, lq.R, lq.riccati[-1].P) < 1e-9
    path = build_straight(cfg, 20.0, -1)
    res = lq.step(VehicleState(-5.0, 0.2, 0.0, (0.0, 0.0)), path, -1.0, s_hint=5.0)
    np.testing.assert_allclose(res.unsaturated, -lq.K[-1] @ res.error.as_array())
