import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from trailer_mpc.errors import ConfigError, DegenerateConfigurationError, SingularSteeringError
from trailer_mpc.vehicle import (ControlInput, VehicleConfig, VehicleState, chain_product, full_steering,
                                 integrate_step, joint_angle_rates, kinematics, ms2t_config,
                                 state_derivative, trailer_curvature, velocity_factor,
                                 velocity_transform_matrix, wrap_angle)


def one_trailer(M=0.0):
    return VehicleConfig(tractor_wheelbase=3.0, segment_lengths=(5.0,), hitch_offsets=(M,),
                         joint_angle_bounds=(1.0,), max_curvature=0.2, max_curvature_rate=0.1)


def test_ms2t_parameters(cfg):
    assert cfg.n_trailers == 2
    assert cfg.n_states == 5
    assert cfg.n_controls == 2
    assert cfg.last_trailer_steerable
    np.testing.assert_allclose(cfg.control_bounds(), [0.18, 0.35])
    np.testing.assert_allclose(cfg.control_rate_bounds(), [0.13, 0.8])


def test_without_trailer_steering(cfg):
    ss = cfg.without_trailer_steering()
    assert ss.steerable_set == ()
    assert ss.n_controls == 1
    assert ss.segment_lengths == cfg.segment_lengths


@pytest.mark.parametrize("change", [
    dict(segment_lengths=(3.87, -1.0)),
    dict(tractor_wheelbase=0.0),
    dict(joint_angle_bounds=(0.8, 1.6)),
    dict(hitch_offsets=(1.66,)),
    dict(steerable_set=(3,)),
    dict(steerable_set=(2, 2), trailer_steer_bounds=(0.3, 0.3), trailer_steer_rate_bounds=(1, 1)),
    dict(trailer_steer_bounds=()),
    dict(max_curvature=0.0),
])
def test_invalid_configs(cfg, change):
    with pytest.raises(ConfigError):
        replace(cfg, **change)


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        VehicleConfig.from_dict({"tractor_wheelbase": 1.0, "wheels": 4})


def test_straight_equilibrium(cfg):
    f_vn, kappa, f_b = kinematics(cfg, (0.0, 0.0), 0.0, [0.0, 0.0, 0.0])
    assert f_vn == pytest.approx(1.0)
    assert kappa == 0.0
    assert f_b == [0.0, 0.0]


@given(beta=st.floats(-1.2, 1.2), k0=st.floats(-0.2, 0.2))
def test_single_on_axle_trailer_matches_textbook_model(beta, k0):
    # standard trailer: v1 = v0 cos(beta), dtheta1 = v0 sin(beta)/L1
    cfg = one_trailer()
    f_vn, kappa, (f_b,) = kinematics(cfg, (beta,), k0, [0.0, 0.0])
    L = cfg.segment_lengths[0]
    assert f_vn == pytest.approx(math.cos(beta), abs=1e-12)
    assert kappa == pytest.approx(math.tan(beta) / L, abs=1e-12)
    assert f_b == pytest.approx((k0 - math.sin(beta) / L) / math.cos(beta), abs=1e-12)


@given(beta=st.floats(-1.0, 1.0), k0=st.floats(-0.2, 0.2), M=st.floats(-1.5, 1.5))
def test_single_off_axle_trailer_matches_textbook_model(beta, k0, M):
    # hitch M behind the tractor axle: v1 = v0 (cos b + M k0 sin b), w1 = v0 (sin b - M k0 cos b)/L
    cfg = one_trailer(M)
    L = cfg.segment_lengths[0]
    v1 = math.cos(beta) + M * k0 * math.sin(beta)
    if v1 <= 1e-3:
        return
    f_vn, kappa, (f_b,) = kinematics(cfg, (beta,), k0, [0.0, 0.0])
    w1 = (math.sin(beta) - M * k0 * math.cos(beta)) / L
    assert f_vn == pytest.approx(v1, abs=1e-12)
    assert kappa == pytest.approx(w1 / v1, abs=1e-12)
    assert f_b == pytest.approx((k0 - w1) / v1, abs=1e-12)


@settings(max_examples=50)
@given(b1=st.floats(-0.8, 0.8), b2=st.floats(-0.8, 0.8), k0=st.floats(-0.18, 0.18), g=st.floats(-0.35, 0.35))
def test_chain_product_is_matrix_product(b1, b2, k0, g):
    cfg = ms2t_config()
    u = ControlInput(k0, (g,))
    gam = full_steering(cfg, u.gammas)
    J1 = velocity_transform_matrix(cfg, 1, b1, gam[1], gam[0])
    J2 = velocity_transform_matrix(cfg, 2, b2, gam[2], gam[1])
    expected = J2 @ J1 @ np.array([k0, 1.0])
    np.testing.assert_allclose(chain_product(cfg, (b1, b2), u), expected, atol=1e-13)
    np.testing.assert_allclose(chain_product(cfg, (b1, b2), u, from_index=1), J1 @ [k0, 1.0], atol=1e-13)
    if expected[1] > 1e-6:
        assert velocity_factor(cfg, (b1, b2), u) == pytest.approx(expected[1])
        assert trailer_curvature(cfg, (b1, b2), u) == pytest.approx(expected[0] / expected[1])


def test_full_steering_slots(cfg):
    assert full_steering(cfg, (0.2,)) == [0.0, 0.0, 0.2]
    with pytest.raises(ValueError):
        full_steering(cfg, ())


def test_singular_steering():
    cfg = ms2t_config()
    with pytest.raises(SingularSteeringError):
        kinematics(cfg, (0.0, 0.0), 0.0, [0.0, 0.0, math.pi / 2])


def test_folded_chain_is_degenerate(cfg):
    with pytest.raises(DegenerateConfigurationError):
        velocity_factor(cfg, (0.0, 1.7), ControlInput(0.0, (0.0,)))


def test_state_derivative_consistency(cfg):
    x = VehicleState(1.0, 2.0, 0.3, (0.2, -0.1))
    u = ControlInput(0.05, (0.1,))
    d = state_derivative(cfg, x, u, -1.5)
    rates = joint_angle_rates(cfg, x.betas, u)
    assert d.v_n == pytest.approx(-1.5 * d.f_vn)
    assert d.dbetas == pytest.approx(tuple(d.v_n * r for r in rates))
    assert math.hypot(d.dx, d.dy) == pytest.approx(abs(d.v_n))


def test_integrate_step_matches_solve_ivp(cfg):
    x0 = VehicleState(0.5, -0.2, 0.4, (0.3, -0.2))
    u = ControlInput(0.1, (-0.15,))
    v0 = -1.0

    def rhs(t, v):
        d = state_derivative(cfg, VehicleState(v[0], v[1], v[2], tuple(v[3:])), u, v0)
        return [d.dx, d.dy, d.dtheta, *d.dbetas]

    ref = solve_ivp(rhs, (0.0, 0.5), [x0.x, x0.y, x0.theta, *x0.betas], rtol=1e-12, atol=1e-12).y[:, -1]
    x = integrate_step(cfg, x0, u, v0, 0.5, substeps=20)
    got = [x.x, x.y, x.theta, *x.betas]
    np.testing.assert_allclose(got, ref, atol=1e-9)


def test_integrate_step_straight_motion(cfg):
    x = integrate_step(cfg, VehicleState(0.0, 0.0, 0.0, (0.0, 0.0)), ControlInput(0.0, (0.0,)), -2.0, 0.5)
    np.testing.assert_allclose(x.as_array(), [-1.0, 0.0, 0.0, 0.0, 0.0], atol=1e-15)
    with pytest.raises(ValueError):
        integrate_step(cfg, x, ControlInput(0.0, (0.0,)), 1.0, 0.0)


def test_wrap_angle():
    np.testing.assert_allclose(wrap_angle(np.array([0.0, 3 * math.pi, -3 * math.pi / 2])),
                               [0.0, math.pi, math.pi / 2])
