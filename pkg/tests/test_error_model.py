import math

import numpy as np
import pytest

from trailer_mpc.error_model import (PathError, auxiliary_errors, compute_error, discretize,
                                     linearize_along, linearize_numeric, linearize_sample,
                                     spatial_dynamics, straight_path_matrices)
from trailer_mpc.errors import FrenetDomainError
from trailer_mpc.path import build_figure_eight, build_straight, project
from trailer_mpc.vehicle import VehicleState


@pytest.fixture(scope="module")
def eight():
    from trailer_mpc.vehicle import ms2t_config
    return build_figure_eight(ms2t_config(), 0.07, -1)


def test_error_is_zero_on_the_path(eight, cfg):
    smp = eight.sample_at(40.0)
    proj = project(eight, (smp.state.x, smp.state.y), s_hint=40.0)
    err = compute_error(cfg, smp.state, eight, proj)
    np.testing.assert_allclose(err.as_array(), 0.0, atol=1e-9)


def test_error_components(cfg):
    p = build_straight(cfg, 20.0)
    x = VehicleState(6.0, -0.4, 0.1, (0.05, -0.2))
    err = compute_error(cfg, x, p, project(p, (6.0, -0.4), s_hint=6.0))
    # error order: z, theta, beta_2, beta_1
    np.testing.assert_allclose(err.as_array(), [-0.4, 0.1, -0.2, 0.05], atol=1e-12)
    assert err.s == pytest.approx(6.0)


def test_origin_is_an_equilibrium(eight, cfg):
    for s in (10.0, 47.5, 80.0):
        np.testing.assert_allclose(spatial_dynamics(cfg, s, np.zeros(4), np.zeros(2), eight), 0.0,
                                   atol=1e-12)


@pytest.mark.parametrize("s", [12.0, 50.0, 91.3])
def test_linearization_is_first_order_accurate(eight, cfg, s, rng):
    A, B = linearize_numeric(cfg, eight, s)
    for _ in range(5):
        dx, du = rng.standard_normal(4), rng.standard_normal(2)
        errs = []
        for eps in (1e-2, 5e-3):
            f = spatial_dynamics(cfg, s, eps * dx, eps * du, eight) * eight.direction
            errs.append(np.max(np.abs(f - eps * (A @ dx + B @ du))))
        # remainder shrinks quadratically
        assert errs[1] < 0.3 * errs[0] + 1e-12


def test_straight_matrices_direction_independent(cfg):
    A, B = straight_path_matrices(cfg)
    smp = build_straight(cfg, 5.0, direction=-1).sample_at(2.0)
    A2, B2 = linearize_sample(cfg, smp)
    np.testing.assert_allclose(A, A2, atol=1e-12)
    np.testing.assert_allclose(B, B2, atol=1e-12)


def test_discretize():
    A, B = np.arange(4.0).reshape(2, 2), np.ones((2, 1))
    F, G = discretize(A, B, 0.2, -1)
    np.testing.assert_allclose(F, np.eye(2) - 0.2 * A)
    np.testing.assert_allclose(G, -0.2 * B)
    with pytest.raises(ValueError):
        discretize(A, B, 0.2, 0)
    with pytest.raises(ValueError):
        discretize(A, B, -0.1, 1)


def test_linearize_along_matches_samples_at_grid_points(eight, cfg):
    s = eight.s[[10, 11, 200]]
    lin = linearize_along(eight, s)
    for k, sk in enumerate(s):
        A, B = linearize_sample(cfg, eight.sample_at(sk))
        np.testing.assert_allclose(lin.A[k], A, atol=1e-12)
        np.testing.assert_allclose(lin.B[k], B, atol=1e-12)
    F, G = discretize(lin.A, lin.B, eight.delta_s, -1)
    np.testing.assert_allclose(lin.F, F)
    np.testing.assert_allclose(lin.G, G)


def chain_positions(cfg, x):
    """Axle positions and headings from the last trailer to the tractor."""
    pos = [np.array([x.x, x.y])]
    th = [x.theta]
    for i in range(cfg.n_trailers, 0, -1):
        th_prev = th[-1] + x.betas[i - 1]
        L, M = cfg.segment_lengths[i - 1], cfg.hitch_offsets[i - 1]
        hitch = pos[-1] + L * np.array([math.cos(th[-1]), math.sin(th[-1])])
        pos.append(hitch + M * np.array([math.cos(th_prev), math.sin(th_prev)]))
        th.append(th_prev)
    return pos, th


def test_auxiliary_errors_match_chain_geometry(cfg):
    # on a straight path along +x the lateral error of every axle is its y coordinate
    x = VehicleState(3.0, 0.3, -0.2, (0.4, 0.25))
    pos, th = chain_positions(cfg, x)
    err = PathError(0.3, -0.2, (0.25, 0.4))
    aux = auxiliary_errors(cfg, err)
    np.testing.assert_allclose(aux, [pos[1][1], th[1], pos[2][1], th[2]], atol=1e-12)


def test_frenet_domain_error(cfg):
    p = build_straight(cfg, 10.0)
    with pytest.raises(FrenetDomainError):
        spatial_dynamics(cfg, 2.0, [0.0, 1.4, 0.0, 0.0], [0.0, 0.3], p)
