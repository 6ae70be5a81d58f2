"""Controller laws: equilibria, proportional response, degenerate geometry."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resiform.control import (
    ANGLE_PARTNERS,
    FormationSpec,
    Gains,
    angle_follower,
    displacement_follower,
    distance_follower,
    leader_track,
    signed_angle,
)
from resiform.world import DroneState, SimParams, Trajectory, step_dynamics

PAR = SimParams()
G = PAR.gravity_vec
GAINS = Gains()


def drone(pos, vel=(0.0, 0.0, 0.0), mass=1.0):
    return DroneState(position=np.asarray(pos, float), velocity=np.asarray(vel, float), mass=mass)


def finite_vec3():
    return st.tuples(*[st.floats(-5, 5) for _ in range(3)]).map(np.asarray)


# -- leader tracking ----------------------------------------------------------------


def test_leader_on_reference_hovers():
    st_ = drone([1.0, 2.0, 3.0], [0.5, 0.0, -0.5])
    u = leader_track(st_, st_.position, st_.velocity, np.zeros(3), GAINS, G)
    np.testing.assert_array_equal(u.force, st_.mass * G)


def test_leader_position_error_response():
    st_ = drone([1.0, 0.0, 0.0])
    u = leader_track(st_, np.zeros(3), np.zeros(3), np.zeros(3), GAINS, G)
    np.testing.assert_allclose(u.force - st_.mass * G, [-GAINS.k_p, 0.0, 0.0], atol=1e-14)


def test_leader_feedforward_passthrough():
    st_ = drone([0.0, 0.0, 0.0])
    acc = np.array([0.3, -0.2, 0.1])
    u = leader_track(st_, np.zeros(3), np.zeros(3), acc, GAINS, G)
    np.testing.assert_allclose(u.force, st_.mass * (G + acc), atol=1e-14)


@given(p=finite_vec3(), v=finite_vec3())
@settings(max_examples=30, deadline=None)
def test_leader_zero_error_is_equilibrium(p, v):
    st_ = drone(p, v)
    u = leader_track(st_, p, v, np.zeros(3), GAINS, G)
    np.testing.assert_allclose(u.force, st_.mass * G, atol=1e-12)


def test_leader_response_is_linear_in_error():
    st_ = drone([0.0, 0.0, 0.0])
    ref = np.array([0.2, -0.4, 0.6])
    u1 = leader_track(st_, ref, np.zeros(3), np.zeros(3), GAINS, G).force
    u2 = leader_track(st_, 2 * ref, np.zeros(3), np.zeros(3), GAINS, G).force
    np.testing.assert_allclose(u2 - st_.mass * G, 2 * (u1 - st_.mass * G), atol=1e-12)


# -- displacement law ---------------------------------------------------------------


def test_displacement_at_offset_hovers():
    offset = np.array([-0.5, 0.0, 1.0])
    lead_v = np.array([0.4, 0.0, 0.0])
    st_ = drone([1.0, 2.0, 3.0], lead_v)
    u = displacement_follower(st_, offset.copy(), lead_v, offset, GAINS, G)
    np.testing.assert_allclose(u.force, st_.mass * G, atol=1e-14)


def test_displacement_offset_error_response():
    offset = np.array([0.0, 0.0, 1.0])
    st_ = drone([0.0, 0.0, 0.0])
    u = displacement_follower(st_, offset + np.array([1.0, 0.0, 0.0]),
                              np.zeros(3), offset, GAINS, G)
    np.testing.assert_allclose(u.force - st_.mass * G, [-GAINS.k_p, 0.0, 0.0], atol=1e-14)


def test_displacement_acceleration_feedforward():
    offset = np.array([0.0, 0.0, 1.0])
    acc = np.array([0.0, 0.0, -2.0])
    st_ = drone([5.0, 0.0, 0.0])
    u = displacement_follower(st_, offset.copy(), np.zeros(3), offset, GAINS, G,
                              leader_acceleration=acc)
    np.testing.assert_allclose(u.force, st_.mass * (G + acc), atol=1e-14)


def test_displacement_under_denial_diverges():
    # Link dead: measured leader quantities are all zero. Simulate 10 s and
    # require the offset error to grow at every 1 s checkpoint.
    offset = np.array([0.5, 0.0, 1.0])
    traj = Trajectory(kind="circle", offset=np.array([0.0, 4.0, 0.0]))
    st_ = drone(traj.position(0.0) + offset)
    errs = []
    t = 0.0
    for k in range(10 * 50):
        u = displacement_follower(st_, np.zeros(3), np.zeros(3), offset, GAINS, G)
        for _ in range(PAR.substeps):
            st_ = step_dynamics(st_, u, PAR)
        t += PAR.control_dt
        if (k + 1) % 10 == 0:
            lead_p, _, _ = traj.state(t)
            errs.append(float(np.linalg.norm(st_.position - (lead_p + offset))))
    assert all(b > a for a, b in zip(errs, errs[1:])), errs
    assert errs[-1] > 1.0


# -- distance law -------------------------------------------------------------------


def test_distance_at_desired_hovers():
    st_ = drone([0.0, 0.0, 0.0])
    meas = [(np.array([1.0, 0.0, 0.0]), 1.0), (np.array([0.0, 0.0, -2.0]), 2.0)]
    u = distance_follower(st_, meas, GAINS, G)
    np.testing.assert_allclose(u.force, st_.mass * G, atol=1e-14)


def test_distance_too_far_pulls_toward_neighbor():
    st_ = drone([0.0, 0.0, 0.0])
    u = distance_follower(st_, [(np.array([2.0, 0.0, 0.0]), 1.0)], GAINS, G)
    np.testing.assert_allclose(u.force - st_.mass * G, [GAINS.k_p, 0.0, 0.0], atol=1e-14)


def test_distance_too_close_pushes_away():
    st_ = drone([0.0, 0.0, 0.0])
    u = distance_follower(st_, [(np.array([0.5, 0.0, 0.0]), 1.0)], GAINS, G)
    np.testing.assert_allclose(u.force - st_.mass * G, [-0.5 * GAINS.k_p, 0.0, 0.0], atol=1e-14)


def test_distance_coincident_neighbor_skipped():
    st_ = drone([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    u = distance_follower(st_, [(np.zeros(3), 1.0)], GAINS, G)
    assert np.all(np.isfinite(u.force))
    np.testing.assert_allclose(u.force, st_.mass * (G - GAINS.k_v * st_.velocity), atol=1e-14)


# -- angle law ----------------------------------------------------------------------


def test_signed_angle_right_angle():
    assert signed_angle(np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])) == pytest.approx(math.pi / 2)
    assert signed_angle(np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])) == pytest.approx(-math.pi / 2)


def test_signed_angle_vertical_pair_positive():
    # Both projections vanish onto the horizontal plane: degenerate sign -> +.
    th = signed_angle(np.array([0.0, 1.0, 0.0]), np.array([1.0, 1.0, 0.0]))
    assert th == pytest.approx(math.pi / 4)


def test_angle_at_desired_hovers():
    st_ = drone([0.0, 0.0, 0.0], [0.0, 0.2, 0.0])
    to_j = np.array([1.0, 0.0, 0.0])
    to_k = np.array([0.0, 0.0, 1.0])
    u = angle_follower(st_, to_j, to_k, math.pi / 2, GAINS, G)
    np.testing.assert_allclose(u.force, st_.mass * (G - GAINS.k_v * st_.velocity), atol=1e-14)


def test_angle_error_response_magnitude():
    st_ = drone([0.0, 0.0, 0.0])
    to_j = np.array([1.0, 0.0, 0.0])
    to_k = np.array([0.0, 0.0, 1.0])
    theta_star = math.pi / 2 - 0.1
    u = angle_follower(st_, to_j, to_k, theta_star, GAINS, G)
    expected = GAINS.k_p * 0.1 * (to_j + to_k)
    np.testing.assert_allclose(u.force - st_.mass * G, expected, atol=1e-12)


def test_angle_collinear_degrades_to_damping():
    st_ = drone([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    u = angle_follower(st_, np.array([1.0, 0.0, 0.0]), np.array([2.0, 0.0, 0.0]),
                       1.0, GAINS, G)
    np.testing.assert_allclose(u.force, st_.mass * (G - GAINS.k_v * st_.velocity), atol=1e-14)


def test_angle_coincident_degrades_to_damping():
    st_ = drone([0.0, 0.0, 0.0])
    u = angle_follower(st_, np.zeros(3), np.array([1.0, 0.0, 0.0]), 1.0, GAINS, G)
    np.testing.assert_allclose(u.force, st_.mass * G, atol=1e-14)


# -- formation spec -----------------------------------------------------------------


def test_spec_desired_distance_and_rel():
    spec = FormationSpec()
    np.testing.assert_array_equal(spec.desired_rel(1, 0), [0.5, 0.0, -1.0])
    assert spec.desired_distance(1, 2) == pytest.approx(0.5)
    assert spec.desired_distance(0, 5) == pytest.approx(2.0)


def test_spec_front_row_reference_angle():
    spec = FormationSpec()
    j, k = ANGLE_PARTNERS[1]
    assert spec.desired_angle(j, 1, k) == pytest.approx(1.1071487177940904)


def test_spec_rejects_leader_key_and_bad_shape():
    with pytest.raises(ValueError):
        FormationSpec(offsets={0: np.zeros(3)})
    with pytest.raises(ValueError):
        FormationSpec(offsets={1: np.zeros(2)})


def test_spec_agent_count():
    assert FormationSpec().n_agents == 7


@given(i=st.sampled_from([1, 2, 3, 4, 5, 6]))
@settings(max_examples=6, deadline=None)
def test_angle_partners_geometry_is_well_posed(i):
    spec = FormationSpec()
    j, k = ANGLE_PARTNERS[i]
    th = spec.desired_angle(j, i, k)
    assert 0 < abs(th) < math.pi
