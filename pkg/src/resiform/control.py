"""Classical formation-control laws.

Four thrust-mode controllers, all gravity-compensated PD variants with shared
gains (k_p, k_v):

- leader_track: PD with full reference feedforward; drives the leader along
  the mission trajectory.
- displacement_follower: holds a desired offset from the leader using the
  broadcast leader state. When the leader link is denied, the caller
  substitutes zero vectors for the leader-relative quantities, which turns
  the position term into a constant push; the law destabilizes by design.
- distance_follower: gradient-style correction on pairwise distance errors.
  It constrains shape only through distances, so formations can rotate or
  reflect without penalty.
- angle_follower: corrects the angle subtended at the agent by two reference
  neighbors. Weakest of the set; angles constrain neither scale nor
  translation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .world import DroneState, Thrust

log = logging.getLogger(__name__)

_EPS_COINCIDENT = 1e-6


@dataclass
class Gains:
    k_p: float = 6.0
    k_v: float = 0.5

    def __post_init__(self):
        if self.k_p <= 0 or self.k_v <= 0:
            raise ValueError("gains must be positive")


DEFAULT_OFFSETS: dict[int, tuple[float, float, float]] = {
    # follower world index -> desired offset from the leader, m
    1: (-0.5, 0.0, 1.0),
    2: (0.0, 0.0, 1.0),
    3: (0.5, 0.0, 1.0),
    4: (-0.5, 0.0, 2.0),
    5: (0.0, 0.0, 2.0),
    6: (0.5, 0.0, 2.0),
}


def signed_angle(u: np.ndarray, v: np.ndarray, horizontal: tuple[int, int] = (0, 2)) -> float:
    """Angle between 3-vectors u, v with magnitude arccos(unit dot).

    The sign comes from the orientation of their horizontal projections
    (axes `horizontal`, in that order); degenerate projections default to
    positive. Raises for near-zero input vectors.
    """
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < _EPS_COINCIDENT or nv < _EPS_COINCIDENT:
        raise ValueError("cannot measure an angle to a coincident point")
    cosang = float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
    theta = math.acos(cosang)
    a, b = horizontal
    cross = u[a] * v[b] - u[b] * v[a]
    return -theta if cross < 0 else theta


@dataclass
class FormationSpec:
    """Desired geometry: per-follower offsets from the leader."""

    offsets: dict[int, np.ndarray] = field(
        default_factory=lambda: {i: np.asarray(v, dtype=np.float64)
                                 for i, v in DEFAULT_OFFSETS.items()})

    def __post_init__(self):
        self.offsets = {int(i): np.asarray(v, dtype=np.float64)
                        for i, v in self.offsets.items()}
        for i, v in self.offsets.items():
            if i == 0:
                raise ValueError("offsets are keyed by follower index; 0 is the leader")
            if v.shape != (3,):
                raise ValueError(f"offset for follower {i} must be a 3-vector")

    @property
    def n_agents(self) -> int:
        return len(self.offsets) + 1

    def offset(self, i: int) -> np.ndarray:
        return self.offsets[i]

    def desired_rel(self, i: int, j: int) -> np.ndarray:
        """Desired p_j - p_i; index 0 is the leader with zero offset."""
        a = np.zeros(3) if i == 0 else self.offsets[i]
        b = np.zeros(3) if j == 0 else self.offsets[j]
        return b - a

    def desired_distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.desired_rel(i, j)))

    def desired_angle(self, j: int, i: int, k: int,
                      horizontal: tuple[int, int] = (0, 2)) -> float:
        """Desired angle at agent i between rays toward agents j and k."""
        return signed_angle(self.desired_rel(i, j), self.desired_rel(i, k), horizontal)


# -- control laws ------------------------------------------------------------------


def leader_track(state: DroneState, ref_pos: np.ndarray, ref_vel: np.ndarray,
                 ref_acc: np.ndarray, gains: Gains, gravity_vec: np.ndarray) -> Thrust:
    """PD tracking with feedforward:
    u = m [g + a* - k_v (v - v*) - k_p (p - p*)]."""
    u = state.mass * (gravity_vec + ref_acc
                      - gains.k_v * (state.velocity - ref_vel)
                      - gains.k_p * (state.position - ref_pos))
    return Thrust(force=u)


def displacement_follower(state: DroneState, rel_to_leader: np.ndarray,
                          leader_velocity: np.ndarray, offset: np.ndarray,
                          gains: Gains, gravity_vec: np.ndarray,
                          leader_acceleration: np.ndarray | None = None) -> Thrust:
    """Offset hold against the broadcast leader state:
    u = m [g + a_1 - k_v (v - v_1) - k_p ((p - p_1) - p*)].

    rel_to_leader is the measured p - p_1. Under link denial the caller
    passes zero vectors (and no acceleration), leaving -k_p(-p*) as a
    constant push away from the phantom offset.
    """
    acc_ff = np.zeros(3) if leader_acceleration is None else leader_acceleration
    u = state.mass * (gravity_vec + acc_ff
                      - gains.k_v * (state.velocity - leader_velocity)
                      - gains.k_p * (rel_to_leader - offset))
    return Thrust(force=u)


def distance_follower(state: DroneState,
                      measurements: list[tuple[np.ndarray, float]],
                      gains: Gains, gravity_vec: np.ndarray) -> Thrust:
    """Distance-error correction:
    u = m [g - k_v v + k_p * sum_j (||p_j - p_i|| - d*_ij) unit(p_j - p_i)].

    measurements holds (p_j - p_i, desired distance) pairs. Terms whose
    baseline is shorter than 1e-6 m are skipped (no meaningful direction).
    """
    correction = np.zeros(3)
    for rel, desired in measurements:
        dist = float(np.linalg.norm(rel))
        if dist < _EPS_COINCIDENT:
            log.warning("distance term skipped: coincident neighbor")
            continue
        correction += (dist - desired) * (rel / dist)
    u = state.mass * (gravity_vec - gains.k_v * state.velocity + gains.k_p * correction)
    return Thrust(force=u)


def angle_follower(state: DroneState, to_j: np.ndarray, to_k: np.ndarray,
                   theta_star: float, gains: Gains, gravity_vec: np.ndarray,
                   horizontal: tuple[int, int] = (0, 2)) -> Thrust:
    """Subtended-angle correction:
    u = m [g - k_v v + k_p (theta - theta*) (unit(to_j) + unit(to_k))].

    to_j, to_k point from the agent toward its two reference neighbors.
    Collinear or coincident geometry yields pure damping with a warning.
    """
    damped = state.mass * (gravity_vec - gains.k_v * state.velocity)
    try:
        theta = signed_angle(to_j, to_k, horizontal)
    except ValueError:
        log.warning("angle term skipped: coincident neighbor")
        return Thrust(force=damped)
    if min(abs(theta), math.pi - abs(theta)) < 1e-9:
        log.warning("angle term skipped: collinear geometry")
        return Thrust(force=damped)
    u_j = to_j / np.linalg.norm(to_j)
    u_k = to_k / np.linalg.norm(to_k)
    corrective = state.mass * gains.k_p * (theta - theta_star) * (u_j + u_k)
    return Thrust(force=damped + corrective)


# Reference-neighbor assignment for the angle law: each follower watches the
# leader and a same-row partner.
ANGLE_PARTNERS: dict[int, tuple[int, int]] = {
    1: (0, 2), 2: (0, 3), 3: (0, 2),
    4: (0, 5), 5: (0, 6), 6: (0, 5),
}
