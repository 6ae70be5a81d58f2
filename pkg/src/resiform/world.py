"""Point-mass drone dynamics, reference trajectories, spawning, collisions.

Dynamics are flat-earth point masses: m * p_ddot + m * g_vec = f_thrust,
integrated with semi-implicit Euler at a fixed physics step. Attitude is out
of scope; a thrust command is a free 3-vector force. A velocity command is
tracked by an inner proportional loop f = m * (g_vec + k_track * (v_cmd - v)),
which converges exponentially with time constant 1/k_track.

The default axis convention is y-up: gravity acts along -y and the planar
reference trajectories sweep the two horizontal axes (x, z). The up axis is
configurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

GRAVITY = 9.81  # m/s^2

_UP_AXES = {"x": 0, "y": 1, "z": 2}


class SimFault(RuntimeError):
    """Non-finite state or command encountered during integration."""


@dataclass
class SimParams:
    dt: float = 0.02                 # physics step, s
    substeps: int = 5                # physics steps per control decision
    mass: float = 1.0                # kg
    gravity: float = GRAVITY         # m/s^2
    up_axis: str = "y"
    k_track: float = 10.0            # velocity-loop gain, 1/s
    v_max: float = 3.0               # velocity-command clamp, m/s
    v_min: float = 3.0               # lower clamp magnitude, m/s
    collision_threshold: float = 0.15  # m, strict inequality

    def __post_init__(self):
        if self.up_axis not in _UP_AXES:
            raise ValueError(f"up_axis must be one of {sorted(_UP_AXES)}")
        for name in ("dt", "mass", "gravity", "k_track", "v_max", "v_min",
                     "collision_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def up(self) -> int:
        return _UP_AXES[self.up_axis]

    @property
    def gravity_vec(self) -> np.ndarray:
        g = np.zeros(3)
        g[self.up] = self.gravity
        return g

    @property
    def control_dt(self) -> float:
        return self.dt * self.substeps

    @property
    def horizontal(self) -> tuple[int, int]:
        """The two non-up axes, in ascending order."""
        a, b = sorted(set(range(3)) - {self.up})
        return a, b


@dataclass
class DroneState:
    position: np.ndarray
    velocity: np.ndarray
    mass: float = 1.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        if self.position.shape != (3,) or self.velocity.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError("mass must be positive and finite")


@dataclass
class Thrust:
    force: np.ndarray  # N, world frame

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=np.float64)


@dataclass
class VelocityCmd:
    velocity: np.ndarray  # m/s, world frame; clamped per SimParams at execution

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=np.float64)


ActuationCommand = Thrust | VelocityCmd


@dataclass
class WorldState:
    time: float
    drones: list[DroneState]
    collision_flags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self):
        if len(self.collision_flags) != len(self.drones):
            self.collision_flags = np.zeros(len(self.drones), dtype=bool)

    @property
    def n(self) -> int:
        return len(self.drones)

    def positions(self) -> np.ndarray:
        return np.stack([d.position for d in self.drones])

    def velocities(self) -> np.ndarray:
        return np.stack([d.velocity for d in self.drones])


def command_force(state: DroneState, cmd: ActuationCommand, params: SimParams) -> np.ndarray:
    """Resolve a command to a thrust force for the current state."""
    if isinstance(cmd, Thrust):
        return cmd.force
    v_cmd = np.clip(cmd.velocity, -params.v_min, params.v_max)
    return state.mass * (params.gravity_vec + params.k_track * (v_cmd - state.velocity))


def step_dynamics(state: DroneState, cmd: ActuationCommand, params: SimParams,
                  dt: float | None = None) -> DroneState:
    """One semi-implicit Euler step: velocity first, then position."""
    dt = params.dt if dt is None else dt
    force = command_force(state, cmd, params)
    if not np.all(np.isfinite(force)):
        raise SimFault("non-finite actuation command")
    acc = force / state.mass - params.gravity_vec
    velocity = state.velocity + dt * acc
    position = state.position + dt * velocity
    if not (np.all(np.isfinite(position)) and np.all(np.isfinite(velocity))):
        raise SimFault("non-finite state after integration")
    return DroneState(position=position, velocity=velocity, mass=state.mass)


def detect_collisions(world: WorldState, threshold: float = 0.15) -> np.ndarray:
    """Flag drone i when some other drone sits strictly closer than threshold.

    Purely diagnostic: no contact forces are applied.
    """
    n = world.n
    flags = np.zeros(n, dtype=bool)
    if n < 2:
        return flags
    pos = world.positions()
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    np.fill_diagonal(dist, np.inf)
    return (dist < threshold).any(axis=1)


# -- reference trajectories ------------------------------------------------------

TRAJECTORY_KINDS = ("circle", "line_x", "line_z", "square", "figure_eight",
                    "lemniscate3d")

# Default training pool: the 3D lemniscate is held out as the unseen
# evaluation trajectory and must not appear in training episodes.
TRAINING_POOL = ("circle", "line_x", "line_z", "square", "figure_eight")


@dataclass
class Trajectory:
    """A time-parameterized reference path for the leader.

    Planar kinds sweep the two horizontal axes; the lemniscate is fully 3D.
    All kinds stay within 4 m of the origin offset.
    """

    kind: str
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 2.0        # circle, m
    line_length: float = 4.0   # back-and-forth span, m
    side: float = 3.0          # square side, m
    speed: float = 0.5         # line/square traversal speed, m/s
    amplitude: float = 1.2     # figure-eight / lemniscate, m
    up_axis: str = "y"

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind: {self.kind!r}")
        self.offset = np.asarray(self.offset, dtype=np.float64)
        for name in ("radius", "line_length", "side", "speed", "amplitude"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.up_axis not in _UP_AXES:
            raise ValueError(f"up_axis must be one of {sorted(_UP_AXES)}")

    @property
    def period(self) -> float:
        if self.kind == "circle":
            return 2 * math.pi
        if self.kind in ("line_x", "line_z"):
            return 2 * self.line_length / self.speed
        if self.kind == "square":
            return 4 * self.side / self.speed
        if self.kind == "figure_eight":
            return 4 * math.pi
        return 2 * math.pi  # lemniscate3d

    def _axes(self) -> tuple[int, int]:
        a, b = sorted(set(range(3)) - {_UP_AXES[self.up_axis]})
        return a, b

    def _planar(self, t: float) -> tuple[float, float, float, float, float, float]:
        """(px, pz, vx, vz, ax, az) in the two horizontal axes."""
        k = self.kind
        if k == "circle":
            r = self.radius
            return (r * math.cos(t), r * math.sin(t),
                    -r * math.sin(t), r * math.cos(t),
                    -r * math.cos(t), -r * math.sin(t))
        if k in ("line_x", "line_z"):
            span, u = self.line_length, self.speed
            tau = t % (2 * span / u)
            d, v = (u * tau, u) if tau < span / u else (2 * span - u * tau, -u)
            return (d, 0.0, v, 0.0, 0.0, 0.0) if k == "line_x" else (0.0, d, 0.0, v, 0.0, 0.0)
        if k == "square":
            # Centered on the offset so the loop stays well inside the 4 m bound.
            side, u = self.side, self.speed
            half = side / 2.0
            tau = t % (4 * side / u)
            seg, s = divmod(tau * u, side)
            corners = [(-half, -half), (half, -half), (half, half), (-half, half)]
            dirs = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
            cx, cz = corners[int(seg) % 4]
            dx, dz = dirs[int(seg) % 4]
            return (cx + dx * s, cz + dz * s, u * dx, u * dz, 0.0, 0.0)
        if k == "figure_eight":
            a = self.amplitude
            return (a * math.sin(t), a * math.cos(t / 2),
                    a * math.cos(t), -a * math.sin(t / 2) / 2,
                    -a * math.sin(t), -a * math.cos(t / 2) / 4)
        raise AssertionError(k)

    def _lemniscate(self, t: float) -> np.ndarray:
        a = self.amplitude
        c, s = math.cos(t), math.sin(t)
        d = 1.0 + s * s
        return self.offset + np.array([a * c / d, a * c, a * c * s / d])

    def position(self, t: float) -> np.ndarray:
        if self.kind == "lemniscate3d":
            return self._lemniscate(t)
        ax, az = self._axes()
        px, pz, *_ = self._planar(t)
        p = self.offset.copy()
        p[ax] += px
        p[az] += pz
        return p

    def state(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Reference (position, velocity, acceleration) at time t."""
        if self.kind == "lemniscate3d":
            # Smooth curve: central differences are accurate and keep the
            # closed-form position as the single source of truth.
            h = 1e-5
            p0 = self._lemniscate(t)
            pp, pm = self._lemniscate(t + h), self._lemniscate(t - h)
            return p0, (pp - pm) / (2 * h), (pp - 2 * p0 + pm) / h**2
        ax, az = self._axes()
        px, pz, vx, vz, aax, aaz = self._planar(t)
        p = self.offset.copy()
        v = np.zeros(3)
        a = np.zeros(3)
        p[ax] += px
        p[az] += pz
        v[ax], v[az] = vx, vz
        a[ax], a[az] = aax, aaz
        return p, v, a

class PhasedTrajectory:
    """Trajectory advanced by a fixed phase. The path stays in absolute
    coordinates (the leader flies to it from wherever it spawned); an
    optional anchor translates the path so it passes through that point
    at t=0 instead."""

    def __init__(self, base: Trajectory, anchor: np.ndarray | None = None,
                 phase: float = 0.0):
        self.phase = float(phase)
        if anchor is None:
            self.base = base
        else:
            zeroed = replace(base, offset=np.zeros(3))
            start = zeroed.position(self.phase)
            self.base = replace(
                base, offset=np.asarray(anchor, dtype=np.float64) - start)

    @property
    def offset(self) -> np.ndarray:
        return self.base.offset

    @property
    def kind(self) -> str:
        return self.base.kind

    def position(self, t: float) -> np.ndarray:
        return self.base.position(t + self.phase)

    def state(self, t: float):
        return self.base.state(t + self.phase)


# -- spawning --------------------------------------------------------------------

# Axis-aligned affine maps from unit uniforms to spawn positions.
_LEADER_SCALE = np.array([2.0, -0.5, 2.2])
_LEADER_SHIFT = np.array([-1.2, 3.0, -0.2])
_FOLLOWER_SCALE = np.array([3.2, 2.2, 3.2])
_FOLLOWER_SHIFT = np.array([-1.2, -0.5, -0.2])


def leader_spawn_from_unit(u: np.ndarray) -> np.ndarray:
    return _LEADER_SCALE * np.asarray(u, dtype=np.float64) + _LEADER_SHIFT


def follower_spawn_from_unit(u: np.ndarray) -> np.ndarray:
    return _FOLLOWER_SCALE * np.asarray(u, dtype=np.float64) + _FOLLOWER_SHIFT


def spawn_agents(seed, n: int, mass: float = 1.0,
                 leader_override: np.ndarray | None = None) -> WorldState:
    """Spawn the leader (index 0) and n-1 followers at rest in their
    respective uniform boxes. Deterministic for a given seed."""
    if n < 2:
        raise ValueError("need at least a leader and one follower")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if leader_override is not None:
        leader_pos = np.asarray(leader_override, dtype=np.float64)
    else:
        leader_pos = leader_spawn_from_unit(rng.random(3))
    drones = [DroneState(position=leader_pos, velocity=np.zeros(3), mass=mass)]
    for _ in range(n - 1):
        drones.append(DroneState(position=follower_spawn_from_unit(rng.random(3)),
                                 velocity=np.zeros(3), mass=mass))
    return WorldState(time=0.0, drones=drones)


def sample_in_ball(rng: np.random.Generator, center: np.ndarray, radius: float) -> np.ndarray:
    """Uniform sample inside a ball (rejection-free: direction + cbrt radius)."""
    direction = rng.normal(size=3)
    norm = np.linalg.norm(direction)
    if norm < 1e-12:
        direction, norm = np.array([1.0, 0.0, 0.0]), 1.0
    r = radius * rng.random() ** (1.0 / 3.0)
    return np.asarray(center, dtype=np.float64) + direction / norm * r
