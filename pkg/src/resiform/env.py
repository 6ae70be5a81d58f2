"""Formation episode environment.

One leader (index 0) tracks a reference trajectory; followers hold desired
offsets from it. The learned agent acts on a fixed decision interval
(substeps * dt); classical laws and the leader's tracking loop run at the
physics rate underneath, as onboard controllers would. A denial attacker at a
fixed position severs the leader link of designated followers whenever they
fly within its range; link state is sampled once per decision round, and a
severed follower falls back to locally sensed neighbors.

Follower actuation comes either from one of the classical laws (displacement,
distance, angle) applied to every follower, or, under the "gat" controller,
from an external action driving the attacked follower while the remaining
followers run the displacement law. Actions are normalized velocity commands
in [-1, 1]^3, scaled by the velocity clamp at execution and held for the
decision interval.

The per-step reward for the learned follower is
    r = -(||e||^2 + 0.1 ||u|| + 0.5 c) / t_max
with e the offset error against the actual leader position, u the executed
velocity command, and c that follower's collision flag. Rewards are never
positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .comms import CommView, build_comm_view
from .config import ConfigError, RunConfig
from .control import (
    ANGLE_PARTNERS,
    FormationSpec,
    angle_follower,
    displacement_follower,
    distance_follower,
    leader_track,
)
from .world import (
    DroneState,
    PhasedTrajectory,
    Thrust,
    Trajectory,
    VelocityCmd,
    WorldState,
    command_force,
    detect_collisions,
    follower_spawn_from_unit,
    sample_in_ball,
    spawn_agents,
    step_dynamics,
)


@dataclass(frozen=True)
class Mission:
    name: str
    trajectory_kind: str
    attack: bool


MISSIONS: dict[str, Mission] = {m.name: m for m in (
    Mission("circle_no_attack", "circle", False),
    Mission("circle", "circle", True),
    Mission("line_x", "line_x", True),
    Mission("line_z", "line_z", True),
    Mission("square", "square", True),
    Mission("figure_eight", "figure_eight", True),
    Mission("lemniscate", "lemniscate3d", True),
)}

CONTROLLERS = ("displacement", "distance", "angle", "gat")

EVAL_LEADER_CENTER = np.array([0.0, 0.0, 4.0])
EVAL_LEADER_RADIUS = 0.5

# Distance-law sensing graph: follower -> measured partners (0 is the leader).
DIST_PARTNERS: dict[int, tuple[int, ...]] = {
    1: (0, 2, 4), 2: (0, 1, 3, 5), 3: (0, 2, 6),
    4: (0, 1, 5), 5: (0, 2, 4, 6), 6: (0, 3, 5),
}

OBS_SELF_DIM = 6      # [own velocity | measured offset from leader]
OBS_NEIGHBOR_DIM = 6  # [relative position | neighbor velocity]

TRACE_COLUMNS = ("t", "id", "px", "py", "pz", "vx", "vy", "vz",
                 "collision", "attacked")


def resolve_mission(name: str) -> Mission:
    try:
        return MISSIONS[name]
    except KeyError:
        raise ConfigError(
            f"unknown mission {name!r}; expected one of {sorted(MISSIONS)}") from None


class FormationEnv:
    """Episode simulator; reset() then step() for t_max control decisions."""

    def __init__(self, cfg: RunConfig, mission: str | Mission = "circle", *,
                 controller: str = "displacement", train_mode: bool = False,
                 record: bool = False):
        if controller not in CONTROLLERS:
            raise ConfigError(
                f"unknown controller {controller!r}; expected one of {CONTROLLERS}")
        self.cfg = cfg
        self.mission = resolve_mission(mission) if isinstance(mission, str) else mission
        self.controller = controller
        self.train_mode = train_mode
        self.record = record
        self.spec = FormationSpec(offsets={i: np.asarray(v, dtype=np.float64)
                                           for i, v in cfg.offsets.items()})
        self.n = cfg.n_agents
        self.agent_index = cfg.comm.attacked[0]
        self.world: WorldState | None = None
        self.traj: PhasedTrajectory | None = None

    # -- lifecycle --------------------------------------------------------------

    def reset(self, *, seed=None, rng: np.random.Generator | None = None) -> dict:
        rng = rng if rng is not None else np.random.default_rng(seed)
        sim = self.cfg.sim
        if self.train_mode:
            kind = self.cfg.train_trajectories[
                rng.integers(len(self.cfg.train_trajectories))]
            base = Trajectory(kind=kind, up_axis=sim.up_axis)
            self.world = spawn_agents(rng, self.n, mass=sim.mass)
            phase = float(rng.uniform(0.0, base.period))
        else:
            base = Trajectory(kind=self.mission.trajectory_kind, up_axis=sim.up_axis)
            leader_pos = sample_in_ball(rng, EVAL_LEADER_CENTER, EVAL_LEADER_RADIUS)
            drones = [DroneState(position=leader_pos, velocity=np.zeros(3),
                                 mass=sim.mass)]
            for _ in range(self.n - 1):
                drones.append(DroneState(
                    position=follower_spawn_from_unit(rng.random(3)),
                    velocity=np.zeros(3), mass=sim.mass))
            self.world = WorldState(time=0.0, drones=drones)
            phase = 0.0
        # Absolute reference path: the leader must fly to it from its spawn,
        # so every episode begins with an approach transient.
        self.traj = PhasedTrajectory(base, phase=phase)
        self.step_count = 0
        self.error_series: list[np.ndarray] = []   # per step: per-follower errors
        self.ef_series: list[float] = []           # per step: mean over followers
        self.flag_series: list[np.ndarray] = []    # per step: per-drone collisions
        self.link_series: list[bool] = []          # per step: agent link state
        self.trace_rows: list[tuple] = []
        self._views = self._build_views()
        return self._observe(self.agent_index)

    def step(self, action: np.ndarray | None = None):
        if self.world is None:
            raise RuntimeError("call reset() before step()")
        if self.controller == "gat" and action is None:
            raise ValueError("the gat controller requires an action each step")
        if self.controller != "gat" and action is not None:
            raise ValueError(f"the {self.controller} controller takes no action")
        sim = self.cfg.sim
        t0 = self.step_count * sim.control_dt

        # Link state is sampled once per decision round and held; the learned
        # velocity command is likewise held while classical laws track at the
        # physics rate.
        link_alive = {i: self._views[i].leader_link_alive for i in range(1, self.n)}
        v_cmd = None
        if self.controller == "gat":
            v_cmd = np.clip(np.asarray(action, dtype=np.float64),
                            -1.0, 1.0) * sim.v_max

        drones = list(self.world.drones)
        for s in range(sim.substeps):
            t_sub = t0 + s * sim.dt
            ref_p, ref_v, ref_a = self.traj.state(t_sub)
            leader_cmd = leader_track(drones[0], ref_p, ref_v, ref_a,
                                      self.cfg.gains, sim.gravity_vec)
            leader_acc = (command_force(drones[0], leader_cmd, sim) / drones[0].mass
                          - sim.gravity_vec)
            cmds: list = [leader_cmd]
            for i in range(1, self.n):
                if self.controller == "gat" and i == self.agent_index:
                    cmds.append(VelocityCmd(velocity=v_cmd))
                else:
                    law = ("displacement" if self.controller == "gat"
                           else self.controller)
                    cmds.append(self._classical(i, law, drones, leader_acc,
                                                link_alive[i]))
            drones = [step_dynamics(d, cmds[i], sim) for i, d in enumerate(drones)]

        self.step_count += 1
        t_next = self.step_count * sim.control_dt
        flags = detect_collisions(
            WorldState(time=t_next, drones=drones), sim.collision_threshold)
        self.world = WorldState(time=t_next, drones=drones, collision_flags=flags)
        self._views = self._build_views()

        errors = self.follower_errors(t_next)
        self.error_series.append(errors)
        self.ef_series.append(float(np.mean(errors)))
        self.flag_series.append(flags.copy())
        self.link_series.append(self._views[self.agent_index].leader_link_alive)
        if self.record:
            self._record_step()

        reward = 0.0
        if self.controller == "gat":
            agent = self.world.drones[self.agent_index]
            leader = self.world.drones[0]
            err = agent.position - leader.position - self.spec.offset(self.agent_index)
            cost = (float(err @ err) + 0.1 * float(np.linalg.norm(v_cmd))
                    + 0.5 * float(flags[self.agent_index]))
            reward = -cost / self.cfg.t_max

        truncated = self.step_count >= self.cfg.t_max
        out_of_bounds = False
        if self.train_mode and self.controller == "gat":
            # Cut drifting rollouts early so training stays on states the
            # policy can actually visit when it works; a bootstrap truncation,
            # not a terminal, so leaving bounds is never rewarded.
            agent = self.world.drones[self.agent_index]
            slot = (self.world.drones[0].position
                    + self.spec.offset(self.agent_index))
            out_of_bounds = (float(np.linalg.norm(agent.position - slot))
                             > self.cfg.train_bound)
            truncated = truncated or out_of_bounds
        info = {
            "t": t_next,
            "errors": errors,
            "e_agent": float(errors[self.agent_index - 1]),
            "e_f": self.ef_series[-1],
            "collision": bool(flags[self.agent_index]),
            "link_alive": self.link_series[-1],
            "out_of_bounds": out_of_bounds,
        }
        return self._observe(self.agent_index), reward, False, truncated, info

    # -- internals --------------------------------------------------------------

    def _build_views(self) -> dict[int, CommView]:
        return {i: build_comm_view(self.world, i, self.cfg.comm,
                                   attack_enabled=self._attack_enabled())
                for i in range(1, self.n)}

    def _attack_enabled(self) -> bool:
        return self.train_mode or self.mission.attack

    def _classical(self, i: int, law: str, drones: list[DroneState],
                   leader_acc: np.ndarray, link_alive: bool) -> Thrust:
        sim = self.cfg.sim
        me = drones[i]
        leader = drones[0]
        if law == "displacement":
            if link_alive:
                return displacement_follower(
                    me, me.position - leader.position, leader.velocity,
                    self.spec.offset(i), self.cfg.gains, sim.gravity_vec,
                    leader_acceleration=leader_acc)
            return displacement_follower(
                me, np.zeros(3), np.zeros(3), self.spec.offset(i),
                self.cfg.gains, sim.gravity_vec)
        if law == "distance":
            meas = []
            for j in DIST_PARTNERS.get(i, ()):
                if j == 0 and not link_alive:
                    continue
                meas.append((drones[j].position - me.position,
                             self.spec.desired_distance(i, j)))
            return distance_follower(me, meas, self.cfg.gains, sim.gravity_vec)
        if law == "angle":
            j, k = ANGLE_PARTNERS[i]
            if (j == 0 or k == 0) and not link_alive:
                damped = me.mass * (sim.gravity_vec - self.cfg.gains.k_v * me.velocity)
                return Thrust(force=damped)
            to_j = drones[j].position - me.position
            to_k = drones[k].position - me.position
            theta_star = self.spec.desired_angle(j, i, k)
            return angle_follower(me, to_j, to_k, theta_star,
                                  self.cfg.gains, sim.gravity_vec)
        raise ValueError(f"unknown classical law {law!r}")

    def _observe(self, i: int) -> dict:
        """Dual-mode observation for follower i.

        Leader link alive: self features carry the measured leader offset and
        the neighbor buffer is blank (fully masked out). Link dead: the
        leader slot is zero and locally sensed neighbors fill the buffer,
        nearest first.
        """
        view = self._views[i]
        me = self.world.drones[i]
        n_max = self.cfg.comm.n_max
        self_feats = np.concatenate([me.velocity, view.rel_to_leader])
        buffer = np.zeros((n_max, OBS_NEIGHBOR_DIM))
        mask = np.zeros(n_max, dtype=bool)
        if not view.leader_link_alive:
            for row, nb in enumerate(view.neighbors):
                buffer[row, :3] = nb.rel
                buffer[row, 3:] = nb.velocity
                mask[row] = True
        return {"self": self_feats, "neighbors": buffer, "mask": mask}

    def follower_errors(self, t: float) -> np.ndarray:
        """Per-follower distance to its desired slot on the reference
        trajectory (not the actual leader)."""
        ref_p = self.traj.position(t)
        out = np.empty(self.n - 1)
        for i in range(1, self.n):
            slot = ref_p + self.spec.offset(i)
            out[i - 1] = np.linalg.norm(self.world.drones[i].position - slot)
        return out

    def agent_error_series(self) -> np.ndarray:
        """Per-step offset error of the attacked agent, against the reference."""
        if not self.error_series:
            return np.zeros(0)
        return np.stack(self.error_series)[:, self.agent_index - 1]

    def agent_collision_series(self) -> np.ndarray:
        if not self.flag_series:
            return np.zeros(0, dtype=bool)
        return np.stack(self.flag_series)[:, self.agent_index]

    def _record_step(self):
        t = self.world.time
        for i, d in enumerate(self.world.drones):
            attacked = 0 if i == 0 else int(not self._views[i].leader_link_alive)
            coll = int(self.world.collision_flags[i])
            self.trace_rows.append((
                t, i,
                d.position[0], d.position[1], d.position[2],
                d.velocity[0], d.velocity[1], d.velocity[2],
                coll, attacked,
            ))


class PointMassEnv:
    """Reach-the-origin sanity task: one drone, velocity-command actions.

    Observation is [position | velocity]; reward is -||p||^2 / t_max; an
    episode succeeds if the final position is within the goal radius.
    """

    t_max = 100
    spawn_half_width = 2.0
    goal_radius = 0.5

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.state: DroneState | None = None

    def reset(self, *, seed=None, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = rng if rng is not None else np.random.default_rng(seed)
        pos = rng.uniform(-self.spawn_half_width, self.spawn_half_width, size=3)
        self.state = DroneState(position=pos, velocity=np.zeros(3),
                                mass=self.cfg.sim.mass)
        self.step_count = 0
        return self._obs()

    def step(self, action: np.ndarray):
        sim = self.cfg.sim
        v_cmd = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0) * sim.v_max
        cmd = VelocityCmd(velocity=v_cmd)
        for _ in range(sim.substeps):
            self.state = step_dynamics(self.state, cmd, sim)
        self.step_count += 1
        p = self.state.position
        reward = -float(p @ p) / self.t_max
        truncated = self.step_count >= self.t_max
        info = {"distance": float(np.linalg.norm(p)),
                "success": bool(np.linalg.norm(p) < self.goal_radius)}
        return self._obs(), reward, False, truncated, info

    def _obs(self) -> np.ndarray:
        return np.concatenate([self.state.position, self.state.velocity])
