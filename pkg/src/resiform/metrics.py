"""Mission evaluation: per-episode reports, averages, tables, trace files.

The headline number is the per-step mean offset error of the attacked agent
against the reference trajectory. An all-agents mean is emitted alongside,
explicitly labeled, because the two differ a lot under attack. Every episode
can also be dumped as a trace CSV whose header carries enough metadata to
recompute both metrics from the file alone; `trace_metrics` does exactly
that and is used as an integrity oracle in the tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, config_hash
from .csvio import read_csv, write_csv
from .env import CONTROLLERS, TRACE_COLUMNS, FormationEnv, Mission, resolve_mission
from .nets import load_checkpoint
from .ppo import policy_from_params
from .world import Trajectory

CELL_FORMAT = "{:.4f} / {:.4f}"
EVAL_COLUMNS = ("mission", "controller", "episode", "e_agent", "e_mean",
                "collision_rate", "reward")


def formation_error(errors: np.ndarray, t_max: int) -> float:
    """Per-step mean of positional offsets; the series must cover the full
    episode so truncated runs cannot masquerade as good ones."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.shape[0] != t_max:
        raise ValueError(
            f"error series has {errors.shape[0]} steps, expected {t_max}")
    return float(np.sum(errors) / t_max)


def collision_rate(flags: np.ndarray, t_max: int) -> float:
    flags = np.asarray(flags)
    if flags.shape[0] != t_max:
        raise ValueError(
            f"collision series has {flags.shape[0]} steps, expected {t_max}")
    return float(np.sum(flags, dtype=np.float64) / t_max)


def attack_intervals(link_series, dt: float) -> list[tuple[float, float]]:
    """Contiguous spans (seconds) during which the agent's leader link was
    jammed. Series entries are post-step states at t = (k+1) dt."""
    spans: list[tuple[float, float]] = []
    start = None
    for k, alive in enumerate(link_series):
        t = (k + 1) * dt
        if not alive and start is None:
            start = t
        elif alive and start is not None:
            spans.append((start, t))
            start = None
    if start is not None:
        spans.append((start, (len(link_series) + 1) * dt))
    return spans


@dataclass
class EpisodeReport:
    mission: str
    controller: str
    episode: int
    e_agent: float                      # attacked agent, the headline metric
    e_mean: float                       # mean over all followers, labeled
    collision_rate: float               # attacked agent's flag rate
    reward: float                       # episode return (0 for classical laws)
    attack_spans: list[tuple[float, float]]
    error_series: np.ndarray
    trace_path: Path | None = None

    def row(self) -> tuple:
        return (self.mission, self.controller, self.episode, self.e_agent,
                self.e_mean, self.collision_rate, self.reward)


@dataclass
class MissionReport:
    mission: str
    controller: str
    episodes: list[EpisodeReport]
    e_agent: float = field(init=False)
    e_mean: float = field(init=False)
    collision_rate: float = field(init=False)
    reward: float = field(init=False)

    def __post_init__(self):
        self.e_agent = float(np.mean([e.e_agent for e in self.episodes]))
        self.e_mean = float(np.mean([e.e_mean for e in self.episodes]))
        self.collision_rate = float(
            np.mean([e.collision_rate for e in self.episodes]))
        self.reward = float(np.mean([e.reward for e in self.episodes]))

    def rows(self) -> list[tuple]:
        out = [e.row() for e in self.episodes]
        out.append((self.mission, self.controller, "mean", self.e_agent,
                    self.e_mean, self.collision_rate, self.reward))
        return out


def run_episode(cfg: RunConfig, mission: Mission, controller: str, *,
                rng: np.random.Generator, policy=None, episode: int = 0,
                trace_path: str | Path | None = None,
                trace_meta: dict | None = None) -> EpisodeReport:
    """Roll one evaluation episode to the horizon and report its metrics."""
    if controller == "gat" and policy is None:
        raise ConfigError("the learned controller needs a checkpoint policy")
    env = FormationEnv(cfg, mission, controller=controller, train_mode=False,
                       record=True)
    obs = env.reset(rng=rng)
    total_reward = 0.0
    for _ in range(cfg.t_max):
        action = None
        if controller == "gat":
            action, _, _ = policy.act(obs, rng, deterministic=True)
        obs, reward, _, truncated, _ = env.step(action)
        total_reward += reward
    assert truncated
    errors = env.agent_error_series()
    report = EpisodeReport(
        mission=mission.name, controller=controller, episode=episode,
        e_agent=formation_error(errors, cfg.t_max),
        e_mean=formation_error(env.ef_series, cfg.t_max),
        collision_rate=collision_rate(env.agent_collision_series(), cfg.t_max),
        reward=total_reward,
        attack_spans=attack_intervals(env.link_series, cfg.sim.control_dt),
        error_series=errors,
    )
    if trace_path is not None:
        report.trace_path = write_trace(trace_path, env, cfg,
                                        extra=trace_meta)
    return report


def load_policy(checkpoint: str | Path, n_max: int):
    path = Path(checkpoint)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    params, _ = load_checkpoint(path)
    return policy_from_params(params, n_max=n_max)


def run_mission(cfg: RunConfig, mission: str | Mission, controller: str,
                episodes: int, seed: int, *, checkpoint=None,
                trace_dir: str | Path | None = None) -> MissionReport:
    """Average metrics over independently seeded evaluation episodes."""
    mission = resolve_mission(mission) if isinstance(mission, str) else mission
    if controller not in CONTROLLERS:
        raise ConfigError(f"unknown controller: {controller!r}")
    policy = None
    if controller == "gat":
        if checkpoint is None:
            raise ConfigError("the learned controller needs a checkpoint")
        policy = load_policy(checkpoint, cfg.comm.n_max)
    reports = []
    seeds = np.random.SeedSequence(seed).spawn(episodes)
    for k in range(episodes):
        trace_path = None
        if trace_dir is not None:
            trace_path = (Path(trace_dir)
                          / f"trace_{mission.name}_{controller}_{k:03d}.csv")
        reports.append(run_episode(
            cfg, mission, controller, rng=np.random.default_rng(seeds[k]),
            policy=policy, episode=k, trace_path=trace_path,
            trace_meta={"seed": seed, "episode": k}))
    return MissionReport(mission.name, controller, reports)


def write_eval_csv(path: str | Path, reports: list[MissionReport],
                   cfg: RunConfig, seed: int,
                   extra: dict | None = None) -> Path:
    rows = [row for rep in reports for row in rep.rows()]
    header = {"config_hash": config_hash(cfg), "seed": seed}
    header.update(extra or {})
    return write_csv(path, EVAL_COLUMNS, rows, header=header)


def compare_table(cfg: RunConfig, missions: list[str], controllers: list[str],
                  episodes: int, seed: int, out: str | Path,
                  checkpoint=None) -> Path:
    """Mission-by-controller grid; each cell is "e_f / cr" to 4 decimals."""
    columns = ["mission", *controllers]
    rows = []
    for name in missions:
        cells = [name]
        for controller in controllers:
            rep = run_mission(cfg, name, controller, episodes, seed,
                              checkpoint=checkpoint)
            cells.append(CELL_FORMAT.format(rep.e_agent, rep.collision_rate))
        rows.append(tuple(cells))
    header = {"config_hash": config_hash(cfg), "seed": seed,
              "episodes": episodes, "metric": "e_f / collision_rate"}
    if checkpoint is not None:
        header["checkpoint"] = Path(checkpoint).name
    return write_csv(out, columns, rows, header=header)


def evaluate_checkpoints(cfg: RunConfig, mission: str | Mission,
                         checkpoint_paths: list, episodes: int,
                         seed: int) -> list[dict]:
    """Deterministic evaluation return of each checkpoint on one mission.

    The same episode seeds are reused across checkpoints so curve deltas
    reflect parameter changes, not spawn luck.
    """
    out = []
    for index, path in enumerate(checkpoint_paths):
        _, meta = load_checkpoint(path)
        rep = run_mission(cfg, mission, "gat", episodes, seed,
                          checkpoint=path)
        rewards = [e.reward for e in rep.episodes]
        out.append({"checkpoint": index, "step": meta.get("step", -1),
                    "path": str(path),
                    "reward_mean": float(np.mean(rewards)),
                    "reward_std": float(np.std(rewards)),
                    "e_agent": rep.e_agent,
                    "collision_rate": rep.collision_rate})
    return out


def evaluate_pointmass(cfg: RunConfig, checkpoint: str | Path,
                       episodes: int, seed: int) -> dict:
    """Deterministic mean episode return of a checkpoint on the point
    regulation task, over a fixed set of spawn seeds."""
    from .env import PointMassEnv

    params, meta = load_checkpoint(checkpoint)
    policy = policy_from_params(params)
    env = PointMassEnv(cfg)
    seeds = np.random.SeedSequence(seed).spawn(episodes)
    returns = []
    successes = 0
    for k in range(episodes):
        rng = np.random.default_rng(seeds[k])
        obs = {"self": env.reset(rng=rng)}
        total = 0.0
        truncated = False
        while not truncated:
            action, _, _ = policy.act(obs, rng, deterministic=True)
            raw, reward, _, truncated, info = env.step(action)
            obs = {"self": raw}
            total += reward
        returns.append(total)
        successes += int(info["distance"] < env.goal_radius)
    return {"reward_mean": float(np.mean(returns)),
            "reward_std": float(np.std(returns)),
            "returns": returns,
            "success_rate": successes / episodes,
            "step": meta.get("step", -1)}


# -- trace files -----------------------------------------------------------------


def write_trace(path: str | Path, env: FormationEnv, cfg: RunConfig,
                extra: dict | None = None) -> Path:
    """Dump one finished episode as a CSV of post-step drone states.

    The header pins down everything needed to recompute the metrics from
    the file: trajectory geometry, formation offsets, the attacked agent,
    and the attacker location.
    """
    header = {
        "config_hash": config_hash(cfg),
        "mission": env.mission.name,
        "controller": env.controller,
        "n_agents": env.n,
        "t_max": cfg.t_max,
        "control_dt": cfg.sim.control_dt,
        "trajectory_kind": env.traj.kind,
        "trajectory_offset": json.dumps([float(v) for v in env.traj.offset]),
        "trajectory_phase": env.traj.phase,
        "up_axis": cfg.sim.up_axis,
        "formation_offsets": json.dumps(
            {str(i): list(map(float, env.spec.offset(i)))
             for i in sorted(cfg.offsets)}),
        "attacked_agent": env.agent_index,
        "attacker": json.dumps(list(cfg.comm.p_dos)),
        "attack_range": cfg.comm.kappa,
    }
    for key, value in (extra or {}).items():
        header.setdefault(key, value)
    return write_csv(path, TRACE_COLUMNS, env.trace_rows, header=header)


def trace_metrics(path: str | Path) -> dict:
    """Recompute episode metrics from a trace CSV alone.

    Standalone on purpose: rebuilds the reference trajectory from the file
    header and loops over raw rows, so it cross-checks the simulator's own
    bookkeeping end to end.
    """
    header, columns, rows = read_csv(path)
    if list(columns) != list(TRACE_COLUMNS):
        raise ValueError(f"unexpected trace columns: {columns}")
    t_max = int(header["t_max"])
    n = int(header["n_agents"])
    if len(rows) != t_max * n:
        raise ValueError(
            f"trace has {len(rows)} rows, expected {t_max * n}")
    offsets = {int(k): np.asarray(v, dtype=np.float64)
               for k, v in json.loads(header["formation_offsets"]).items()}
    ref = Trajectory(kind=header["trajectory_kind"],
                     offset=np.asarray(
                         json.loads(header["trajectory_offset"])),
                     up_axis=header["up_axis"])
    phase = float(header["trajectory_phase"])
    agent = int(header["attacked_agent"])

    error_sums = {i: 0.0 for i in offsets}
    collisions = 0
    for row in rows:
        t = float(row[0])
        i = int(row[1])
        if i == 0:
            continue
        pos = np.array([float(row[2]), float(row[3]), float(row[4])])
        desired = ref.position(t + phase) + offsets[i]
        error_sums[i] += float(np.linalg.norm(pos - desired))
        if i == agent:
            collisions += int(row[8])
    per_agent = {i: s / t_max for i, s in error_sums.items()}
    return {
        "e_agent": per_agent[agent],
        "e_mean": float(np.mean(list(per_agent.values()))),
        "collision_rate": collisions / t_max,
        "mission": header["mission"],
        "controller": header["controller"],
    }
