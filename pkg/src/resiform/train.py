"""On-policy training loop with checkpointing and a reward curve artifact.

Deterministic by construction: a single master seed is split into four
independent streams (policy init, action sampling, episode resets, update
shuffling) so two runs with the same seed and config produce identical
parameters, checkpoints, and CSV bytes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, config_hash
from .csvio import write_csv
from .env import FormationEnv, PointMassEnv, resolve_mission
from .nets import Adam, save_checkpoint
from .ppo import DualModePolicy, MlpPolicy, RolloutBuffer, ppo_update
from .world import SimFault

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("step", "reward_mean", "reward_std", "episodes",
                 "loss", "value_loss", "entropy", "clip_fraction", "diverged")
CHECKPOINT_COLUMNS = ("checkpoint", "step", "path")


def seed_streams(seed: int) -> list[np.random.Generator]:
    """Split a master seed into the four independent generators a run uses:
    action sampling, episode resets, update shuffling, policy init."""
    return [np.random.default_rng(s)
            for s in np.random.SeedSequence(seed).spawn(4)]


class _DictObs:
    """Adapts an env with flat array observations to the dict obs contract."""

    def __init__(self, env):
        self.env = env

    def reset(self, *, seed=None, rng=None):
        return {"self": self.env.reset(seed=seed, rng=rng)}

    def step(self, action):
        obs, reward, terminated, truncated, info = self.env.step(action)
        return {"self": obs}, reward, terminated, truncated, info


@dataclass
class TrainResult:
    task: str
    seed: int
    total_steps: int
    out_dir: Path
    checkpoint_paths: list[Path]
    curve_path: Path
    episode_returns: list[float] = field(default_factory=list)

    @property
    def initial_checkpoint(self) -> Path:
        return self.checkpoint_paths[0]

    @property
    def final_checkpoint(self) -> Path:
        return self.checkpoint_paths[-1]


def _checkpoint_marks(total_steps: int, n: int) -> list[int]:
    """Step counts at which numbered checkpoints are due (n evenly spaced)."""
    return [max(1, round(k * total_steps / n)) for k in range(1, n + 1)]


def run_training(cfg: RunConfig, env, policy, out_dir: str | Path,
                 seed: int, task: str) -> TrainResult:
    """Collect/update until exactly ``cfg.ppo.total_steps`` env steps.

    The final rollout buffer is shrunk to the remaining step budget so the
    run ends on the dot and the last checkpoint reflects the full budget.
    Episode boundaries and the fixed credit horizon both close buffer
    segments; truncated tails bootstrap from the value estimate.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ppo_cfg = cfg.ppo
    chash = config_hash(cfg)
    rng_act, rng_reset, rng_update, _ = seed_streams(seed)

    optimizer = Adam(policy.params.all_tensors(), lr=ppo_cfg.lr)
    header = {"config_hash": chash, "seed": seed, "task": task}

    def save(index: int, step: int) -> Path:
        path = out_dir / f"checkpoint_{index:03d}.npz"
        save_checkpoint(path, policy.params,
                        meta={"step": step, "seed": seed,
                              "config_hash": chash, "task": task})
        return path

    checkpoint_paths = [save(0, 0)]
    checkpoint_rows: list[tuple] = [(0, 0, checkpoint_paths[0].name)]
    marks = _checkpoint_marks(ppo_cfg.total_steps, ppo_cfg.checkpoints)
    next_mark = 0

    curve_rows: list[tuple] = []
    episode_returns: list[float] = []
    obs = env.reset(rng=rng_reset)
    ep_return = 0.0
    steps_done = 0

    while steps_done < ppo_cfg.total_steps:
        capacity = min(ppo_cfg.buffer_size, ppo_cfg.total_steps - steps_done)
        buf = RolloutBuffer(capacity, policy.obs_layout(), policy.act_dim)
        window_returns: list[float] = []
        since_close = 0
        while not buf.full:
            action, logp, value = policy.act(obs, rng_act)
            try:
                next_obs, reward, terminated, truncated, _ = env.step(action)
            except SimFault:
                log.warning("simulation fault at step %d; restarting episode",
                            steps_done)
                buf.close_segment(0.0)
                since_close = 0
                obs = env.reset(rng=rng_reset)
                ep_return = 0.0
                continue
            buf.add(obs, action, logp, value, reward, terminated)
            ep_return += reward
            steps_done += 1
            since_close += 1
            if terminated or truncated:
                buf.close_segment(0.0 if terminated else policy.value(next_obs))
                since_close = 0
                window_returns.append(ep_return)
                episode_returns.append(ep_return)
                ep_return = 0.0
                obs = env.reset(rng=rng_reset)
            else:
                obs = next_obs
                if since_close >= ppo_cfg.horizon or buf.full:
                    buf.close_segment(policy.value(obs))
                    since_close = 0

        data = buf.finish(ppo_cfg.gamma, ppo_cfg.gae_lambda)
        lr_scale = 1.0 - (steps_done - capacity) / ppo_cfg.total_steps
        stats = ppo_update(policy, optimizer, data, ppo_cfg, rng_update,
                           lr_scale=lr_scale)
        if stats["diverged"]:
            log.warning("non-finite update at step %d; parameters restored",
                        steps_done)
        mean = float(np.mean(window_returns)) if window_returns else float("nan")
        std = float(np.std(window_returns)) if window_returns else float("nan")
        curve_rows.append((steps_done, mean, std, len(window_returns),
                           stats["loss"], stats["value_loss"], stats["entropy"],
                           stats["clip_fraction"], int(stats["diverged"])))
        while next_mark < len(marks) and steps_done >= marks[next_mark]:
            index = next_mark + 1
            path = save(index, steps_done)
            checkpoint_paths.append(path)
            checkpoint_rows.append((index, steps_done, path.name))
            next_mark += 1

    curve_path = write_csv(out_dir / "curve.csv", CURVE_COLUMNS, curve_rows,
                           header=header)
    write_csv(out_dir / "checkpoints.csv", CHECKPOINT_COLUMNS, checkpoint_rows,
              header=header)
    return TrainResult(task=task, seed=seed, total_steps=steps_done,
                       out_dir=out_dir, checkpoint_paths=checkpoint_paths,
                       curve_path=curve_path, episode_returns=episode_returns)


def train_formation(cfg: RunConfig, out_dir: str | Path, seed: int,
                    mission: str = "circle") -> TrainResult:
    """Train the learned velocity controller on randomized formation episodes."""
    env = FormationEnv(cfg, resolve_mission(mission), controller="gat",
                       train_mode=True)
    policy = DualModePolicy(cfg.net, cfg.comm.n_max, seed_streams(seed)[3])
    return run_training(cfg, env, policy, out_dir, seed, task="formation")


def train_pointmass(cfg: RunConfig, out_dir: str | Path,
                    seed: int) -> TrainResult:
    """Train a plain MLP policy on the point regulation task."""
    env = _DictObs(PointMassEnv(cfg))
    policy = MlpPolicy(cfg.net, obs_dim=6, rng=seed_streams(seed)[3])
    return run_training(cfg, env, policy, out_dir, seed, task="pointmass")
