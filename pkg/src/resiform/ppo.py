"""Proximal policy optimization over dict observations.

The rollout buffer collects fixed-capacity batches of transitions, closed
into segments at episode ends and horizon boundaries; each segment carries
its own bootstrap value so generalized advantage estimation never leaks
across episodes. Updates run clipped-surrogate PPO with a squared-error
value loss and an entropy bonus, on minibatches reshuffled every epoch.
A non-finite parameter after an update restores the pre-update snapshot
instead of poisoning the run.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor, as_tensor, concat, minimum, no_grad
from .config import NetConfig, PpoConfig
from .nets import PolicyParams, gat_encode, init_gat, init_mlp, mlp_forward

_LOG_2PI = math.log(2.0 * math.pi)


# -- gaussian policy head -----------------------------------------------------------


def gaussian_logp(actions: np.ndarray, mean: Tensor, log_std: Tensor) -> Tensor:
    """Log density of a diagonal Gaussian at `actions`; shape (B,)."""
    inv_sigma = (-log_std).exp()
    z = (as_tensor(actions) - mean) * inv_sigma
    dim = actions.shape[-1]
    quad = z.square().sum(axis=-1) * as_tensor(-0.5)
    return quad - log_std.sum() - as_tensor(0.5 * dim * _LOG_2PI)


def gaussian_entropy(log_std: Tensor, dim: int) -> Tensor:
    """Entropy of the diagonal Gaussian; state-independent scalar."""
    return log_std.sum() + as_tensor(0.5 * dim * (1.0 + _LOG_2PI))


def gaussian_logp_np(actions: np.ndarray, mean: np.ndarray,
                     log_std: np.ndarray) -> float:
    sigma = np.exp(log_std)
    z = (actions - mean) / sigma
    return float(-0.5 * np.sum(z * z) - np.sum(log_std)
                 - 0.5 * actions.shape[-1] * _LOG_2PI)


# -- advantage estimation -----------------------------------------------------------


def compute_advantages(rewards: np.ndarray, values: np.ndarray,
                       dones: np.ndarray, bootstrap: float,
                       gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one segment.

    A_t = delta_t + gamma*lam*(1-done_t)*A_{t+1},
    delta_t = r_t + gamma*(1-done_t)*V_{t+1} - V_t, with V at the segment end
    given by `bootstrap`. Returns (advantages, returns).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not rewards.shape == values.shape == dones.shape:
        raise ValueError("rewards, values, dones must share a shape")
    adv = np.zeros_like(rewards)
    next_value = float(bootstrap)
    next_adv = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        next_adv = delta + gamma * lam * nonterminal * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


# -- rollout storage ----------------------------------------------------------------


class RolloutBuffer:
    """Fixed-capacity transition store with segment bookkeeping."""

    def __init__(self, capacity: int, obs_layout: dict[str, tuple], act_dim: int = 3):
        self.capacity = capacity
        self.obs = {k: np.zeros((capacity, *shape),
                                dtype=bool if k == "mask" else np.float64)
                    for k, shape in obs_layout.items()}
        self.actions = np.zeros((capacity, act_dim))
        self.logps = np.zeros(capacity)
        self.values = np.zeros(capacity)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.ptr = 0
        self._seg_start = 0
        self.segments: list[tuple[int, int, float]] = []

    @property
    def full(self) -> bool:
        return self.ptr >= self.capacity

    def add(self, obs: dict, action: np.ndarray, logp: float, value: float,
            reward: float, done: bool) -> None:
        if self.full:
            raise RuntimeError("rollout buffer is full")
        for k, store in self.obs.items():
            store[self.ptr] = obs[k]
        self.actions[self.ptr] = action
        self.logps[self.ptr] = logp
        self.values[self.ptr] = value
        self.rewards[self.ptr] = reward
        self.dones[self.ptr] = float(done)
        self.ptr += 1

    def close_segment(self, bootstrap: float) -> None:
        """End the open segment, bootstrapping its tail with `bootstrap`."""
        if self.ptr > self._seg_start:
            self.segments.append((self._seg_start, self.ptr, float(bootstrap)))
            self._seg_start = self.ptr

    def finish(self, gamma: float, lam: float) -> dict:
        if not self.full:
            raise RuntimeError("cannot finish a partially filled buffer")
        if self._seg_start != self.capacity:
            raise RuntimeError("open segment: call close_segment before finish")
        adv = np.zeros(self.capacity)
        ret = np.zeros(self.capacity)
        for start, end, bootstrap in self.segments:
            a, r = compute_advantages(self.rewards[start:end],
                                      self.values[start:end],
                                      self.dones[start:end],
                                      bootstrap, gamma, lam)
            adv[start:end] = a
            ret[start:end] = r
        return {"obs": self.obs, "actions": self.actions, "logps": self.logps,
                "values": self.values, "advantages": adv, "returns": ret}

    def reset(self) -> None:
        self.ptr = 0
        self._seg_start = 0
        self.segments = []


# -- policies -----------------------------------------------------------------------


class MlpPolicy:
    """Flat-observation Gaussian policy; obs dict needs only "self"."""

    def __init__(self, net: NetConfig, obs_dim: int, rng: np.random.Generator,
                 act_dim: int = 3):
        self.act_dim = act_dim
        self.obs_dim = obs_dim
        self.params = PolicyParams(
            actor_mlp=init_mlp(rng, [obs_dim, *net.hidden, act_dim]),
            critic_mlp=init_mlp(rng, [obs_dim, *net.hidden, 1]),
            log_std=Tensor(np.full(act_dim, net.log_std_init), requires_grad=True),
        )

    def obs_layout(self) -> dict[str, tuple]:
        return {"self": (self.obs_dim,)}

    def _actor_features(self, obs: dict) -> Tensor:
        return as_tensor(obs["self"])

    _critic_features = _actor_features

    def _forward(self, obs: dict) -> tuple[np.ndarray, float]:
        with no_grad():
            mean = mlp_forward(self._actor_features(obs),
                               self.params.actor_mlp, "tanh").data
            value = mlp_forward(self._critic_features(obs),
                                self.params.critic_mlp).data
        return mean, float(value.reshape(-1)[0])

    def act(self, obs: dict, rng: np.random.Generator,
            deterministic: bool = False) -> tuple[np.ndarray, float, float]:
        mean, value = self._forward(obs)
        log_std = self.params.log_std.data
        if deterministic:
            action = mean.copy()
        else:
            action = mean + np.exp(log_std) * rng.standard_normal(self.act_dim)
        return action, gaussian_logp_np(action, mean, log_std), value

    def value(self, obs: dict) -> float:
        return self._forward(obs)[1]

    def evaluate(self, obs: dict, actions: np.ndarray) -> tuple[Tensor, Tensor, Tensor]:
        mean = mlp_forward(self._actor_features(obs), self.params.actor_mlp, "tanh")
        logp = gaussian_logp(actions, mean, self.params.log_std)
        entropy = gaussian_entropy(self.params.log_std, self.act_dim)
        values = mlp_forward(self._critic_features(obs), self.params.critic_mlp)
        return logp, entropy, values.reshape(actions.shape[0])


class DualModePolicy(MlpPolicy):
    """Gaussian policy over dual-mode observations: self features are joined
    with an attention encoding of the neighbor buffer (actor and critic each
    own an encoder). With every neighbor masked out the encoding collapses to
    a constant, so the leader-link mode needs no separate branch."""

    def __init__(self, net: NetConfig, n_max: int, rng: np.random.Generator,
                 self_dim: int = 6, nbr_dim: int = 6, act_dim: int = 3):
        self.act_dim = act_dim
        self.self_dim = self_dim
        self.nbr_dim = nbr_dim
        self.n_max = n_max
        d = net.gat_dim
        self.params = PolicyParams(
            actor_mlp=init_mlp(rng, [self_dim + d, *net.hidden, act_dim]),
            critic_mlp=init_mlp(rng, [self_dim + d, *net.hidden, 1]),
            log_std=Tensor(np.full(act_dim, net.log_std_init), requires_grad=True),
            actor_gat=init_gat(rng, nbr_dim, d),
            critic_gat=init_gat(rng, nbr_dim, d),
        )

    def obs_layout(self) -> dict[str, tuple]:
        return {"self": (self.self_dim,),
                "neighbors": (self.n_max, self.nbr_dim),
                "mask": (self.n_max,)}

    def _features(self, obs: dict, gat) -> Tensor:
        self_t = as_tensor(obs["self"])
        emb = gat_encode(self_t, as_tensor(obs["neighbors"]), obs["mask"], gat)
        return concat([self_t, emb], axis=-1)

    def _actor_features(self, obs: dict) -> Tensor:
        return self._features(obs, self.params.actor_gat)

    def _critic_features(self, obs: dict) -> Tensor:
        return self._features(obs, self.params.critic_gat)


def policy_from_params(params: PolicyParams, n_max: int = 6):
    """Rebuild a policy around loaded parameters, inferring architecture
    from tensor shapes (attention encoders present -> dual-mode policy)."""
    dims = [w.data.shape[0] for w in params.actor_mlp.weights]
    dims.append(params.actor_mlp.weights[-1].data.shape[1])
    act_dim = dims[-1]
    hidden = tuple(dims[1:-1])
    rng = np.random.default_rng(0)
    if params.actor_gat is not None:
        gat_dim = params.actor_gat.d_out
        net = NetConfig(hidden=hidden, gat_dim=gat_dim)
        policy = DualModePolicy(net, n_max, rng,
                                self_dim=dims[0] - gat_dim,
                                nbr_dim=params.actor_gat.d_in, act_dim=act_dim)
    else:
        policy = MlpPolicy(NetConfig(hidden=hidden), obs_dim=dims[0], rng=rng,
                           act_dim=act_dim)
    policy.params = params
    return policy


# -- optimization -------------------------------------------------------------------


def surrogate_loss(logp_new: Tensor, logp_old: np.ndarray, adv: np.ndarray,
                   clip: float) -> Tensor:
    """Clipped-ratio policy loss (to minimize)."""
    ratio = (logp_new - as_tensor(logp_old)).exp()
    adv_t = as_tensor(adv)
    unclipped = ratio * adv_t
    clipped = ratio.clip(1.0 - clip, 1.0 + clip) * adv_t
    return -(minimum(unclipped, clipped).mean())


def ppo_update(policy, optimizer, data: dict, cfg: PpoConfig,
               rng: np.random.Generator, lr_scale: float = 1.0) -> dict:
    """One full PPO update over a finished buffer; returns summary stats."""
    snap = policy.params.snapshot()
    adv = normalize_advantages(data["advantages"])
    n = len(adv)
    losses, vlosses, clipfracs = [], [], []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            obs = {k: v[idx] for k, v in data["obs"].items()}
            actions = data["actions"][idx]
            logp, entropy, values = policy.evaluate(obs, actions)
            policy_loss = surrogate_loss(logp, data["logps"][idx], adv[idx],
                                         cfg.clip)
            v_err = values - as_tensor(data["returns"][idx])
            value_loss = v_err.square().mean()
            loss = (policy_loss + as_tensor(cfg.value_coef) * value_loss
                    - as_tensor(cfg.entropy_coef) * entropy)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step(lr_scale=lr_scale)
            with np.errstate(over="ignore"):
                ratio = np.exp(logp.data - data["logps"][idx])
            losses.append(float(loss.data))
            vlosses.append(float(value_loss.data))
            clipfracs.append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip)))
    diverged = not all(np.all(np.isfinite(t.data))
                       for t in policy.params.all_tensors())
    if diverged:
        policy.params.restore(snap)
    return {
        "loss": float(np.mean(losses)) if losses else 0.0,
        "value_loss": float(np.mean(vlosses)) if vlosses else 0.0,
        "clip_fraction": float(np.mean(clipfracs)) if clipfracs else 0.0,
        "entropy": float(gaussian_entropy(policy.params.log_std,
                                          policy.act_dim).data),
        "diverged": diverged,
    }
