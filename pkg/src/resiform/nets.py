"""Graph-attention encoder, MLP heads, and checkpoint serialization.

The attention layer is a single-head, single-layer scoring of neighbor
feature rows against the agent's own features:

    alpha_j = softmax_j( leaky_relu( a^T [Wq h_i || Wk h_j] ) )
    s       = sigmoid( sum_j alpha_j * Wv h_j )

Masked rows receive exactly zero attention; a fully masked row yields the
neutral encoding sigmoid(0). Weight matrices are stored input-by-output so
batched forward passes are plain right-multiplications.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat, no_grad

CHECKPOINT_FORMAT = 1


class ConfigError(ValueError):
    """Raised for invalid configuration or mismatched dimensions."""


# -- parameter containers -----------------------------------------------------


@dataclass
class GatParams:
    wq: Tensor  # (d_in, d_out)
    wk: Tensor  # (d_in, d_out)
    wv: Tensor  # (d_in, d_out)
    att: Tensor  # (2*d_out, 1)
    leaky_slope: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError("leaky_slope must lie in (0, 1)")
        d_in, d_out = self.wq.shape
        for name, t in (("wk", self.wk), ("wv", self.wv)):
            if t.shape != (d_in, d_out):
                raise ConfigError(f"{name} shape {t.shape} != {(d_in, d_out)}")
        if self.att.shape != (2 * d_out, 1):
            raise ConfigError(f"att shape {self.att.shape} != {(2 * d_out, 1)}")

    @property
    def d_in(self) -> int:
        return self.wq.shape[0]

    @property
    def d_out(self) -> int:
        return self.wq.shape[1]

    def tensors(self) -> dict[str, Tensor]:
        return {"wq": self.wq, "wk": self.wk, "wv": self.wv, "att": self.att}


@dataclass
class MlpParams:
    weights: list[Tensor]  # each (d_in, d_out)
    biases: list[Tensor]  # each (d_out,)

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ConfigError("weights and biases must pair up")
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ConfigError(f"bias {b.shape} does not match weight {w.shape}")

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out


def init_gat(rng: np.random.Generator, d_in: int, d_out: int,
             leaky_slope: float = 0.01) -> GatParams:
    bound = 1.0 / np.sqrt(d_in)
    draw = lambda shape, s: Tensor(rng.uniform(-s, s, size=shape), requires_grad=True)
    return GatParams(
        wq=draw((d_in, d_out), bound),
        wk=draw((d_in, d_out), bound),
        wv=draw((d_in, d_out), bound),
        att=draw((2 * d_out, 1), 1.0 / np.sqrt(2 * d_out)),
        leaky_slope=leaky_slope,
    )


def init_mlp(rng: np.random.Generator, dims: list[int]) -> MlpParams:
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(d_in)
        weights.append(Tensor(rng.uniform(-bound, bound, size=(d_in, d_out)),
                              requires_grad=True))
        biases.append(Tensor(rng.uniform(-bound, bound, size=(d_out,)),
                             requires_grad=True))
    return MlpParams(weights=weights, biases=biases)


# -- forward passes ------------------------------------------------------------


def masked_softmax(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax along the last axis restricted to mask-true entries.

    Masked entries come out exactly zero. Rows with no unmasked entry come
    out all-zero rather than NaN.
    """
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != logits.shape:
        raise ConfigError(f"mask shape {m.shape} != logits shape {logits.shape}")
    any_row = m.any(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore"):
        row_max = np.max(np.where(m > 0, logits.data, -np.inf), axis=-1, keepdims=True)
    row_max = np.where(any_row, row_max, 0.0)
    # Zero the masked entries before exp so stray padded logits cannot overflow.
    shifted = (logits - Tensor(row_max)) * Tensor(m)
    e = shifted.exp() * Tensor(m)
    denom = e.sum(axis=-1, keepdims=True) + Tensor(np.where(any_row, 0.0, 1.0))
    return e / denom


def _promote(h_i: Tensor, h_nbr: Tensor, mask: np.ndarray):
    single = h_i.ndim == 1
    if single:
        h_i = h_i.reshape(1, *h_i.shape)
        h_nbr = h_nbr.reshape(1, *h_nbr.shape)
        mask = np.asarray(mask).reshape(1, *np.asarray(mask).shape)
    return h_i, h_nbr, mask, single


def attention_coefficients(h_i: Tensor, h_nbr: Tensor, mask: np.ndarray,
                           p: GatParams) -> Tensor:
    """Attention weights over neighbor rows; shape (..., N)."""
    h_i, h_nbr, mask, single = _promote(h_i, h_nbr, mask)
    if h_i.shape[-1] != p.d_in or h_nbr.shape[-1] != p.d_in:
        raise ConfigError(
            f"feature width {h_i.shape[-1]}/{h_nbr.shape[-1]} != d_in {p.d_in}")
    n = h_nbr.shape[-2]
    q = h_i @ p.wq  # (..., d_out)
    q = q.reshape(*q.shape[:-1], 1, q.shape[-1]).broadcast_to(
        (*q.shape[:-1], n, q.shape[-1]))
    k = h_nbr @ p.wk  # (..., N, d_out)
    logits = concat([q, k], axis=-1) @ p.att  # (..., N, 1)
    logits = logits.reshape(*logits.shape[:-1]).leaky_relu(p.leaky_slope)
    alpha = masked_softmax(logits, mask)
    return alpha.reshape(alpha.shape[1]) if single else alpha


def gat_encode(h_i: Tensor, h_nbr: Tensor, mask: np.ndarray, p: GatParams) -> Tensor:
    """Aggregate neighbor values under attention; shape (..., d_out)."""
    h_i2, h_nbr2, mask2, single = _promote(h_i, h_nbr, mask)
    alpha = attention_coefficients(h_i2, h_nbr2, mask2, p)
    v = h_nbr2 @ p.wv  # (..., N, d_out)
    weighted = alpha.reshape(*alpha.shape, 1) * v
    s = weighted.sum(axis=-2).sigmoid()
    return s.reshape(s.shape[1]) if single else s


def mlp_forward(x: Tensor, p: MlpParams, out_activation: str = "identity") -> Tensor:
    if x.shape[-1] != p.weights[0].shape[0]:
        raise ConfigError(
            f"input width {x.shape[-1]} != mlp d_in {p.weights[0].shape[0]}")
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
    h = x
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        h = ((h @ w) + b).relu()
    y = (h @ p.weights[-1]) + p.biases[-1]
    if out_activation == "tanh":
        y = y.tanh()
    elif out_activation != "identity":
        raise ConfigError(f"unknown output activation: {out_activation}")
    return y.reshape(-1) if single else y


# -- policy parameter bundle ----------------------------------------------------


@dataclass
class PolicyParams:
    """Actor/critic parameter set; the GAT encoders are optional so the same
    bundle serves flat-observation policies."""

    actor_mlp: MlpParams
    critic_mlp: MlpParams
    log_std: Tensor
    actor_gat: GatParams | None = None
    critic_gat: GatParams | None = None

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.actor_gat is not None:
            out.update({f"actor_gat.{k}": v for k, v in self.actor_gat.tensors().items()})
        if self.critic_gat is not None:
            out.update({f"critic_gat.{k}": v for k, v in self.critic_gat.tensors().items()})
        out.update({f"actor_mlp.{k}": v for k, v in self.actor_mlp.tensors().items()})
        out.update({f"critic_mlp.{k}": v for k, v in self.critic_mlp.tensors().items()})
        out["log_std"] = self.log_std
        return out

    def actor_tensors(self) -> list[Tensor]:
        out = list(self.actor_mlp.tensors().values()) + [self.log_std]
        if self.actor_gat is not None:
            out += list(self.actor_gat.tensors().values())
        return out

    def critic_tensors(self) -> list[Tensor]:
        out = list(self.critic_mlp.tensors().values())
        if self.critic_gat is not None:
            out += list(self.critic_gat.tensors().values())
        return out

    def all_tensors(self) -> list[Tensor]:
        return list(self.named().values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in self.named().items():
            v.data = snap[k].copy()


def save_checkpoint(path, params: PolicyParams, meta: dict | None = None) -> None:
    """Versioned dump of all named parameter tensors; bit-exact round trip."""
    named = params.named()
    layout = {
        "format": CHECKPOINT_FORMAT,
        "mlp_layers": {
            "actor": len(params.actor_mlp.weights),
            "critic": len(params.critic_mlp.weights),
        },
        "has_actor_gat": params.actor_gat is not None,
        "has_critic_gat": params.critic_gat is not None,
        "leaky_slope": (params.actor_gat.leaky_slope
                        if params.actor_gat is not None else 0.01),
        "meta": meta or {},
    }
    np.savez(path, __layout__=np.str_(json.dumps(layout, sort_keys=True)),
             **{k: v.data for k, v in named.items()})


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    with np.load(path) as z:
        layout = json.loads(str(z["__layout__"]))
        if layout["format"] != CHECKPOINT_FORMAT:
            raise ConfigError(f"unsupported checkpoint format {layout['format']}")
        arrays = {k: z[k] for k in z.files if k != "__layout__"}

    def tensor(name: str) -> Tensor:
        return Tensor(arrays[name], requires_grad=True)

    def mlp(prefix: str, n_layers: int) -> MlpParams:
        return MlpParams(
            weights=[tensor(f"{prefix}.w{i}") for i in range(n_layers)],
            biases=[tensor(f"{prefix}.b{i}") for i in range(n_layers)],
        )

    def gat(prefix: str) -> GatParams:
        return GatParams(wq=tensor(f"{prefix}.wq"), wk=tensor(f"{prefix}.wk"),
                         wv=tensor(f"{prefix}.wv"), att=tensor(f"{prefix}.att"),
                         leaky_slope=layout["leaky_slope"])

    params = PolicyParams(
        actor_mlp=mlp("actor_mlp", layout["mlp_layers"]["actor"]),
        critic_mlp=mlp("critic_mlp", layout["mlp_layers"]["critic"]),
        log_std=tensor("log_std"),
        actor_gat=gat("actor_gat") if layout["has_actor_gat"] else None,
        critic_gat=gat("critic_gat") if layout["has_critic_gat"] else None,
    )
    return params, layout["meta"]


class Adam:
    """Adam over a fixed list of parameter tensors, with an external scale
    knob so the caller can apply a linear learning-rate schedule."""

    def __init__(self, params: list[Tensor], lr: float = 3e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self, lr_scale: float = 1.0) -> None:
        self.t += 1
        lr = self.lr * lr_scale
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            m_hat = self.m[i] / (1 - self.b1**self.t)
            v_hat = self.v[i] / (1 - self.b2**self.t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
