"""Dense policy/value networks: history encoder, Gaussian actor, privileged critic.

The history encoder maps the flattened H-step observation window to a body
velocity estimate (first 3 outputs) and a tanh-bounded latent. The actor
consumes [observation, velocity estimate, latent]; gradient flow from the
actor loss into the velocity estimate is blocked (it is trained only by its
supervised target). The critic sees observation + privileged state.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_STD_MIN = -4.0
LOG_STD_MAX = 1.0


def orthogonal(rng: np.random.Generator, shape, gain: float = 1.0, dtype=np.float32):
    """Orthogonal weight init via QR with a sign-fixed R diagonal."""
    rows, cols = shape
    n = max(rows, cols)
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))[None, :]
    return (gain * q[:rows, :cols]).astype(dtype)


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 gain: float = np.sqrt(2.0), scale: float = 1.0, dtype=np.float32):
        w = orthogonal(rng, (n_in, n_out), gain, dtype) * scale
        self.W = Tensor(w.astype(dtype), requires_grad=True)
        self.b = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        return x @ self.W.data + self.b.data


class MLP:
    """ELU hidden layers, linear head; the head is orthogonal scaled by 0.01."""

    def __init__(self, n_in: int, hidden: list[int], n_out: int,
                 rng: np.random.Generator, out_scale: float = 0.01, dtype=np.float32):
        self.layers: list[Linear] = []
        sizes = [n_in] + list(hidden)
        for a, b in zip(sizes[:-1], sizes[1:]):
            self.layers.append(Linear(a, b, rng, gain=np.sqrt(2.0), dtype=dtype))
        self.head = Linear(sizes[-1], n_out, rng, gain=1.0, scale=out_scale, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x).elu()
        return self.head(x)

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward_np(x)
            e = np.minimum(x, 0.0)
            np.exp(e, out=e)
            np.maximum(x, 0.0, out=x)
            x += e
            x -= 1.0
        return self.head.forward_np(x)

    def linears(self):
        return self.layers + [self.head]


class PolicyParams:
    """All trainable parameters plus the shape manifest used for checkpoints."""

    PRPN_HIDDEN = [256, 128]
    ACTOR_HIDDEN = [512, 256, 128]
    CRITIC_HIDDEN = [512, 256, 128]

    def __init__(self, obs_dim: int, priv_dim: int, act_dim: int,
                 history_len: int = 20, latent_dim: int = 16,
                 seed: int = 0, dtype=np.float32, log_std_init: float = -0.5):
        self.obs_dim = obs_dim
        self.priv_dim = priv_dim
        self.act_dim = act_dim
        self.history_len = history_len
        self.latent_dim = latent_dim
        self.dtype = np.dtype(dtype)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 901])))
        self.prpn = MLP(history_len * obs_dim, self.PRPN_HIDDEN, 3 + latent_dim,
                        rng, dtype=dtype)
        self.actor = MLP(obs_dim + 3 + latent_dim, self.ACTOR_HIDDEN, act_dim,
                         rng, dtype=dtype)
        self.log_std = Tensor(np.full(act_dim, log_std_init, dtype=dtype),
                              requires_grad=True)
        self.critic = MLP(obs_dim + priv_dim, self.CRITIC_HIDDEN, 1, rng, dtype=dtype)

    # --- parameter table ---------------------------------------------------------

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for net_name, net in (("prpn", self.prpn), ("actor", self.actor),
                              ("critic", self.critic)):
            for i, lin in enumerate(net.linears()):
                out.append((f"{net_name}.{i}.W", lin.W))
                out.append((f"{net_name}.{i}.b", lin.b))
        out.append(("log_std", self.log_std))
        return out

    def manifest(self) -> list[dict]:
        table = []
        offset = 0
        for name, t in self.parameters():
            size = int(t.data.size)
            table.append({"name": name, "shape": list(t.data.shape), "offset": offset})
            offset += size
        return table

    def n_params(self) -> int:
        return sum(t.data.size for _, t in self.parameters())

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.data.reshape(-1) for _, t in self.parameters()]).astype(
            np.float32
        )

    def load_flat(self, vec: np.ndarray) -> None:
        total = self.n_params()
        if vec.size != total:
            raise ValueError(f"parameter vector has {vec.size} entries, expected {total}")
        offset = 0
        for _, t in self.parameters():
            size = t.data.size
            t.data = vec[offset:offset + size].reshape(t.data.shape).astype(self.dtype)
            offset += size

    def clamp_log_std(self) -> None:
        np.clip(self.log_std.data, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std.data)

    def copy(self) -> "PolicyParams":
        twin = PolicyParams(self.obs_dim, self.priv_dim, self.act_dim,
                            self.history_len, self.latent_dim, dtype=self.dtype)
        twin.load_flat(self.flatten())
        return twin


# --- forward passes -----------------------------------------------------------


def prpn_forward(params: PolicyParams, history: Tensor):
    """History window -> (velocity estimate, bounded latent)."""
    out = params.prpn(history)
    vhat = out.cols(0, 3)
    z = out.cols(3, 3 + params.latent_dim).tanh()
    return vhat, z


def prpn_forward_np(params: PolicyParams, history: np.ndarray):
    out = params.prpn.forward_np(history)
    return out[:, :3], np.tanh(out[:, 3:])


def actor_forward(params: PolicyParams, obs: Tensor, vhat: Tensor, z: Tensor,
                  detach_vhat: bool = True) -> Tensor:
    """Action mean; the velocity estimate enters detached (supervised only).

    detach_vhat=False keeps the edge differentiable, used by gradient
    verification to exercise the fully connected path.
    """
    x = concat([obs, vhat.detach() if detach_vhat else vhat, z], axis=1)
    return params.actor(x)


def actor_forward_np(params: PolicyParams, obs: np.ndarray, vhat: np.ndarray,
                     z: np.ndarray) -> np.ndarray:
    return params.actor.forward_np(np.concatenate([obs, vhat, z], axis=1))


def critic_forward(params: PolicyParams, obs: Tensor, priv: Tensor) -> Tensor:
    return params.critic(concat([obs, priv], axis=1))


def critic_forward_np(params: PolicyParams, obs: np.ndarray,
                      priv: np.ndarray) -> np.ndarray:
    return params.critic.forward_np(np.concatenate([obs, priv], axis=1))[:, 0]


# --- diagonal Gaussian ----------------------------------------------------------


def gaussian_sample(rng: np.random.Generator, mean: np.ndarray,
                    log_std: np.ndarray) -> np.ndarray:
    eps = rng.standard_normal(mean.shape).astype(mean.dtype)
    return mean + np.exp(log_std)[None, :] * eps


def gaussian_log_prob_np(mean: np.ndarray, log_std: np.ndarray,
                         actions: np.ndarray) -> np.ndarray:
    inv_std = np.exp(-log_std)[None, :]
    zed = (actions - mean) * inv_std
    d = mean.shape[1]
    return -0.5 * (zed * zed).sum(axis=1) - log_std.sum() - 0.5 * d * LOG_2PI


def gaussian_log_prob(mean: Tensor, log_std: Tensor, actions: np.ndarray) -> Tensor:
    """Log density of fixed actions under N(mean, diag exp(2 log_std)); (n,) tensor."""
    a = Tensor(actions)
    inv_std = (-log_std).exp()
    zed = (a - mean) * inv_std
    d = mean.data.shape[1]
    const = 0.5 * d * LOG_2PI
    return (zed.square().sum(axis=1) * (-0.5)) - log_std.sum() - const


def gaussian_entropy(log_std: Tensor) -> Tensor:
    """Closed-form entropy of the diagonal Gaussian (scalar tensor)."""
    d = log_std.data.size
    return log_std.sum() + 0.5 * d * (1.0 + LOG_2PI)
