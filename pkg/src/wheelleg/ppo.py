"""On-policy learner: rollout storage, GAE, clipped-surrogate PPO with a
velocity-prediction auxiliary loss, adaptive learning rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    PolicyParams,
    Tensor,
    actor_forward,
    critic_forward,
    gaussian_entropy,
    gaussian_log_prob,
    minimum,
    prpn_forward,
)


class NonFiniteLossError(RuntimeError):
    """Raised when the composite loss stops being finite; carries minibatch stats."""


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    aux_coef: float = 1.0
    max_grad_norm: float = 1.0
    kl_target: float = 0.01
    learning_rate: float = 3.0e-4
    lr_min: float = 1.0e-5
    lr_max: float = 1.0e-2
    # conditions the value regression (returns land near unit scale); the
    # policy is invariant to it because advantages are normalized
    reward_scale: float = 0.02

    def validate(self) -> None:
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"lambda must be in (0, 1], got {self.lam}")
        if self.clip_eps <= 0:
            raise ValueError(f"clip epsilon must be > 0, got {self.clip_eps}")
        if self.epochs < 1 or self.minibatches < 1:
            raise ValueError("epochs and minibatches must be >= 1")


class RolloutBuffer:
    """Fixed-horizon on-policy storage, fully written before any learning pass."""

    def __init__(self, horizon: int, n_envs: int, obs_dim: int, hist_dim: int,
                 priv_dim: int, act_dim: int):
        self.horizon = horizon
        self.n_envs = n_envs
        T, N = horizon, n_envs
        self.obs = np.zeros((T, N, obs_dim), dtype=np.float32)
        self.hist = np.zeros((T, N, hist_dim), dtype=np.float32)
        self.priv = np.zeros((T, N, priv_dim), dtype=np.float32)
        self.actions = np.zeros((T, N, act_dim), dtype=np.float32)
        self.logp = np.zeros((T, N), dtype=np.float32)
        self.rewards = np.zeros((T, N), dtype=np.float64)
        self.values = np.zeros((T, N), dtype=np.float64)
        self.dones = np.zeros((T, N), dtype=bool)
        self.timeouts = np.zeros((T, N), dtype=bool)
        self.v_true = np.zeros((T, N, 3), dtype=np.float32)
        self.step = 0

    def add(self, obs, hist, priv, action, logp, reward, value, done, v_true,
            timeout=None) -> None:
        if self.step >= self.horizon:
            raise IndexError("rollout buffer already full")
        t = self.step
        self.obs[t] = obs
        self.hist[t] = hist
        self.priv[t] = priv
        self.actions[t] = action
        self.logp[t] = logp
        self.rewards[t] = reward
        self.values[t] = value
        self.dones[t] = done
        if timeout is not None:
            self.timeouts[t] = timeout
        self.v_true[t] = v_true
        self.step += 1

    @property
    def full(self) -> bool:
        return self.step == self.horizon

    def reset(self) -> None:
        self.step = 0


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float, lam: float):
    """Raw GAE advantages and returns (advantages + values).

    rewards/values/dones are (T, N); bootstrap_value is (N,) and stands in for
    the step-T value. Terminated steps propagate nothing from the future.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones)
    bootstrap_value = np.asarray(bootstrap_value, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValueError(
            f"shape mismatch: rewards {rewards.shape}, values {values.shape}, "
            f"dones {dones.shape}"
        )
    if bootstrap_value.shape != rewards.shape[1:]:
        raise ValueError(
            f"bootstrap value shape {bootstrap_value.shape} does not match envs "
            f"{rewards.shape[1:]}"
        )
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    lastgae = np.zeros_like(bootstrap_value)
    for t in range(T - 1, -1, -1):
        next_values = bootstrap_value if t == T - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t].astype(np.float64)
        delta = rewards[t] + gamma * next_values * nonterminal - values[t]
        lastgae = delta + gamma * lam * nonterminal * lastgae
        adv[t] = lastgae
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_losses(params: PolicyParams, minibatch: dict, cfg: PpoConfig):
    """Composite loss tensor plus the individual components as floats."""
    hist = Tensor(minibatch["hist"])
    obs = Tensor(minibatch["obs"])
    vhat, z = prpn_forward(params, hist)
    mean = actor_forward(params, obs, vhat, z)
    logp_new = gaussian_log_prob(mean, params.log_std, minibatch["actions"])
    ratio = (logp_new - Tensor(minibatch["logp"])).exp()
    adv = Tensor(minibatch["advantages"])
    surrogate = minimum(ratio * adv, ratio.clip(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv)
    policy_loss = -surrogate.mean()

    values = critic_forward(params, obs, Tensor(minibatch["priv"]))
    value_loss = (values - Tensor(minibatch["returns"][:, None])).square().mean()

    entropy = gaussian_entropy(params.log_std)
    aux_loss = (vhat - Tensor(minibatch["v_true"])).square().mean()

    total = (
        policy_loss
        + cfg.value_coef * value_loss
        - cfg.entropy_coef * entropy
        + cfg.aux_coef * aux_loss
    )
    approx_kl = float(np.mean(minibatch["logp"] - logp_new.data))
    parts = {
        "policy_loss": float(policy_loss.data),
        "value_loss": float(value_loss.data),
        "entropy": float(entropy.data),
        "aux_loss": float(aux_loss.data),
        "approx_kl": approx_kl,
    }
    if not np.isfinite(total.data):
        raise NonFiniteLossError(
            f"non-finite loss: {parts}; minibatch obs range "
            f"[{minibatch['obs'].min():.3g}, {minibatch['obs'].max():.3g}], "
            f"adv range [{minibatch['advantages'].min():.3g}, "
            f"{minibatch['advantages'].max():.3g}]"
        )
    return total, parts


class Adam:
    """First/second-moment adaptive steps:
    m <- b1 m + (1-b1) g;  s <- b2 s + (1-b2) g^2;
    p <- p - lr * (m / (1-b1^t)) / (sqrt(s / (1-b2^t)) + eps)."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.s: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, named_params, grads, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for (name, p), g in zip(named_params, grads):
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data, dtype=np.float64)
                self.s[name] = np.zeros_like(p.data, dtype=np.float64)
            s = self.s[name]
            m += (1.0 - b1) * (g - m)
            s += (1.0 - b2) * (g * g - s)
            p.data -= (lr * (m / c1) / (np.sqrt(s / c2) + self.eps)).astype(p.data.dtype)


def global_grad_norm(grads) -> float:
    total = 0.0
    for g in grads:
        total += float(np.sum(g.astype(np.float64) ** 2))
    return float(np.sqrt(total))


class PpoLearner:
    """Owns the optimizer state and the adaptive learning rate."""

    def __init__(self, params: PolicyParams, cfg: PpoConfig):
        cfg.validate()
        self.params = params
        self.cfg = cfg
        self.opt = Adam()
        self.lr = cfg.learning_rate

    def update(self, buffer: RolloutBuffer, bootstrap_value: np.ndarray,
               rng: np.random.Generator) -> dict:
        """Optimize over the full buffer: epochs x shuffled minibatches."""
        if not buffer.full:
            raise ValueError("rollout buffer must be full before an update")
        cfg = self.cfg
        # timeout steps are cut-off episodes, not true terminals: fold the
        # critic's tail estimate back into the reward before the GAE pass
        rewards = buffer.rewards * cfg.reward_scale \
            + cfg.gamma * buffer.values * buffer.timeouts
        adv, returns = compute_gae(
            rewards, buffer.values, buffer.dones, bootstrap_value,
            cfg.gamma, cfg.lam,
        )
        adv_n = normalize_advantages(adv).astype(np.float32)

        T, N = buffer.horizon, buffer.n_envs
        total = T * N
        flat = {
            "obs": buffer.obs.reshape(total, -1),
            "hist": buffer.hist.reshape(total, -1),
            "priv": buffer.priv.reshape(total, -1),
            "actions": buffer.actions.reshape(total, -1),
            "logp": buffer.logp.reshape(total),
            "advantages": adv_n.reshape(total),
            "returns": returns.astype(np.float32).reshape(total),
            "v_true": buffer.v_true.reshape(total, -1),
        }

        named = self.params.parameters()
        agg: dict[str, float] = {
            "policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
            "aux_loss": 0.0, "approx_kl": 0.0, "grad_norm": 0.0,
        }
        n_batches = 0
        n_skipped = 0
        for _ in range(cfg.epochs):
            perm = rng.permutation(total)
            for chunk in np.array_split(perm, cfg.minibatches):
                mb = {k: v[chunk] for k, v in flat.items()}
                loss, parts = ppo_losses(self.params, mb, cfg)

                # adapt the learning rate from this minibatch's divergence
                kl = parts["approx_kl"]
                if kl < cfg.kl_target / 2.0:
                    self.lr *= 1.5
                elif kl > cfg.kl_target * 2.0:
                    self.lr *= 2.0 / 3.0
                self.lr = float(np.clip(self.lr, cfg.lr_min, cfg.lr_max))

                loss.backward()
                grads = [
                    t.grad if t.grad is not None else np.zeros_like(t.data)
                    for _, t in named
                ]
                for _, t in named:
                    t.grad = None
                norm = global_grad_norm(grads)
                if not np.isfinite(norm):
                    n_skipped += 1
                    continue
                if norm > cfg.max_grad_norm:
                    scale = cfg.max_grad_norm / (norm + 1e-12)
                    grads = [g * scale for g in grads]
                self.opt.step(named, grads, self.lr)
                self.params.clamp_log_std()

                for k in parts:
                    agg[k] += parts[k]
                agg["grad_norm"] += norm
                n_batches += 1

        if n_batches:
            for k in agg:
                agg[k] /= n_batches
        agg["lr"] = self.lr
        agg["skipped_minibatches"] = n_skipped
        agg["mean_value"] = float(buffer.values.mean())
        agg["mean_advantage_raw"] = float(adv.mean())
        return agg
