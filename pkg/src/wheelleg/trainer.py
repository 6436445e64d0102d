"""Seeded training runs: collect -> update iterations with checkpointing and
a JSON-lines metrics stream."""

from __future__ import annotations

import os
import time
from collections import deque

import numpy as np

from .config import RunConfig, save_run_config
from .env import WheelLegEnv
from .metrics import MetricsWriter
from .nn import ObservationHistory, PolicyParams
from .nn.checkpoint import save_checkpoint
from .nn.models import (
    actor_forward_np,
    critic_forward_np,
    gaussian_log_prob_np,
    prpn_forward_np,
)
from .ppo import NonFiniteLossError, PpoLearner, RolloutBuffer
from .robot import load_morphology
from .terrain import generate_set


class TrainingCollapse(RuntimeError):
    """Training hit non-finite losses; an emergency checkpoint was written."""

    def __init__(self, message: str, checkpoint: str):
        super().__init__(message)
        self.checkpoint = checkpoint


def build_env(cfg: RunConfig, train_mode: bool = True) -> WheelLegEnv:
    morphology = load_morphology(cfg.morphology)
    tset = generate_set(
        seed=cfg.seed,
        levels=cfg.terrain.levels,
        variations=cfg.terrain.variations,
        length=cfg.terrain.length,
        cell_size=cfg.terrain.cell_size,
        kinds=tuple(cfg.terrain.kinds),
    )
    return WheelLegEnv(
        morphology, tset, cfg.env, n_envs=cfg.n_envs, seed=cfg.seed,
        train_mode=train_mode,
    )


def checkpoint_extra(cfg: RunConfig, env: WheelLegEnv, sample_rng) -> dict:
    from .env import OBS_SCALE_ANG_VEL, OBS_SCALE_JOINT_VEL

    return {
        "seed": cfg.seed,
        "obs_scales": {
            "ang_vel": OBS_SCALE_ANG_VEL,
            "joint_vel": OBS_SCALE_JOINT_VEL,
        },
        "rng_state": {
            "sampler": sample_rng.bit_generator.state,
            "env": env.rng.bit_generator.state,
        },
    }


def train_run(cfg: RunConfig, progress: bool = False) -> dict:
    """Run the full collect/update loop; returns a summary of the run."""
    from .perf import tune_allocator

    tune_allocator()
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_run_config(cfg, os.path.join(cfg.out_dir, "config.yaml"))

    env = build_env(cfg)
    params = PolicyParams(
        obs_dim=env.obs_dim,
        priv_dim=env.priv_dim,
        act_dim=env.n_actions,
        history_len=cfg.history_len,
        latent_dim=cfg.latent_dim,
        seed=cfg.seed,
    )
    learner = PpoLearner(params, cfg.ppo)
    history = ObservationHistory(cfg.n_envs, cfg.history_len, env.obs_dim)
    buffer = RolloutBuffer(
        cfg.rollout_horizon, cfg.n_envs, env.obs_dim,
        cfg.history_len * env.obs_dim, env.priv_dim, env.n_actions,
    )
    sample_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([cfg.seed, 23]))
    )
    shuffle_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([cfg.seed, 31]))
    )

    obs = env.assemble_observation().astype(np.float32)
    priv = env.privileged_state().astype(np.float32)
    history.reset_envs(np.arange(cfg.n_envs), obs)

    recent_episodes: deque[dict] = deque(maxlen=200)
    metrics_path = os.path.join(cfg.out_dir, "metrics.jsonl")
    checkpoints: list[str] = []
    term_weights = env.cfg.reward_weights
    t_start = time.perf_counter()

    def save(stem_it: int) -> str:
        stem = os.path.join(cfg.out_dir, f"ckpt_{stem_it:06d}")
        save_checkpoint(stem, params, cfg.morphology,
                        extra=checkpoint_extra(cfg, env, sample_rng))
        checkpoints.append(stem)
        return stem

    log_std = params.log_std
    with MetricsWriter(metrics_path) as metrics:
        for it in range(1, cfg.iterations + 1):
            it_t0 = time.perf_counter()
            term_sums: dict[str, float] = {k: 0.0 for k in term_weights}
            falls = 0
            faults = 0
            episodes_done = 0

            for _ in range(cfg.rollout_horizon):
                window = history.window()
                vhat, z = prpn_forward_np(params, window)
                mean = actor_forward_np(params, obs, vhat, z)
                std = np.exp(log_std.data)[None, :]
                eps = sample_rng.standard_normal(mean.shape).astype(np.float32)
                actions = mean + std * eps
                logp = gaussian_log_prob_np(mean, log_std.data, actions)
                values = critic_forward_np(params, obs, priv)

                next_obs, next_priv, reward, done, info = env.step(
                    actions.astype(np.float64)
                )
                buffer.add(obs, window, priv, actions, logp, reward, values,
                           done, info["v_true"], timeout=info["time_outs"])

                for k, v in info["reward_terms"].items():
                    term_sums[k] += float(v.mean()) * term_weights[k]
                falls += int(info["falls"].sum())
                faults += info["fault_count"]
                for ep in info["episode"]:
                    recent_episodes.append(ep)
                    episodes_done += 1

                obs = next_obs.astype(np.float32)
                priv = next_priv.astype(np.float32)
                history.push(obs)
                done_ids = np.nonzero(done)[0]
                if done_ids.size:
                    history.reset_envs(done_ids, obs[done_ids])

            window = history.window()
            bootstrap = critic_forward_np(params, obs, priv)
            try:
                stats = learner.update(buffer, bootstrap, shuffle_rng)
            except NonFiniteLossError as exc:
                stem = save(it)
                raise TrainingCollapse(str(exc), stem) from exc
            buffer.reset()

            steps = cfg.rollout_horizon * cfg.n_envs
            wall = time.perf_counter() - it_t0
            levels = env.terrain_level
            rec = {
                "iteration": it,
                "wall_time_s": round(time.perf_counter() - t_start, 3),
                "env_steps_per_s": round(steps / wall, 1),
                "mean_return": (
                    float(np.mean([e["return"] for e in recent_episodes]))
                    if recent_episodes else float("nan")
                ),
                "mean_episode_len": (
                    float(np.mean([e["length"] for e in recent_episodes]))
                    if recent_episodes else float("nan")
                ),
                "mean_tracking": (
                    float(np.mean([e["tracking_mean"] for e in recent_episodes]))
                    if recent_episodes else float("nan")
                ),
                "episodes": episodes_done,
                "falls": falls,
                "faults": faults,
                "terrain_level_mean": float(levels.mean()),
                "terrain_level_frac_gt3": float((levels > 3).mean()),
                "reward_terms": {
                    k: round(v / cfg.rollout_horizon, 6) for k, v in term_sums.items()
                },
                "policy_loss": round(stats["policy_loss"], 6),
                "value_loss": round(stats["value_loss"], 6),
                "entropy": round(stats["entropy"], 6),
                "aux_loss": round(stats["aux_loss"], 6),
                "approx_kl": round(stats["approx_kl"], 6),
                "grad_norm": round(stats["grad_norm"], 6),
                "lr": stats["lr"],
                "skipped_minibatches": stats["skipped_minibatches"],
            }
            metrics.write(rec)
            if progress and (it % 10 == 0 or it == 1):
                print(
                    f"[{it:5d}] ret={rec['mean_return']:.1f} "
                    f"track={rec['mean_tracking']:.3f} kl={rec['approx_kl']:.4f} "
                    f"lvl={rec['terrain_level_mean']:.2f} "
                    f"steps/s={rec['env_steps_per_s']:.0f}",
                    flush=True,
                )

            if cfg.checkpoint_interval and it % cfg.checkpoint_interval == 0:
                save(it)

        if not checkpoints or checkpoints[-1] != os.path.join(
            cfg.out_dir, f"ckpt_{cfg.iterations:06d}"
        ):
            save(cfg.iterations)

    return {
        "iterations": cfg.iterations,
        "out_dir": cfg.out_dir,
        "metrics_path": metrics_path,
        "checkpoints": checkpoints,
        "final_checkpoint": checkpoints[-1],
    }
