"""Policy evaluation: scripted command profiles, tracking/energy metrics,
cost of transport and wheel duty, JSON/CSV reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .env import EnvConfig, WheelLegEnv
from .nn import ObservationHistory
from .nn.checkpoint import params_from_checkpoint
from .nn.models import PolicyParams, actor_forward_np, prpn_forward_np
from .robot import load_morphology, total_mass
from .sim import SimParams
from .terrain import GRASS_FRICTION, named_terrain

PROFILES = ("constant", "trapezoid", "stop-and-go")

COT_MIN_DISTANCE = 0.1  # m, floor for the CoT denominator


def command_profile(profile: str, t: float, speed: float, episode_s: float) -> float:
    """Commanded forward velocity at episode time t."""
    if profile == "constant":
        return speed
    if profile == "trapezoid":
        ramp = 2.0
        if t < ramp:
            return speed * t / ramp
        if t > episode_s - ramp:
            return speed * max(episode_s - t, 0.0) / ramp
        return speed
    if profile == "stop-and-go":
        return speed if int(t / 3.0) % 2 == 0 else 0.0
    raise ValueError(f"unknown profile {profile!r}; choose from {PROFILES}")


@dataclass
class EvalReport:
    terrain: str
    profile: str
    speed: float
    deterministic: bool
    episodes: list = field(default_factory=list)

    def aggregate(self) -> dict:
        if not self.episodes:
            return {}
        arr = lambda k: np.array([e[k] for e in self.episodes], dtype=np.float64)
        return {
            "episodes": len(self.episodes),
            "mean_tracking_error": float(arr("tracking_error").mean()),
            "mean_distance": float(arr("distance").mean()),
            "fall_rate": float(arr("fall").mean()),
            "mean_cot": float(arr("cot").mean()),
            "mean_wheel_duty": float(arr("wheel_duty").mean()),
            "mean_return": float(arr("return").mean()),
        }

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(
                {
                    "terrain": self.terrain,
                    "profile": self.profile,
                    "speed": self.speed,
                    "deterministic": self.deterministic,
                    "aggregate": self.aggregate(),
                    "episodes": self.episodes,
                },
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")

    def to_csv(self, path: str) -> None:
        if not self.episodes:
            cols = ["episode"]
        else:
            cols = ["episode"] + sorted(self.episodes[0].keys())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i, ep in enumerate(self.episodes):
                w.writerow([i] + [ep[c] for c in cols[1:]])


def run_policy_episodes(
    params: PolicyParams,
    morphology_name: str,
    terrain_name: str = "flat",
    episodes: int = 20,
    profile: str = "constant",
    speed: float = 1.0,
    deterministic: bool = True,
    randomize: bool = False,
    lock_wheels: bool = False,
    seed: int = 0,
    episode_s: float = 20.0,
    warmup_s: float = 0.5,
    dump_path: str | None = None,
) -> EvalReport:
    """Run each env through one episode and collect the evaluation metrics.

    Tracking error, energy and distance are scored after `warmup_s` so the
    spawn-settling transient does not pollute steady-state numbers; falls
    count from the first step.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {PROFILES}")
    morphology = load_morphology(morphology_name)
    hf = named_terrain(terrain_name, seed=seed)
    sim_params = SimParams()
    if terrain_name == "grass":
        sim_params.friction = GRASS_FRICTION
    cfg = EnvConfig(
        randomize=randomize,
        fixed_command=speed,
        episode_length_s=episode_s,
        init_joint_noise=0.05,
        lock_wheels=lock_wheels,
        curriculum=False,
    )
    env = WheelLegEnv(
        morphology, hf, cfg, n_envs=episodes, seed=seed,
        sim_params=sim_params, train_mode=False,
    )
    history = ObservationHistory(episodes, params.history_len, env.obs_dim)

    mass = total_mass(morphology)
    g = env.params.gravity
    act_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 77])))

    finished: dict[int, dict] = {}
    err_sum = np.zeros(episodes)
    err_steps = np.zeros(episodes, dtype=np.int64)
    term_sums: dict[str, np.ndarray] = {
        k: np.zeros(episodes) for k in env.cfg.reward_weights
    }
    warmup_steps = int(round(warmup_s / env.control_dt))
    warm_energy = np.zeros(episodes)
    warm_wheel = np.zeros(episodes)
    warm_x = env.state.q[:, 0].copy()
    dump_fh = open(dump_path, "w") if dump_path else None

    step = 0
    max_steps = env.max_episode_steps + 1
    try:
        while len(finished) < episodes and step <= max_steps:
            t = step * env.control_dt
            env.command[:, 0] = command_profile(profile, t, speed, episode_s)
            obs = env.assemble_observation().astype(np.float32)
            if step == 0:
                history.reset_envs(np.arange(episodes), obs)
            else:
                history.push(obs)
            window = history.window()
            vhat, z = prpn_forward_np(params, window)
            mean = actor_forward_np(params, obs, vhat, z)
            if deterministic:
                actions = mean
            else:
                std = np.exp(params.log_std.data)[None, :]
                actions = mean + std * act_rng.standard_normal(mean.shape).astype(
                    np.float32
                )
            cmd_before = env.command[:, 0].copy()
            next_obs, _, reward, done, info = env.step(actions.astype(np.float64))

            live = np.array([i not in finished for i in range(episodes)])
            if step >= warmup_steps:
                v_fwd = info["v_true"][:, 0]
                err_sum[live] += np.abs(cmd_before[live] - v_fwd[live])
                err_steps[live] += 1
                for k, v in info["reward_terms"].items():
                    term_sums[k][live] += v[live]
            if step == warmup_steps - 1:
                warm_energy[:] = env.state.energy - env.ep_energy_base
                warm_wheel[:] = env.state.wheel_energy - env.ep_wheel_base
                warm_x[:] = env.state.q[:, 0]

            if dump_fh is not None:
                rec = {
                    "step": step,
                    "q": env.state.q[0].tolist(),
                    "v": env.state.v[0].tolist(),
                    "torques": env.state.applied_torques[0].tolist(),
                    "contact_normal": env.state.contact_normal[0].tolist(),
                    "contact_tangent": env.state.contact_tangent[0].tolist(),
                }
                dump_fh.write(json.dumps(rec) + "\n")

            for ep in info["episode"]:
                i = ep["env"]
                if i in finished:
                    continue
                steps_i = max(int(err_steps[i]), 1)
                if ep["length"] > warmup_steps:
                    energy = ep["energy"] - warm_energy[i]
                    wheel_energy = ep["wheel_energy"] - warm_wheel[i]
                    dist_scored = abs(ep["end_x"] - warm_x[i])
                else:  # ended inside the warmup window: score the whole episode
                    energy = ep["energy"]
                    wheel_energy = ep["wheel_energy"]
                    dist_scored = ep["distance"]
                dist = max(dist_scored, COT_MIN_DISTANCE)
                finished[i] = {
                    "tracking_error": float(err_sum[i] / steps_i),
                    "distance": float(ep["distance"]),
                    "fall": bool(ep["fall"]),
                    "timeout": bool(ep["timeout"]),
                    "return": float(ep["return"]),
                    "length": int(ep["length"]),
                    "energy": float(energy),
                    "cot": float(energy / (mass * g * dist)),
                    "wheel_duty": float(
                        wheel_energy / energy if energy > 1e-9 else 0.0
                    ),
                    "reward_terms": {
                        k: float(term_sums[k][i] / steps_i) for k in term_sums
                    },
                }
            done_ids = np.nonzero(done)[0]
            if done_ids.size:
                history.reset_envs(done_ids, next_obs[done_ids].astype(np.float32))
            step += 1
    finally:
        if dump_fh is not None:
            dump_fh.close()

    report = EvalReport(
        terrain=terrain_name, profile=profile, speed=speed,
        deterministic=deterministic,
        episodes=[finished[i] for i in sorted(finished)],
    )
    return report


def eval_checkpoint(stem: str, terrain_name: str, **kwargs) -> tuple[EvalReport, dict]:
    """Load a checkpoint and evaluate it; returns (report, manifest)."""
    params, manifest = params_from_checkpoint(stem)
    report = run_policy_episodes(params, manifest["morphology"], terrain_name, **kwargs)
    return report, manifest
