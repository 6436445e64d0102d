"""Vectorized locomotion environment: observation assembly, action semantics,
reward suite, termination/reset, command sampling, domain randomization and
the terrain curriculum.

Observation layout (fixed offsets, one block per proprioceptive signal):
[command(3), base angular velocity(3), projected gravity(3), joint positions,
joint velocities, previous action]. Linear body velocity is deliberately
absent; the history encoder has to estimate it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .robot import Morphology, observation_dim, require_valid
from .sim import ActuatorCommand, PlanarSim, SimParams
from .terrain import Heightfield, TerrainSet, TerrainTable

OBS_SCALE_ANG_VEL = 0.25
OBS_SCALE_JOINT_VEL = 0.05

DEFAULT_REWARD_WEIGHTS = {
    "lin_vel_tracking": 1.0,
    "ang_vel_tracking": 0.5,
    "z_vel_penalty": 2.0,
    "orientation_penalty": 5.0,
    "torque_penalty": 2.0e-4,
    "power_penalty": 2.0e-3,
    "action_rate_penalty": 0.01,
    "joint_accel_penalty": 2.5e-7,
    "wheel_slip_penalty": 0.1,
    "wheel_airspin_penalty": 0.01,
    "collision_penalty": 1.0,
    "termination_penalty": 200.0,
}

ACTION_CLIP = 100.0
TRACKING_SIGMA = 0.25  # denominator of the exponential tracking kernels
N_HEIGHT_SAMPLES = 11
HEIGHT_SAMPLE_SPACING = 0.1


@dataclass
class EnvConfig:
    reward_weights: dict = field(default_factory=lambda: dict(DEFAULT_REWARD_WEIGHTS))
    episode_length_s: float = 20.0
    spawn_x: float = 0.5
    spawn_clearance: float = 0.005

    # commands
    command_vx_init: tuple[float, float] = (-0.5, 0.5)
    command_vx_max: tuple[float, float] = (-2.0, 2.0)
    fixed_command: float | None = None   # overrides sampling with a constant v_x

    # termination
    min_base_height: float = 0.15
    max_pitch: float = 1.0

    # observation noise (training mode only, physical units, pre-scaling)
    noise_q: float = 0.01
    noise_qdot: float = 0.1
    noise_omega: float = 0.05
    noise_gravity: float = 0.05

    # randomization draws
    randomize: bool = True
    mass_scale_range: tuple[float, float] = (0.85, 1.15)
    payload_range: tuple[float, float] = (0.0, 3.0)
    com_shift_range: tuple[float, float] = (-0.03, 0.03)
    friction_range: tuple[float, float] = (0.4, 1.2)
    motor_scale_range: tuple[float, float] = (0.9, 1.1)
    gain_scale_range: tuple[float, float] = (0.9, 1.1)
    max_action_delay: int = 2
    init_joint_noise: float = 0.1
    push_interval_s: float = 8.0
    push_magnitude: float = 0.5

    # curriculum
    curriculum: bool = True
    promote_tracking: float = 0.8
    promote_distance_frac: float = 0.5
    demote_distance_frac: float = 0.25

    # experiment switches
    lock_wheels: bool = False


@dataclass
class Command:
    v_x: float
    v_y: float = 0.0   # always 0 in planar simulation
    yaw_rate: float = 0.0


@dataclass
class CurriculumState:
    levels: np.ndarray          # per-env terrain level
    command_range: tuple[float, float]
    promotions: int
    demotions: int


def observation_slices(m: Morphology) -> dict[str, slice]:
    n = m.n_joints
    o = 0
    out = {}
    for name, width in (
        ("command", 3), ("ang_vel", 3), ("gravity", 3),
        ("joint_pos", n), ("joint_vel", n), ("prev_action", n),
    ):
        out[name] = slice(o, o + width)
        o += width
    return out


def apply_action(m: Morphology, sim: PlanarSim, actions: np.ndarray) -> ActuatorCommand:
    """Policy action -> actuator targets: scaled leg increments around the stand
    pose (clamped to position limits) and scaled wheel velocities (clamped to
    velocity limits)."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.ndim == 1:
        actions = actions[None, :]
    if actions.shape[1] != m.n_joints:
        raise ValueError(
            f"action dim {actions.shape[1]} does not match morphology "
            f"{m.name!r} ({m.n_joints})"
        )
    a = np.clip(actions, -ACTION_CLIP, ACTION_CLIP)
    leg = a[:, : m.n_leg_joints]
    wheel = a[:, m.n_leg_joints:]
    leg_idx = ~sim.is_wheel
    leg_targets = m.action_scale_leg * leg + sim.q_ref[leg_idx][None, :]
    leg_targets = np.clip(leg_targets, sim.pos_lo[leg_idx], sim.pos_hi[leg_idx])
    wheel_targets = m.action_scale_wheel * wheel
    wheel_targets = np.clip(
        wheel_targets,
        -sim.velocity_limit[sim.is_wheel],
        sim.velocity_limit[sim.is_wheel],
    )
    return ActuatorCommand(leg_pos=leg_targets, wheel_vel=wheel_targets)


def draw_randomization(env_index: int, seed: int, cfg: EnvConfig) -> dict:
    """Per-env physics draws; a pure function of (env_index, seed).

    With randomization disabled every dynamics scale collapses to its nominal
    value; the initial-pose jitter is governed separately by init_joint_noise
    so evaluation episodes can still start from distinct poses.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, env_index])))
    if not cfg.randomize:
        return {
            "mass_scale": 1.0, "payload": 0.0, "com_shift": 0.0,
            "friction": None, "motor_scale": 1.0, "kp_scale": 1.0,
            "kd_scale": 1.0, "delay": 0,
            "joint_noise": cfg.init_joint_noise if cfg.init_joint_noise > 0 else None,
        }
    gain = rng.uniform(*cfg.gain_scale_range, 2)
    return {
        "mass_scale": rng.uniform(*cfg.mass_scale_range),
        "payload": rng.uniform(*cfg.payload_range),
        "com_shift": rng.uniform(*cfg.com_shift_range),
        "friction": rng.uniform(*cfg.friction_range),
        "motor_scale": rng.uniform(*cfg.motor_scale_range),
        "kp_scale": gain[0],
        "kd_scale": gain[1],
        "delay": int(rng.integers(0, cfg.max_action_delay + 1)),
        "joint_noise": cfg.init_joint_noise if cfg.init_joint_noise > 0 else None,
    }


class WheelLegEnv:
    """Batch of POMDP locomotion environments over one morphology."""

    def __init__(self, morphology: Morphology, terrain, cfg: EnvConfig,
                 n_envs: int, seed: int = 0, sim_params: SimParams | None = None,
                 train_mode: bool = True):
        require_valid(morphology)
        self.m = morphology
        self.cfg = cfg
        self.n_envs = n_envs
        self.train_mode = train_mode
        self.sim = PlanarSim(morphology)
        unknown = set(cfg.reward_weights) - set(DEFAULT_REWARD_WEIGHTS)
        if unknown:
            raise ValueError(f"unknown reward terms in config: {sorted(unknown)}")

        if isinstance(terrain, TerrainSet):
            self.table = TerrainTable(terrain.terrains)
            self.levels = terrain.levels
            self.variations = terrain.variations_per_level
        elif isinstance(terrain, Heightfield):
            self.table = TerrainTable([terrain])
            self.levels = 1
            self.variations = 1
        else:
            self.table = terrain
            self.levels = int(self.table.levels.max()) + 1
            self.variations = self.table.heights.shape[0] // self.levels

        self.params = sim_params if sim_params is not None else SimParams()
        self.params.validate()
        self.params.lock_wheels = cfg.lock_wheels
        n = n_envs
        self.params.mass_scale = np.ones(n)
        self.params.friction_env = np.full(n, self.params.friction)
        self.params.kp_scale = np.ones(n)
        self.params.kd_scale = np.ones(n)
        self.params.motor_scale = np.ones(n)
        self.params.com_shift = np.zeros(n)
        self.params.payload = np.zeros(n)
        self.params.action_delay = np.zeros(n, dtype=np.int64)
        self.params.terrain_index = np.zeros(n, dtype=np.int64)

        self.obs_dim = observation_dim(morphology)
        self.n_actions = morphology.n_joints
        self.priv_dim = (
            3 + 2 * self.sim.n_contacts + 1 + 5 + N_HEIGHT_SAMPLES
        )
        self.control_dt = self.params.dt * self.params.substeps
        self.max_episode_steps = int(round(cfg.episode_length_s / self.control_dt))
        self.push_every = (
            int(round(cfg.push_interval_s / self.control_dt))
            if cfg.push_interval_s > 0 else 0
        )

        self.seed = seed
        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 17])))
        self.state = self.sim.make_state(n)
        self.command = np.zeros((n, 3))
        self.a_prev = np.zeros((n, self.n_actions))
        self.prev_joint_vel = np.zeros((n, self.n_actions))
        self.episode_step = np.zeros(n, dtype=np.int64)
        self.episode_counter = np.zeros(n, dtype=np.int64)

        # action-delay FIFO of recent raw actions
        self.delay_depth = cfg.max_action_delay + 1
        self.action_fifo = np.zeros((n, self.delay_depth, self.n_actions))
        self.fifo_ptr = 0

        # curriculum bookkeeping
        self.terrain_level = np.zeros(n, dtype=np.int64)
        self.command_range = tuple(cfg.command_vx_init)
        self.promotions = 0
        self.demotions = 0

        # per-episode accumulators
        self.ep_return = np.zeros(n)
        self.ep_track_sum = np.zeros(n)
        self.ep_start_x = np.zeros(n)
        self.ep_energy_base = np.zeros(n)
        self.ep_wheel_base = np.zeros(n)

        self.reset_all()

    # --- observations -----------------------------------------------------------

    def observation_slices(self) -> dict[str, slice]:
        return observation_slices(self.m)

    def assemble_observation(self, noise: bool | None = None) -> np.ndarray:
        """Eq-layout proprioceptive vector: [c, omega, g, q, qdot, a_prev]."""
        noise = self.train_mode if noise is None else noise
        n = self.n_envs
        st = self.state
        _, ang = self.sim.body_velocity(st)
        grav = self.sim.projected_gravity(st)
        qj = st.q[:, 3:].copy()
        vj = st.v[:, 3:].copy()
        wheel = self.sim.is_wheel
        if wheel.any():
            wrapped = np.mod(qj[:, wheel] + np.pi, 2.0 * np.pi) - np.pi
            wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
            qj[:, wheel] = wrapped
        if noise:
            c = self.cfg
            ang = ang + self.rng.uniform(-c.noise_omega, c.noise_omega, ang.shape)
            grav = grav + self.rng.uniform(-c.noise_gravity, c.noise_gravity, grav.shape)
            qj = qj + self.rng.uniform(-c.noise_q, c.noise_q, qj.shape)
            vj = vj + self.rng.uniform(-c.noise_qdot, c.noise_qdot, vj.shape)
        obs = np.concatenate(
            [
                self.command,
                ang * OBS_SCALE_ANG_VEL,
                grav,
                qj,
                vj * OBS_SCALE_JOINT_VEL,
                self.a_prev,
            ],
            axis=1,
        )
        if obs.shape[1] != self.obs_dim:
            raise ValueError(
                f"observation layout error: built {obs.shape[1]}, expected {self.obs_dim}"
            )
        return obs

    def privileged_state(self) -> np.ndarray:
        """Critic-only ground truth: true velocity, contacts, friction,
        randomization vector, local terrain profile."""
        st = self.state
        lin, _ = self.sim.body_velocity(st)
        flags = st.contact_active.astype(np.float64)
        forces = st.contact_normal * 0.01
        rand_vec = np.stack(
            [
                self.params.mass_scale,
                self.params.motor_scale,
                self.params.com_shift,
                self.params.payload,
                self.params.action_delay.astype(np.float64),
            ],
            axis=1,
        )
        offsets = (np.arange(N_HEIGHT_SAMPLES) - (N_HEIGHT_SAMPLES - 1) / 2.0) \
            * HEIGHT_SAMPLE_SPACING
        xs = st.q[:, 0:1] + offsets[None, :]
        h = self.table.height(self.params.terrain_index[:, None], xs)
        rel_h = np.clip(h - st.q[:, 1:2], -2.0, 2.0)
        return np.concatenate(
            [lin, flags, forces, self.params.friction_env[:, None], rand_vec, rel_h],
            axis=1,
        )

    # --- rewards ------------------------------------------------------------------

    def compute_reward(self, fell: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, dict]:
        """Weighted reward and the raw (unweighted) value of every term."""
        st = self.state
        sim = self.sim
        lin, ang = sim.body_velocity(st)
        grav = sim.projected_gravity(st)
        tau = st.applied_torques
        vj = st.v[:, 3:]
        terms: dict[str, np.ndarray] = {}

        vx_err = self.command[:, 0] - lin[:, 0]
        terms["lin_vel_tracking"] = np.exp(-(vx_err ** 2) / TRACKING_SIGMA)
        wz_err = self.command[:, 2] - ang[:, 1]
        terms["ang_vel_tracking"] = np.exp(-(wz_err ** 2) / TRACKING_SIGMA)
        terms["z_vel_penalty"] = -st.v[:, 1] ** 2
        terms["orientation_penalty"] = -grav[:, 0] ** 2
        terms["torque_penalty"] = -(tau ** 2).sum(axis=1)
        terms["power_penalty"] = -sim.mechanical_power(st)
        terms["action_rate_penalty"] = -((actions - self.a_prev) ** 2).sum(axis=1)
        qdd = (vj - self.prev_joint_vel) / self.control_dt
        terms["joint_accel_penalty"] = -(qdd ** 2).sum(axis=1)

        wheel_c = sim.contact_is_wheel
        if wheel_c.any():
            slip = st.contact_slip[:, wheel_c]
            in_contact = st.contact_active[:, wheel_c]
            terms["wheel_slip_penalty"] = -(slip ** 2 * in_contact).sum(axis=1)
            wheel_spin = vj[:, sim.contact_wheel_joint]
            terms["wheel_airspin_penalty"] = -(
                wheel_spin ** 2 * (~in_contact)
            ).sum(axis=1)
        else:
            zero = np.zeros(self.n_envs)
            terms["wheel_slip_penalty"] = zero
            terms["wheel_airspin_penalty"] = zero.copy()

        body_c = ~wheel_c
        terms["collision_penalty"] = -st.contact_active[:, body_c].astype(
            np.float64
        ).sum(axis=1)
        terms["termination_penalty"] = -fell.astype(np.float64)

        total = np.zeros(self.n_envs)
        for name, weight in self.cfg.reward_weights.items():
            total += weight * terms[name]
        return total, terms

    # --- episode management ----------------------------------------------------------

    def _spawn_pose(self, ids: np.ndarray, joint_noise: np.ndarray) -> None:
        """Place envs at the spawn point in the (perturbed) stand pose."""
        k = len(ids)
        sub = self.sim.make_state(k)
        q = sub.q
        q[:, 0] = 0.0
        q[:, 1] = 0.0
        q[:, 3:] = self.sim.q_ref[None, :] + joint_noise
        wheel = self.sim.is_wheel
        q[:, 3:][:, wheel] = 0.0
        fk = self.sim.forward_kinematics(q, np.zeros_like(q))
        cpos, _ = self.sim._contact_points(fk)
        low_rel_base = cpos[:, :, 1].min(axis=1)   # base at origin, so base-relative
        rows = self.params.terrain_index[ids]
        spawn_x = self.table.origin_x + self.cfg.spawn_x
        ground = self.table.height(rows, np.full(k, spawn_x))
        q[:, 0] = spawn_x
        q[:, 1] = ground - low_rel_base + self.cfg.spawn_clearance
        self.state.set_at(ids, sub)

    def reset_envs(self, ids: np.ndarray) -> None:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            return
        joint_noise = np.zeros((len(ids), self.n_actions))
        for row, i in enumerate(ids):
            draws = draw_randomization(
                int(i), self.seed + int(self.episode_counter[i]) * 9973, self.cfg
            )
            self.params.mass_scale[i] = draws["mass_scale"]
            self.params.payload[i] = draws["payload"]
            self.params.com_shift[i] = draws["com_shift"]
            self.params.friction_env[i] = (
                draws["friction"] if draws["friction"] is not None
                else self.params.friction
            )
            self.params.motor_scale[i] = draws["motor_scale"]
            self.params.kp_scale[i] = draws["kp_scale"]
            self.params.kd_scale[i] = draws["kd_scale"]
            self.params.action_delay[i] = draws["delay"]
            if draws["joint_noise"] is not None:
                noise_rng = np.random.Generator(
                    np.random.PCG64(np.random.SeedSequence(
                        [self.seed, int(i), int(self.episode_counter[i]), 5]
                    ))
                )
                leg = ~self.sim.is_wheel
                joint_noise[row, leg] = noise_rng.uniform(
                    -self.cfg.init_joint_noise, self.cfg.init_joint_noise, leg.sum()
                )
            # terrain: random variation at the env's current level
            if self.levels > 1 or self.variations > 1:
                var = int(self.rng.integers(self.variations))
                self.params.terrain_index[i] = (
                    self.terrain_level[i] * self.variations + var
                )
            self.command[i, 0] = self._sample_command()
            self.episode_counter[i] += 1

        self._spawn_pose(ids, joint_noise)
        self.a_prev[ids] = 0.0
        self.prev_joint_vel[ids] = 0.0
        self.action_fifo[ids] = 0.0
        self.episode_step[ids] = 0
        self.ep_return[ids] = 0.0
        self.ep_track_sum[ids] = 0.0
        self.ep_start_x[ids] = self.state.q[ids, 0]
        self.ep_energy_base[ids] = self.state.energy[ids]
        self.ep_wheel_base[ids] = self.state.wheel_energy[ids]
        self.state.fault[ids] = False

    def _sample_command(self) -> float:
        if self.cfg.fixed_command is not None:
            return float(self.cfg.fixed_command)
        lo, hi = self.command_range
        return float(self.rng.uniform(lo, hi))

    def reset_all(self) -> np.ndarray:
        self.reset_envs(np.arange(self.n_envs))
        return self.assemble_observation()

    def update_curriculum(self, ids: np.ndarray, fell: np.ndarray) -> None:
        """Episode-boundary level moves: promote on strong tracking + traversal,
        demote on an early fall; each episode moves a level by at most one."""
        if not self.cfg.curriculum:
            return
        terrain_len = self.table.length
        steps = np.maximum(self.episode_step[ids], 1)
        track_mean = self.ep_track_sum[ids] / steps
        dist = np.abs(self.state.q[ids, 0] - self.ep_start_x[ids])
        promote = (track_mean > self.cfg.promote_tracking) & (
            dist > self.cfg.promote_distance_frac * terrain_len
        )
        demote = fell & (dist < self.cfg.demote_distance_frac * terrain_len)
        lv = self.terrain_level[ids]
        new_lv = np.clip(lv + promote.astype(np.int64) - demote.astype(np.int64),
                         0, self.levels - 1)
        self.promotions += int(np.sum(new_lv > lv))
        self.demotions += int(np.sum(new_lv < lv))
        self.terrain_level[ids] = new_lv
        # widen commands once the population crosses the middle of the ladder
        if (
            self.cfg.fixed_command is None
            and self.command_range != self.cfg.command_vx_max
            and self.terrain_level.mean() > self.levels / 2.0
        ):
            self.command_range = tuple(self.cfg.command_vx_max)

    def curriculum_state(self) -> CurriculumState:
        return CurriculumState(
            levels=self.terrain_level.copy(),
            command_range=self.command_range,
            promotions=self.promotions,
            demotions=self.demotions,
        )

    # --- stepping -------------------------------------------------------------------

    def step(self, actions: np.ndarray):
        """Apply actions, advance one control period, reward, terminate, auto-reset.

        Returns (obs, privileged, reward, done, info); observations of done envs
        already belong to the next episode.
        """
        actions = np.clip(
            np.asarray(actions, dtype=np.float64), -ACTION_CLIP, ACTION_CLIP
        )
        if actions.shape != (self.n_envs, self.n_actions):
            raise ValueError(
                f"action batch {actions.shape} does not match "
                f"({self.n_envs}, {self.n_actions})"
            )

        # action delay: push the new action, read back the per-env delayed one
        self.action_fifo[:, self.fifo_ptr] = actions
        read = (self.fifo_ptr - self.params.action_delay) % self.delay_depth
        effective = self.action_fifo[np.arange(self.n_envs), read]
        cmd = apply_action(self.m, self.sim, effective)
        self.fifo_ptr = (self.fifo_ptr + 1) % self.delay_depth

        # periodic external push, scaled off for deterministic evaluation
        if self.train_mode and self.push_every and self.cfg.randomize:
            pushed = (self.episode_step > 0) & (self.episode_step % self.push_every == 0)
            if pushed.any():
                kick = self.rng.uniform(
                    -self.cfg.push_magnitude, self.cfg.push_magnitude, int(pushed.sum())
                )
                self.state.v[pushed, 0] += kick

        self.prev_joint_vel[:] = self.state.v[:, 3:]
        self.sim.step(self.state, cmd, self.params, self.table)
        self.episode_step += 1

        # termination
        ground = self.table.height(self.params.terrain_index, self.state.q[:, 0])
        too_low = (self.state.q[:, 1] - ground) < self.cfg.min_base_height
        tipped = np.abs(self.state.q[:, 2]) > self.cfg.max_pitch
        fault = self.state.fault.copy()
        fell = (too_low | tipped | fault)
        timeout = self.episode_step >= self.max_episode_steps
        done = fell | timeout

        reward, terms = self.compute_reward(fell, effective)
        reward = np.where(fault, -self.cfg.reward_weights["termination_penalty"], reward)

        lin, _ = self.sim.body_velocity(self.state)
        v_true = lin.copy()

        self.ep_return += reward
        self.ep_track_sum += terms["lin_vel_tracking"]

        info = {
            "reward_terms": terms,
            "v_true": v_true,
            "time_outs": timeout & ~fell,
            "falls": fell & ~fault,
            "faults": fault,
            "fault_count": int(fault.sum()),
            "mean_terrain_level": float(self.terrain_level.mean()),
            "episode": [],
        }

        done_ids = np.nonzero(done)[0]
        if done_ids.size:
            dist = np.abs(self.state.q[done_ids, 0] - self.ep_start_x[done_ids])
            steps = np.maximum(self.episode_step[done_ids], 1)
            for k, i in enumerate(done_ids):
                info["episode"].append(
                    {
                        "env": int(i),
                        "return": float(self.ep_return[i]),
                        "length": int(self.episode_step[i]),
                        "tracking_mean": float(self.ep_track_sum[i] / steps[k]),
                        "distance": float(dist[k]),
                        "end_x": float(self.state.q[i, 0]),
                        "fall": bool(fell[i]),
                        "timeout": bool(timeout[i] and not fell[i]),
                        "level": int(self.terrain_level[i]),
                        "energy": float(self.state.energy[i] - self.ep_energy_base[i]),
                        "wheel_energy": float(
                            self.state.wheel_energy[i] - self.ep_wheel_base[i]
                        ),
                    }
                )
            self.update_curriculum(done_ids, fell[done_ids])
            self.reset_envs(done_ids)

        alive = ~done
        self.a_prev[alive] = actions[alive]

        obs = self.assemble_observation()
        priv = self.privileged_state()
        return obs, priv, reward, done, info
