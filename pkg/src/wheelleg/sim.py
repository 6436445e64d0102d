"""Batched planar articulated rigid-body simulator.

Generalized coordinates per environment: [base_x, base_z, base_pitch,
joint_0 .. joint_{J-1}] with the morphology's global joint ordering.
Pitch is counter-clockwise in the (x, z) plane; joints may carry a negated
axis (mirrored rear legs; wheels spin so positive velocity rolls toward +x).

Dynamics: the mass matrix is assembled as the composite rigid-body sum
m_b * Ju_b^T Ju_b + I_b * Jw_b^T Jw_b over subtree bodies, and the
velocity-product plus gravity bias comes from a Newton-Euler sweep down the
kinematic chain (planar bodies have no gyroscopic torque, so the angular
bias with zero joint acceleration vanishes). Ground contact is a penalty
spring-damper with regularized Coulomb friction queried against a per-env
heightfield; damping resists approach only, so contacts never inject energy.
Integration is semi-implicit Euler (velocity first, then position) with the
velocity-derivative of damping forces (wheel servos, contact damping,
stiction-band friction) folded into the system matrix, which keeps stiff
damping stable at the nominal dt.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass

import numpy as np

from .robot import KIND_WHEEL, Morphology, MorphologyError, require_valid
from .terrain import TerrainTable


@dataclass
class SimParams:
    """Scalar physics constants plus optional per-env randomization arrays."""

    dt: float = 0.005
    substeps: int = 4              # control period = substeps * dt (50 Hz default)
    gravity: float = 9.81
    contact_stiffness: float = 2.0e4   # N/m
    contact_damping: float = 200.0     # N s/m, resists approach only
    friction: float = 0.8
    stiction_vel: float = 0.05         # m/s, Coulomb regularization speed
    lock_wheels: bool = False          # force wheel torque to zero (freewheel)

    # per-env overrides, shape (N,); None means the nominal value everywhere
    mass_scale: np.ndarray | None = None
    friction_env: np.ndarray | None = None
    kp_scale: np.ndarray | None = None
    kd_scale: np.ndarray | None = None
    motor_scale: np.ndarray | None = None
    com_shift: np.ndarray | None = None      # m, base COM x offset
    payload: np.ndarray | None = None        # kg, added at the base COM
    action_delay: np.ndarray | None = None   # control steps, consumed by the env layer
    terrain_index: np.ndarray | None = None  # row into the terrain table

    def validate(self) -> None:
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        if self.contact_stiffness <= 0:
            raise ValueError(f"contact stiffness must be > 0, got {self.contact_stiffness}")
        if self.friction < 0:
            raise ValueError(f"friction must be >= 0, got {self.friction}")

    def _arr(self, value, n, default):
        if value is None:
            return np.full(n, default, dtype=np.float64)
        return np.asarray(value, dtype=np.float64)


@dataclass
class ActuatorCommand:
    """Leg joint position targets (rad) and wheel velocity targets (rad/s)."""

    leg_pos: np.ndarray     # (N, n_leg_joints)
    wheel_vel: np.ndarray   # (N, n_wheels)


@dataclass
class SimState:
    q: np.ndarray              # (N, 3 + J)
    v: np.ndarray              # (N, 3 + J)
    time: np.ndarray           # (N,)
    applied_torques: np.ndarray    # (N, J), last substep
    contact_normal: np.ndarray     # (N, C)
    contact_tangent: np.ndarray    # (N, C)
    contact_slip: np.ndarray       # (N, C)
    contact_active: np.ndarray     # (N, C) bool
    fault: np.ndarray              # (N,) bool
    energy: np.ndarray             # (N,) J, accumulated positive mechanical work
    wheel_energy: np.ndarray       # (N,) J, wheel-joint share of the above

    @property
    def n_envs(self) -> int:
        return self.q.shape[0]

    def copy(self) -> "SimState":
        return SimState(*(getattr(self, f).copy() for f in _STATE_FIELDS))

    def select(self, idx) -> "SimState":
        return SimState(*(getattr(self, f)[idx].copy() for f in _STATE_FIELDS))

    def set_at(self, idx, other: "SimState") -> None:
        for f in _STATE_FIELDS:
            getattr(self, f)[idx] = getattr(other, f)


_STATE_FIELDS = (
    "q", "v", "time", "applied_torques", "contact_normal", "contact_tangent",
    "contact_slip", "contact_active", "fault", "energy", "wheel_energy",
)

CONTACT_WHEEL = 0
CONTACT_KNEE = 1
CONTACT_BASE = 2


class _FK:
    __slots__ = ("phi", "om", "ca", "sa", "apos", "avel", "aacc", "pcom", "vcom", "acom")


class PlanarSim:
    """Simulator bound to one morphology; all methods are batched over envs."""

    def __init__(self, morphology: Morphology, profile: bool = False):
        require_valid(morphology)
        if morphology.dims_only:
            raise MorphologyError(
                f"morphology {morphology.name!r} is dimension bookkeeping only "
                "and cannot be simulated"
            )
        self.m = morphology
        self.profile = profile
        self.timers: dict[str, float] = {
            "fk": 0.0, "assemble": 0.0, "contact": 0.0, "solve": 0.0, "integrate": 0.0,
        }

        J = morphology.n_joints
        self.n_joints = J
        self.n_dof = 3 + J
        self.n_bodies = 1 + J

        # per-joint structure; body b = joint (b-1), body 0 = base
        self.parent_body = np.array(
            [j.parent_link + 1 for j in morphology.joints], dtype=np.int64
        )
        self.axis_sign = np.array([j.axis_sign for j in morphology.joints])
        self.joint_offset = np.array([j.axis_offset for j in morphology.joints])
        # body-local COM offsets; row 0 (base) is overridden by the COM-shift array
        self.com_local = np.zeros((self.n_bodies, 2))
        for b in range(1, self.n_bodies):
            self.com_local[b] = (0.0, -morphology.links[b - 1].com_offset)
        self.body_mass = np.array(
            [morphology.base_mass] + [lk.mass for lk in morphology.links]
        )
        self.body_inertia = np.array(
            [morphology.base_inertia] + [lk.inertia for lk in morphology.links]
        )
        self.is_wheel = np.array(
            [j.kind == KIND_WHEEL for j in morphology.joints], dtype=bool
        )
        self.kp = np.array([j.kp for j in morphology.joints])
        self.kd = np.array([j.kd for j in morphology.joints])
        self.torque_limit = np.array([j.torque_limit for j in morphology.joints])
        self.velocity_limit = np.array([j.velocity_limit for j in morphology.joints])
        self.q_ref = np.array([j.default_angle for j in morphology.joints])
        lo, hi = [], []
        for j in morphology.joints:
            if j.position_limits is None:
                lo.append(-np.inf)
                hi.append(np.inf)
            else:
                lo.append(j.position_limits[0])
                hi.append(j.position_limits[1])
        self.pos_lo = np.array(lo)
        self.pos_hi = np.array(hi)

        # ancestor mask: AM[b, k] = dof k moves body b
        AM = np.zeros((self.n_bodies, self.n_dof), dtype=bool)
        AM[0, 0:3] = True
        for j in range(J):
            b = j + 1
            AM[b] = AM[self.parent_body[j]]
            AM[b, 3 + j] = True
        self.ancestor = AM
        self.ancestor_T = AM.T.astype(np.float64)  # (D, B)

        # revolute dof signs: pitch + joints; translation dofs carry sign 0
        self.dof_sign = np.concatenate(([0.0, 0.0, 1.0], self.axis_sign))

        # constant angular-rate Jacobian w[b, k] and its flattened outer products
        W = AM.astype(np.float64) * self.dof_sign[None, :]
        W[:, 0:2] = 0.0
        self.W = W
        self.W_outer = np.einsum("bk,bl->bkl", W, W).reshape(self.n_bodies, -1)

        # contact points: wheel rims, then knees (wheel-joint parent anchors), then base corners
        kinds, bodies, offsets = [], [], []
        for j in range(J):
            if self.is_wheel[j]:
                kinds.append(CONTACT_WHEEL)
                bodies.append(j + 1)
                offsets.append((0.0, 0.0))  # rim lowest point handled via radius shift
        for j in range(J):
            if self.is_wheel[j]:
                kinds.append(CONTACT_KNEE)
                bodies.append(int(self.parent_body[j]))
                offsets.append((0.0, 0.0))  # the parent body's anchor point
        for corner in morphology.base_corners:
            kinds.append(CONTACT_BASE)
            bodies.append(0)
            offsets.append(corner)
        self.contact_kind = np.array(kinds, dtype=np.int64)
        self.contact_body = np.array(bodies, dtype=np.int64)
        self.contact_offset = np.array(offsets) if offsets else np.zeros((0, 2))
        self.n_contacts = len(kinds)
        self.contact_is_wheel = self.contact_kind == CONTACT_WHEEL
        self.contact_wheel_joint = np.array(
            [b - 1 for b, k in zip(bodies, kinds) if k == CONTACT_WHEEL], dtype=np.int64
        )
        self.contact_mask_T = AM[self.contact_body].T.astype(np.float64)  # (D, C)

    # --- state construction ---------------------------------------------------

    def stand_joint_angles(self) -> np.ndarray:
        return self.q_ref.copy()

    def stand_base_height(self, joint_q: np.ndarray | None = None) -> float:
        """Base height above flat ground with the lowest contact point touching."""
        q = np.zeros((1, self.n_dof))
        q[0, 3:] = self.q_ref if joint_q is None else joint_q
        fk = self.forward_kinematics(q, np.zeros_like(q))
        cpos, _ = self._contact_points(fk)
        if self.n_contacts == 0:
            return 0.0
        return float(-cpos[0, :, 1].min())

    def make_state(self, n_envs: int, base_x: float = 0.0,
                   base_z: float | None = None) -> SimState:
        q = np.zeros((n_envs, self.n_dof))
        q[:, 3:] = self.q_ref
        q[:, 0] = base_x
        q[:, 1] = self.stand_base_height() if base_z is None else base_z
        return SimState(
            q=q,
            v=np.zeros((n_envs, self.n_dof)),
            time=np.zeros(n_envs),
            applied_torques=np.zeros((n_envs, self.n_joints)),
            contact_normal=np.zeros((n_envs, self.n_contacts)),
            contact_tangent=np.zeros((n_envs, self.n_contacts)),
            contact_slip=np.zeros((n_envs, self.n_contacts)),
            contact_active=np.zeros((n_envs, self.n_contacts), dtype=bool),
            fault=np.zeros(n_envs, dtype=bool),
            energy=np.zeros(n_envs),
            wheel_energy=np.zeros(n_envs),
        )

    # --- kinematics -----------------------------------------------------------

    def forward_kinematics(self, q: np.ndarray, v: np.ndarray,
                           com_shift: np.ndarray | None = None) -> _FK:
        """Chain sweep: world angles, anchor/COM positions, velocities, and the
        zero-joint-acceleration bias accelerations of every body."""
        N = q.shape[0]
        nb = self.n_bodies
        fk = _FK()
        phi = np.empty((N, nb))
        om = np.empty((N, nb))
        phi[:, 0] = q[:, 2]
        om[:, 0] = v[:, 2]
        sg = self.axis_sign
        pb_idx = self.parent_body
        for j in range(self.n_joints):
            pb = pb_idx[j]
            phi[:, j + 1] = phi[:, pb] + sg[j] * q[:, 3 + j]
            om[:, j + 1] = om[:, pb] + sg[j] * v[:, 3 + j]
        ca = np.cos(phi)
        sa = np.sin(phi)

        apos = np.empty((N, nb, 2))
        avel = np.empty((N, nb, 2))
        aacc = np.empty((N, nb, 2))
        apos[:, 0] = q[:, 0:2]
        avel[:, 0] = v[:, 0:2]
        aacc[:, 0] = 0.0
        for j in range(self.n_joints):
            pb = pb_idx[j]
            b = j + 1
            ox, oz = self.joint_offset[j]
            rx = ca[:, pb] * ox - sa[:, pb] * oz
            rz = sa[:, pb] * ox + ca[:, pb] * oz
            wpb = om[:, pb]
            apos[:, b, 0] = apos[:, pb, 0] + rx
            apos[:, b, 1] = apos[:, pb, 1] + rz
            avel[:, b, 0] = avel[:, pb, 0] - wpb * rz
            avel[:, b, 1] = avel[:, pb, 1] + wpb * rx
            w2 = wpb * wpb
            aacc[:, b, 0] = aacc[:, pb, 0] - w2 * rx
            aacc[:, b, 1] = aacc[:, pb, 1] - w2 * rz

        # COM kinematics, vectorized over bodies
        cx0 = self.com_local[:, 0].copy()
        cz0 = self.com_local[:, 1]
        cx = ca * cx0[None, :] - sa * cz0[None, :]
        cz = sa * cx0[None, :] + ca * cz0[None, :]
        if com_shift is not None:
            cx[:, 0] = ca[:, 0] * com_shift
            cz[:, 0] = sa[:, 0] * com_shift
        pcom = apos.copy()
        pcom[:, :, 0] += cx
        pcom[:, :, 1] += cz
        vcom = avel.copy()
        vcom[:, :, 0] -= om * cz
        vcom[:, :, 1] += om * cx
        om2 = om * om
        acom = aacc.copy()
        acom[:, :, 0] -= om2 * cx
        acom[:, :, 1] -= om2 * cz

        fk.phi, fk.om, fk.ca, fk.sa = phi, om, ca, sa
        fk.apos, fk.avel, fk.aacc = apos, avel, aacc
        fk.pcom, fk.vcom, fk.acom = pcom, vcom, acom
        return fk

    def _dof_anchors(self, fk: _FK):
        """World anchor point of every revolute dof: (N, n_dof, 2)."""
        N = fk.apos.shape[0]
        A = np.zeros((N, self.n_dof, 2))
        A[:, 2] = fk.apos[:, 0]
        A[:, 3:] = fk.apos[:, 1:]
        return A

    def _point_jacobian(self, px, py, A, mask_T):
        """Per-dof velocity contribution at world points, in (N, D, P) layout.

        px, py: (N, P); A: (N, D, 2); mask_T: (D, P) floats.
        """
        sg = self.dof_sign[None, :, None]
        UX = sg * (A[:, :, 1][:, :, None] - py[:, None, :])
        UY = sg * (px[:, None, :] - A[:, :, 0][:, :, None])
        UX[:, 0, :] = 1.0
        UY[:, 0, :] = 0.0
        UX[:, 1, :] = 0.0
        UY[:, 1, :] = 1.0
        UX *= mask_T[None, :, :]
        UY *= mask_T[None, :, :]
        return UX, UY

    # --- dynamics -------------------------------------------------------------

    def _masses(self, params: SimParams, n: int):
        scale = params._arr(params.mass_scale, n, 1.0)
        payload = params._arr(params.payload, n, 0.0)
        m = self.body_mass[None, :] * scale[:, None]
        m[:, 0] += payload
        jc = self.body_inertia[None, :] * scale[:, None]
        return m, jc

    def _joint_torques(self, q, v, cmd: ActuatorCommand | None, params: SimParams, n: int):
        """Actuator torques plus the per-joint damping coefficient (for the
        linearly-implicit velocity update); saturated actuators contribute no
        damping Jacobian."""
        if cmd is None:
            return np.zeros((n, self.n_joints)), np.zeros((n, self.n_joints))
        kp_s = params._arr(params.kp_scale, n, 1.0)[:, None]
        kd_s = params._arr(params.kd_scale, n, 1.0)[:, None]
        mot = params._arr(params.motor_scale, n, 1.0)[:, None]
        qj = q[:, 3:]
        vj = v[:, 3:]
        tau = np.empty((n, self.n_joints))
        kd_eff = self.kd[None, :] * kd_s
        leg = ~self.is_wheel
        if leg.any():
            tau[:, leg] = (self.kp[leg] * kp_s) * (cmd.leg_pos - qj[:, leg]) \
                - kd_eff[:, leg] * vj[:, leg]
        if self.is_wheel.any():
            tau[:, self.is_wheel] = kd_eff[:, self.is_wheel] * (
                cmd.wheel_vel - vj[:, self.is_wheel]
            )
        unsaturated = np.abs(tau) < self.torque_limit
        np.clip(tau, -self.torque_limit, self.torque_limit, out=tau)
        tau *= mot
        damping = kd_eff * mot * unsaturated
        if params.lock_wheels and self.is_wheel.any():
            tau[:, self.is_wheel] = 0.0
            damping[:, self.is_wheel] = 0.0
        return tau, damping

    def _contact_points(self, fk: _FK):
        """World positions and material-point velocities of every contact point."""
        cb = self.contact_body
        ox = self.contact_offset[:, 0]
        oz = self.contact_offset[:, 1]
        ca = fk.ca[:, cb]
        sa = fk.sa[:, cb]
        om = fk.om[:, cb]
        cx = ca * ox[None, :] - sa * oz[None, :]
        cz = sa * ox[None, :] + ca * oz[None, :]
        cpos = np.empty((fk.phi.shape[0], self.n_contacts, 2))
        cvel = np.empty_like(cpos)
        cpos[:, :, 0] = fk.apos[:, cb, 0] + cx
        cpos[:, :, 1] = fk.apos[:, cb, 1] + cz
        cvel[:, :, 0] = fk.avel[:, cb, 0] - om * cz
        cvel[:, :, 1] = fk.avel[:, cb, 1] + om * cx
        if self.contact_is_wheel.any():
            w = self.contact_is_wheel
            r = self.m.wheel_radius
            cpos[:, w, 1] -= r
            cvel[:, w, 0] += om[:, w] * r
        return cpos, cvel

    def _contact_forces(self, cpos, cvel, params: SimParams, table: TerrainTable,
                        tidx, mu):
        """Penalty normal force + regularized Coulomb friction per contact point.

        Also returns the damping derivatives d(-f_t)/d(v_t) and d(-f_n)/d(v_z)
        used for the linearly-implicit velocity update.
        """
        px = cpos[:, :, 0]
        pz = cpos[:, :, 1]
        h, s = table.height_and_slope(tidx[:, None], px)
        pen = h - pz
        active = pen > 0.0
        approaching = (s * cvel[:, :, 0] - cvel[:, :, 1]) > 0.0
        approach = np.where(approaching, s * cvel[:, :, 0] - cvel[:, :, 1], 0.0)
        fn = params.contact_stiffness * pen + params.contact_damping * approach
        fn = np.where(active, np.maximum(fn, 0.0), 0.0)
        vt = cvel[:, :, 0]
        ft = -mu[:, None] * fn * np.clip(vt / params.stiction_vel, -1.0, 1.0)
        # velocity stiffness of the force law (positive semidefinite contributions);
        # the spring term k_n * dt makes the penetration spring semi-implicit,
        # which keeps impacts dissipative instead of energy-injecting
        d_t = np.where(
            active & (np.abs(vt) < params.stiction_vel),
            mu[:, None] * fn / params.stiction_vel,
            0.0,
        )
        d_n = np.where(active & approaching, params.contact_damping, 0.0) \
            + np.where(active, params.contact_stiffness * params.dt, 0.0)
        return fn, ft, vt, active, d_t, d_n

    def _assemble_mass_matrix(self, fk: _FK, A, m_arr, jc_arr, n):
        UX, UY = self._point_jacobian(
            fk.pcom[:, :, 0], fk.pcom[:, :, 1], A, self.ancestor_T
        )
        Ufold = np.concatenate([UX, UY], axis=2)            # (N, D, 2B)
        m2 = np.concatenate([m_arr, m_arr], axis=1)[:, None, :]
        M = Ufold @ (Ufold * m2).transpose(0, 2, 1)
        # einsum keeps the reduction order independent of the batch size
        M += np.einsum("nb,bx->nx", jc_arr, self.W_outer).reshape(
            n, self.n_dof, self.n_dof
        )
        return M, UX, UY

    def step(self, state: SimState, cmd: ActuatorCommand | None, params: SimParams,
             terrain) -> SimState:
        """Advance one control period (substeps x dt), mutating `state` in place."""
        table = terrain if isinstance(terrain, TerrainTable) else TerrainTable([terrain])
        n = state.n_envs
        tidx = np.zeros(n, dtype=np.int64) if params.terrain_index is None \
            else np.asarray(params.terrain_index, dtype=np.int64)
        mu = params._arr(params.friction_env, n, params.friction)
        com_shift = params.com_shift if params.com_shift is not None else None
        m_arr, jc_arr = self._masses(params, n)
        dt = params.dt
        prof = self.profile
        q, v = state.q, state.v

        for _ in range(params.substeps):
            t0 = _time.perf_counter() if prof else 0.0
            fk = self.forward_kinematics(q, v, com_shift)
            A = self._dof_anchors(fk)
            if prof:
                t1 = _time.perf_counter()
                self.timers["fk"] += t1 - t0
                t0 = t1

            M, UX, UY = self._assemble_mass_matrix(fk, A, m_arr, jc_arr, n)

            # bias: gravity + velocity-product terms through the same Jacobians
            tau, joint_damp = self._joint_torques(q, v, cmd, params, n)
            wx = m_arr * fk.acom[:, :, 0]
            wy = m_arr * (fk.acom[:, :, 1] + params.gravity)
            rhs = -np.einsum("ndb,nb->nd", UX, wx)
            rhs -= np.einsum("ndb,nb->nd", UY, wy)
            rhs[:, 3:] += tau
            # implicit actuator damping: stiff wheel servos stay stable at dt
            jj = np.arange(3, self.n_dof)
            M[:, jj, jj] += dt * joint_damp
            if prof:
                t1 = _time.perf_counter()
                self.timers["assemble"] += t1 - t0
                t0 = t1

            if self.n_contacts:
                cpos, cvel = self._contact_points(fk)
                fn, ft, vt, active, d_t, d_n = self._contact_forces(
                    cpos, cvel, params, table, tidx, mu
                )
                CX, CY = self._point_jacobian(
                    cpos[:, :, 0], cpos[:, :, 1], A, self.contact_mask_T
                )
                rhs += np.einsum("ndc,nc->nd", CX, ft)
                rhs += np.einsum("ndc,nc->nd", CY, fn)
                # implicit contact damping: fold the (PSD) velocity stiffness of
                # friction and normal damping into the system matrix
                Cfold = np.concatenate([CX, CY], axis=2)          # (N, D, 2C)
                dfold = np.concatenate([d_t, d_n], axis=1)[:, None, :] * dt
                M += (Cfold * dfold) @ Cfold.transpose(0, 2, 1)
                state.contact_normal[:] = fn
                state.contact_tangent[:] = ft
                state.contact_slip[:] = np.where(active, np.abs(vt), 0.0)
                state.contact_active[:] = active
            if prof:
                t1 = _time.perf_counter()
                self.timers["contact"] += t1 - t0
                t0 = t1

            try:
                acc = np.linalg.solve(M, rhs[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise MorphologyError(
                    f"singular mass matrix for morphology {self.m.name!r}; "
                    "the morphology is inconsistent"
                ) from exc
            if prof:
                t1 = _time.perf_counter()
                self.timers["solve"] += t1 - t0
                t0 = t1

            # positive mechanical work, accumulated before the velocity update
            pj = tau * v[:, 3:]
            np.maximum(pj, 0.0, out=pj)
            state.energy += pj.sum(axis=1) * dt
            if self.is_wheel.any():
                state.wheel_energy += pj[:, self.is_wheel].sum(axis=1) * dt

            v += acc * dt
            q += v * dt
            state.time += dt
            state.applied_torques[:] = tau
            if prof:
                self.timers["integrate"] += _time.perf_counter() - t0

        bad = ~(np.isfinite(q).all(axis=1) & np.isfinite(v).all(axis=1))
        if bad.any():
            state.fault |= bad
        return state

    # --- observables ----------------------------------------------------------

    def body_velocity(self, state: SimState):
        """Base linear velocity in the base frame (3-vec) and angular velocity (3-vec)."""
        pitch = state.q[:, 2]
        c = np.cos(pitch)
        s = np.sin(pitch)
        vx = state.v[:, 0]
        vz = state.v[:, 1]
        lin = np.zeros((state.n_envs, 3))
        lin[:, 0] = c * vx + s * vz
        lin[:, 2] = -s * vx + c * vz
        ang = np.zeros((state.n_envs, 3))
        ang[:, 1] = state.v[:, 2]
        return lin, ang

    def projected_gravity(self, state: SimState) -> np.ndarray:
        """Unit world-gravity direction expressed in the base frame."""
        pitch = state.q[:, 2]
        g = np.zeros((state.n_envs, 3))
        g[:, 0] = -np.sin(pitch)
        g[:, 2] = -np.cos(pitch)
        return g

    def mechanical_power(self, state: SimState) -> np.ndarray:
        """Sum over joints of max(torque * joint velocity, 0), Watts."""
        p = state.applied_torques * state.v[:, 3:]
        return np.maximum(p, 0.0).sum(axis=1)

    # --- energy bookkeeping (verification/debug surface) -----------------------

    def kinetic_energy(self, state: SimState, params: SimParams) -> np.ndarray:
        n = state.n_envs
        m_arr, jc_arr = self._masses(params, n)
        fk = self.forward_kinematics(state.q, state.v, params.com_shift)
        ke = 0.5 * (m_arr * (fk.vcom ** 2).sum(axis=2)).sum(axis=1)
        ke += 0.5 * (jc_arr * fk.om ** 2).sum(axis=1)
        return ke

    def potential_energy(self, state: SimState, params: SimParams) -> np.ndarray:
        n = state.n_envs
        m_arr, _ = self._masses(params, n)
        fk = self.forward_kinematics(state.q, state.v, params.com_shift)
        return params.gravity * (m_arr * fk.pcom[:, :, 1]).sum(axis=1)

    def contact_spring_energy(self, state: SimState, params: SimParams,
                              terrain) -> np.ndarray:
        table = terrain if isinstance(terrain, TerrainTable) else TerrainTable([terrain])
        n = state.n_envs
        tidx = np.zeros(n, dtype=np.int64) if params.terrain_index is None \
            else np.asarray(params.terrain_index, dtype=np.int64)
        fk = self.forward_kinematics(state.q, state.v, params.com_shift)
        if self.n_contacts == 0:
            return np.zeros(n)
        cpos, _ = self._contact_points(fk)
        h = table.height(tidx[:, None], cpos[:, :, 0])
        pen = np.maximum(h - cpos[:, :, 1], 0.0)
        return 0.5 * params.contact_stiffness * (pen ** 2).sum(axis=1)

    def total_energy(self, state: SimState, params: SimParams, terrain) -> np.ndarray:
        return (
            self.kinetic_energy(state, params)
            + self.potential_energy(state, params)
            + self.contact_spring_energy(state, params, terrain)
        )

    def mass_matrix(self, state: SimState, params: SimParams) -> np.ndarray:
        """Dense M(q) per env, exposed for verification."""
        n = state.n_envs
        m_arr, jc_arr = self._masses(params, n)
        fk = self.forward_kinematics(state.q, state.v, params.com_shift)
        A = self._dof_anchors(fk)
        M, _, _ = self._assemble_mass_matrix(fk, A, m_arr, jc_arr, n)
        return M

    def reset_timers(self) -> None:
        for k in self.timers:
            self.timers[k] = 0.0
