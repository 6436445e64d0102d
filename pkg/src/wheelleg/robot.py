"""Robot morphology descriptions: links, joints, wheels, actuator limits.

Joint ordering is global and fixed: leg joints first, then wheels; within
each group front-before-rear, proximal-before-distal. Every vector layout
in the rest of the stack (joint positions, actions, torques) derives from
this ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import yaml

KIND_LEG = "revolute-leg"
KIND_WHEEL = "wheel"

BASE_LINK = -1  # parent-link id of joints mounted on the floating base


class MorphologyError(ValueError):
    """Raised when an operation requires a valid morphology and gets an invalid one."""


class DimensionError(ValueError):
    """Raised on vector length mismatches against the morphology layout."""


@dataclass(frozen=True)
class LinkSpec:
    name: str
    mass: float          # kg
    inertia: float       # kg m^2, planar scalar about the COM
    length: float        # m
    com_offset: float    # m along the link axis, from the joint anchor


@dataclass(frozen=True)
class JointSpec:
    name: str
    kind: str                          # KIND_LEG or KIND_WHEEL
    parent_link: int                   # link index, BASE_LINK for the base
    axis_offset: tuple[float, float]   # anchor point in the parent frame, m
    position_limits: tuple[float, float] | None  # rad, leg joints only
    velocity_limit: float              # rad/s
    torque_limit: float                # N m
    kp: float                          # N m/rad, leg joints only (0 for wheels)
    kd: float                          # N m s/rad (wheel entries act as the velocity servo gain)
    default_angle: float               # rad, stand-pose reference entry
    axis_sign: float = 1.0             # +1 CCW, -1 mirrored (rear legs, wheels)


@dataclass(frozen=True)
class Morphology:
    name: str
    links: tuple[LinkSpec, ...]
    joints: tuple[JointSpec, ...]
    base_mass: float                   # kg
    base_inertia: float                # kg m^2
    wheel_radius: float                # m
    n_leg_joints: int
    n_wheels: int
    action_scale_leg: float            # rad per unit action
    action_scale_wheel: float          # rad/s per unit action
    base_corners: tuple[tuple[float, float], ...] = ()
    dims_only: bool = False            # dimension bookkeeping only; not simulatable

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def action_dim(self) -> int:
        return len(self.joints)


def validate(m: Morphology) -> list[str]:
    """Return every invariant violation as a human-readable string; empty means valid."""
    bad: list[str] = []
    if m.base_mass <= 0:
        bad.append(f"base-mass must be > 0, got {m.base_mass}")
    if m.base_inertia <= 0:
        bad.append(f"base-inertia must be > 0, got {m.base_inertia}")
    if m.n_leg_joints + m.n_wheels != len(m.joints):
        bad.append(
            f"n-leg-joints ({m.n_leg_joints}) + n-wheels ({m.n_wheels}) "
            f"must equal joint count ({len(m.joints)})"
        )
    if m.n_wheels > 0 and m.wheel_radius <= 0:
        bad.append(f"wheel-radius must be > 0 when wheels are present, got {m.wheel_radius}")
    if len(m.links) != len(m.joints):
        bad.append(f"links ({len(m.links)}) and joints ({len(m.joints)}) must align one-to-one")

    # legs-first ordering
    kinds = [j.kind for j in m.joints]
    if kinds != [KIND_LEG] * m.n_leg_joints + [KIND_WHEEL] * m.n_wheels:
        bad.append("joint ordering must be all leg joints first, then all wheel joints")

    for i, j in enumerate(m.joints):
        if j.kind not in (KIND_LEG, KIND_WHEEL):
            bad.append(f"joint {j.name}: unknown kind {j.kind!r}")
        if j.torque_limit <= 0:
            bad.append(f"joint {j.name}: torque-limit must be > 0, got {j.torque_limit}")
        if j.velocity_limit <= 0:
            bad.append(f"joint {j.name}: velocity-limit must be > 0, got {j.velocity_limit}")
        if j.kd < 0:
            bad.append(f"joint {j.name}: kd must be >= 0, got {j.kd}")
        if j.axis_sign not in (1.0, -1.0):
            bad.append(f"joint {j.name}: axis-sign must be +1 or -1, got {j.axis_sign}")
        if j.kind == KIND_LEG:
            if j.kp <= 0:
                bad.append(f"joint {j.name}: kp must be > 0 for leg joints, got {j.kp}")
            if j.position_limits is None:
                bad.append(f"joint {j.name}: leg joints need position-limits")
            elif not j.position_limits[0] < j.position_limits[1]:
                bad.append(
                    f"joint {j.name}: position-limits must be increasing, got {j.position_limits}"
                )
        if j.kind == KIND_WHEEL and j.position_limits is not None:
            bad.append(f"joint {j.name}: wheel joints have unbounded position")
        if not (j.parent_link == BASE_LINK or 0 <= j.parent_link < i):
            bad.append(f"joint {j.name}: parent-link {j.parent_link} must precede the joint")

    for lk in m.links:
        if lk.mass <= 0:
            bad.append(f"link {lk.name}: mass must be > 0, got {lk.mass}")
        if lk.inertia <= 0:
            bad.append(f"link {lk.name}: inertia must be > 0, got {lk.inertia}")
        if lk.length < 0:
            bad.append(f"link {lk.name}: length must be >= 0, got {lk.length}")
    return bad


def require_valid(m: Morphology) -> None:
    bad = validate(m)
    if bad:
        raise MorphologyError(f"invalid morphology {m.name!r}: " + "; ".join(bad))


def observation_dim(m: Morphology) -> int:
    """Proprioceptive vector length: command(3) + ang-vel(3) + gravity(3) + q + qdot + prev-action."""
    require_valid(m)
    n = len(m.joints)
    return 3 + 3 + 3 + n + n + n


def action_split(m: Morphology, a):
    """Split an action vector (or batch, last axis) into (leg, wheel) halves."""
    import numpy as np

    a = np.asarray(a)
    if a.shape[-1] != m.n_joints:
        raise DimensionError(
            f"action length {a.shape[-1]} does not match morphology "
            f"{m.name!r} action dim {m.n_joints}"
        )
    return a[..., : m.n_leg_joints], a[..., m.n_leg_joints :]


# --- built-in morphologies ---------------------------------------------------

def planar_ref() -> Morphology:
    """Planar reference robot: floating base + 2 legs (hip, knee each) + 1 wheel per shank tip.

    Coordinates: x right, z up, pitch counter-clockwise. Links extend along
    their local (0, -length) axis at zero joint angle.
    """
    thigh = dict(mass=0.8, inertia=0.8 * 0.25**2 / 12.0, length=0.25, com_offset=0.125)
    shank = dict(mass=0.8, inertia=0.8 * 0.25**2 / 12.0, length=0.25, com_offset=0.125)
    wheel = dict(mass=0.4, inertia=0.5 * 0.4 * 0.07**2, length=0.0, com_offset=0.0)

    links = (
        LinkSpec("thigh_front", **thigh),
        LinkSpec("shank_front", **shank),
        LinkSpec("thigh_rear", **thigh),
        LinkSpec("shank_rear", **shank),
        LinkSpec("wheel_front", **wheel),
        LinkSpec("wheel_rear", **wheel),
    )

    def leg_joint(name, parent, anchor, default, sign):
        return JointSpec(
            name=name,
            kind=KIND_LEG,
            parent_link=parent,
            axis_offset=anchor,
            position_limits=(-2.8, 2.8),
            velocity_limit=20.0,
            torque_limit=23.0,
            kp=40.0,
            kd=1.0,
            default_angle=default,
            axis_sign=sign,
        )

    def wheel_joint(name, parent):
        # negative axis so positive wheel velocity rolls the robot toward +x
        return JointSpec(
            name=name,
            kind=KIND_WHEEL,
            parent_link=parent,
            axis_offset=(0.0, -0.25),
            position_limits=None,
            velocity_limit=40.0,
            torque_limit=8.0,
            kp=0.0,
            kd=2.0,  # wheel velocity servo gain
            default_angle=0.0,
            axis_sign=-1.0,
        )

    # rear leg mirrors the front via a negated axis, so q_ref is identical per leg
    joints = (
        leg_joint("hip_front", BASE_LINK, (0.2, 0.0), 0.8, 1.0),
        leg_joint("knee_front", 0, (0.0, -0.25), -1.5, 1.0),
        leg_joint("hip_rear", BASE_LINK, (-0.2, 0.0), 0.8, -1.0),
        leg_joint("knee_rear", 2, (0.0, -0.25), -1.5, -1.0),
        wheel_joint("wheel_front", 1),
        wheel_joint("wheel_rear", 3),
    )

    return Morphology(
        name="planar-ref",
        links=links,
        joints=joints,
        base_mass=10.0,
        base_inertia=0.25,
        wheel_radius=0.07,
        n_leg_joints=4,
        n_wheels=2,
        action_scale_leg=0.25,
        action_scale_wheel=5.0,
        base_corners=((0.25, -0.06), (-0.25, -0.06)),
    )


def go2w_dims() -> Morphology:
    """16-DoF wheeled quadruped descriptor, dimension bookkeeping only.

    12 leg + 4 wheel joints pin the 57-dim observation / 16-dim action layout.
    Physical parameters are structural placeholders; the planar simulator
    refuses to build from this morphology (dims_only).
    """
    links = []
    joints = []
    legs = ["FL", "FR", "RL", "RR"]
    for i, leg in enumerate(legs):
        for k, part in enumerate(("hip", "thigh", "calf")):
            links.append(LinkSpec(f"{leg}_{part}", 1.0, 0.01, 0.2, 0.1))
            parent = BASE_LINK if k == 0 else len(links) - 2
            joints.append(
                JointSpec(
                    name=f"{leg}_{part}_joint",
                    kind=KIND_LEG,
                    parent_link=parent,
                    axis_offset=(0.0, -0.2),
                    position_limits=(-2.8, 2.8),
                    velocity_limit=30.0,
                    torque_limit=1.0,
                    kp=1.0,
                    kd=0.1,
                    default_angle=0.0,
                )
            )
    for i, leg in enumerate(legs):
        links.append(LinkSpec(f"{leg}_wheel", 1.0, 0.01, 0.0, 0.0))
        joints.append(
            JointSpec(
                name=f"{leg}_wheel_joint",
                kind=KIND_WHEEL,
                parent_link=3 * i + 2,
                axis_offset=(0.0, -0.2),
                position_limits=None,
                velocity_limit=30.0,
                torque_limit=1.0,
                kp=0.0,
                kd=0.1,
                default_angle=0.0,
            )
        )
    return Morphology(
        name="go2w-dims",
        links=tuple(links),
        joints=tuple(joints),
        base_mass=1.0,
        base_inertia=0.01,
        wheel_radius=0.07,
        n_leg_joints=12,
        n_wheels=4,
        action_scale_leg=0.25,
        action_scale_wheel=5.0,
        dims_only=True,
    )


_BUILTINS = {"planar-ref": planar_ref, "go2w-dims": go2w_dims}


def get_morphology(name: str) -> Morphology:
    if name not in _BUILTINS:
        raise MorphologyError(
            f"unknown morphology {name!r}; built-ins: {sorted(_BUILTINS)}"
        )
    return _BUILTINS[name]()


# --- config-file loading ------------------------------------------------------

def morphology_from_dict(tree: dict) -> Morphology:
    """Build a morphology from a key-value tree (the YAML config representation)."""
    try:
        links = tuple(
            LinkSpec(
                name=lk["name"],
                mass=float(lk["mass"]),
                inertia=float(lk["inertia"]),
                length=float(lk["length"]),
                com_offset=float(lk["com-offset"]),
            )
            for lk in tree["links"]
        )
        joints = tuple(
            JointSpec(
                name=j["name"],
                kind=j["kind"],
                parent_link=int(j["parent-link"]),
                axis_offset=tuple(float(v) for v in j["axis-offset"]),
                position_limits=(
                    tuple(float(v) for v in j["position-limits"])
                    if j.get("position-limits") is not None
                    else None
                ),
                velocity_limit=float(j["velocity-limit"]),
                torque_limit=float(j["torque-limit"]),
                kp=float(j.get("kp", 0.0)),
                kd=float(j["kd"]),
                default_angle=float(j.get("default-angle", 0.0)),
                axis_sign=float(j.get("axis-sign", 1.0)),
            )
            for j in tree["joints"]
        )
        m = Morphology(
            name=tree.get("name", "custom"),
            links=links,
            joints=joints,
            base_mass=float(tree["base-mass"]),
            base_inertia=float(tree["base-inertia"]),
            wheel_radius=float(tree["wheel-radius"]),
            n_leg_joints=int(tree["n-leg-joints"]),
            n_wheels=int(tree["n-wheels"]),
            action_scale_leg=float(tree["action-scale-leg"]),
            action_scale_wheel=float(tree["action-scale-wheel"]),
            base_corners=tuple(
                tuple(float(v) for v in c) for c in tree.get("base-corners", ())
            ),
        )
    except (KeyError, TypeError) as exc:
        raise MorphologyError(f"malformed morphology config: {exc}") from exc
    return m


def morphology_to_dict(m: Morphology) -> dict:
    return {
        "name": m.name,
        "base-mass": m.base_mass,
        "base-inertia": m.base_inertia,
        "wheel-radius": m.wheel_radius,
        "n-leg-joints": m.n_leg_joints,
        "n-wheels": m.n_wheels,
        "action-scale-leg": m.action_scale_leg,
        "action-scale-wheel": m.action_scale_wheel,
        "base-corners": [list(c) for c in m.base_corners],
        "links": [
            {
                "name": lk.name,
                "mass": lk.mass,
                "inertia": lk.inertia,
                "length": lk.length,
                "com-offset": lk.com_offset,
            }
            for lk in m.links
        ],
        "joints": [
            {
                "name": j.name,
                "kind": j.kind,
                "parent-link": j.parent_link,
                "axis-offset": list(j.axis_offset),
                "position-limits": list(j.position_limits) if j.position_limits else None,
                "velocity-limit": j.velocity_limit,
                "torque-limit": j.torque_limit,
                "kp": j.kp,
                "kd": j.kd,
                "default-angle": j.default_angle,
                "axis-sign": j.axis_sign,
            }
            for j in m.joints
        ],
    }


def load_morphology(path: str) -> Morphology:
    """Load a morphology from a YAML file, or by built-in name."""
    if path in _BUILTINS:
        return get_morphology(path)
    with open(path) as fh:
        tree = yaml.safe_load(fh)
    return morphology_from_dict(tree)


def default_joint_angles(m: Morphology):
    import numpy as np

    return np.array([j.default_angle for j in m.joints], dtype=np.float64)


def total_mass(m: Morphology) -> float:
    return m.base_mass + sum(lk.mass for lk in m.links)
