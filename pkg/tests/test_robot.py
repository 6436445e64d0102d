import numpy as np
import pytest

from wheelleg.robot import (
    BASE_LINK,
    KIND_LEG,
    KIND_WHEEL,
    DimensionError,
    JointSpec,
    LinkSpec,
    Morphology,
    MorphologyError,
    action_split,
    get_morphology,
    go2w_dims,
    load_morphology,
    morphology_from_dict,
    morphology_to_dict,
    observation_dim,
    planar_ref,
    total_mass,
    validate,
)


def test_planar_ref_is_valid():
    assert validate(planar_ref()) == []


def test_go2w_dims_is_valid():
    assert validate(go2w_dims()) == []


def test_zero_wheel_radius_with_wheels_flagged():
    m = planar_ref()
    bad = Morphology(**{**m.__dict__, "wheel_radius": 0.0})
    violations = validate(bad)
    assert len(violations) == 1
    assert "wheel-radius" in violations[0]


def test_zero_kp_leg_joint_flagged():
    m = planar_ref()
    joints = list(m.joints)
    joints[0] = JointSpec(**{**joints[0].__dict__, "kp": 0.0})
    bad = Morphology(**{**m.__dict__, "joints": tuple(joints)})
    violations = validate(bad)
    assert len(violations) == 1
    assert "kp" in violations[0]


def test_wheel_with_position_limits_flagged():
    m = planar_ref()
    joints = list(m.joints)
    joints[-1] = JointSpec(**{**joints[-1].__dict__, "position_limits": (-1.0, 1.0)})
    bad = Morphology(**{**m.__dict__, "joints": tuple(joints)})
    assert any("unbounded" in v for v in validate(bad))


def test_wrong_joint_ordering_flagged():
    m = planar_ref()
    joints = list(m.joints)
    joints[0], joints[-1] = joints[-1], joints[0]
    bad = Morphology(**{**m.__dict__, "joints": tuple(joints)})
    assert any("ordering" in v for v in validate(bad))


def test_observation_dim_go2w_is_57():
    assert observation_dim(go2w_dims()) == 57


def test_observation_dim_planar_is_27():
    assert observation_dim(planar_ref()) == 27


def test_observation_dim_degenerate_zero_joints():
    m = Morphology(
        name="point", links=(), joints=(), base_mass=1.0, base_inertia=0.1,
        wheel_radius=0.0, n_leg_joints=0, n_wheels=0,
        action_scale_leg=1.0, action_scale_wheel=1.0,
    )
    assert observation_dim(m) == 9


def test_observation_dim_rejects_invalid():
    m = planar_ref()
    bad = Morphology(**{**m.__dict__, "base_mass": -1.0})
    with pytest.raises(MorphologyError):
        observation_dim(bad)


def test_action_split_go2w():
    m = go2w_dims()
    a = np.arange(16.0)
    leg, wheel = action_split(m, a)
    assert leg.shape == (12,)
    assert wheel.shape == (4,)
    assert np.array_equal(np.concatenate([leg, wheel]), a)


def test_action_split_planar():
    leg, wheel = action_split(planar_ref(), np.arange(6.0))
    assert leg.shape == (4,)
    assert wheel.shape == (2,)


def test_action_split_no_wheels():
    m = Morphology(
        name="legsonly",
        links=(LinkSpec("l0", 1.0, 0.01, 0.2, 0.1),),
        joints=(JointSpec("j0", KIND_LEG, BASE_LINK, (0.0, 0.0), (-1.0, 1.0),
                          10.0, 10.0, 10.0, 0.5, 0.0),),
        base_mass=1.0, base_inertia=0.1, wheel_radius=0.0,
        n_leg_joints=1, n_wheels=0, action_scale_leg=1.0, action_scale_wheel=1.0,
    )
    leg, wheel = action_split(m, np.array([0.3]))
    assert leg.shape == (1,)
    assert wheel.shape == (0,)


def test_action_split_roundtrip_random():
    m = planar_ref()
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.normal(size=m.n_joints)
        leg, wheel = action_split(m, a)
        assert np.array_equal(np.concatenate([leg, wheel]), a)


def test_action_split_length_mismatch():
    with pytest.raises(DimensionError):
        action_split(planar_ref(), np.zeros(7))


def test_go2w_action_dims():
    m = go2w_dims()
    assert m.n_leg_joints == 12
    assert m.n_wheels == 4
    assert m.action_dim == 16


def test_builtin_names():
    assert get_morphology("planar-ref").name == "planar-ref"
    assert get_morphology("go2w-dims").name == "go2w-dims"
    with pytest.raises(MorphologyError):
        get_morphology("nope")


def test_morphology_dict_roundtrip():
    m = planar_ref()
    m2 = morphology_from_dict(morphology_to_dict(m))
    assert validate(m2) == []
    assert m2.joints == m.joints
    assert m2.links == m.links
    assert observation_dim(m2) == observation_dim(m)


def test_morphology_yaml_load(tmp_path):
    import yaml

    path = tmp_path / "morph.yaml"
    path.write_text(yaml.safe_dump(morphology_to_dict(planar_ref())))
    m = load_morphology(str(path))
    assert validate(m) == []
    assert m.n_joints == 6


def test_total_mass():
    m = planar_ref()
    assert total_mass(m) == pytest.approx(10.0 + 4 * 0.8 + 2 * 0.4)


def test_dims_only_descriptor_has_no_dynamics():
    from wheelleg.sim import PlanarSim

    with pytest.raises(MorphologyError):
        PlanarSim(go2w_dims())
