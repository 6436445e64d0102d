import numpy as np
import pytest

from wheelleg.nn import (
    ObservationHistory,
    PolicyParams,
    Tensor,
    actor_forward,
    actor_forward_np,
    critic_forward,
    critic_forward_np,
    gaussian_entropy,
    gaussian_log_prob,
    prpn_forward,
    prpn_forward_np,
)
from wheelleg.nn.autodiff import concat, minimum, tensor
from wheelleg.nn.checkpoint import (
    CheckpointError,
    load_checkpoint,
    params_from_checkpoint,
    save_checkpoint,
)
from wheelleg.nn.models import gaussian_log_prob_np, gaussian_sample


def small_params(seed=0, dtype=np.float64):
    return PolicyParams(obs_dim=5, priv_dim=4, act_dim=3, history_len=4,
                        latent_dim=2, seed=seed, dtype=dtype)


def composite_loss(pp, data, detach_vhat=True):
    vhat, z = prpn_forward(pp, Tensor(data["hist"]))
    mean = actor_forward(pp, Tensor(data["obs"]), vhat, z, detach_vhat=detach_vhat)
    logp = gaussian_log_prob(mean, pp.log_std, data["actions"])
    values = critic_forward(pp, Tensor(data["obs"]), Tensor(data["priv"]))
    ratio = (logp - Tensor(data["logp_old"])).exp()
    policy = (ratio * Tensor(data["adv"])).mean() * (-1.0)
    vloss = (values - Tensor(data["returns"])).square().mean()
    aux = (vhat - Tensor(data["v_true"])).square().mean()
    return policy + 0.5 * vloss + aux - 0.01 * gaussian_entropy(pp.log_std)


def random_batch(rng, n=6):
    return {
        "hist": rng.normal(0, 1, (n, 20)),
        "obs": rng.normal(0, 1, (n, 5)),
        "priv": rng.normal(0, 1, (n, 4)),
        "actions": rng.normal(0, 1, (n, 3)),
        "logp_old": rng.normal(0, 1, n),
        "adv": rng.normal(0, 1, n),
        "returns": rng.normal(0, 1, (n, 1)),
        "v_true": rng.normal(0, 1, (n, 3)),
    }


# --- forward semantics -----------------------------------------------------------

def test_zero_head_gives_zero_outputs():
    pp = small_params()
    pp.prpn.head.W.data[:] = 0.0
    pp.prpn.head.b.data[:] = 0.0
    hist = np.zeros((3, 20))
    vhat, z = prpn_forward_np(pp, hist)
    assert np.all(vhat == 0.0)
    assert np.all(z == 0.0)


def test_identical_rows_identical_outputs():
    pp = small_params()
    rng = np.random.default_rng(0)
    row = rng.normal(0, 1, 20)
    hist = np.tile(row, (4, 1))
    vhat, z = prpn_forward_np(pp, hist)
    assert np.allclose(vhat, vhat[0])
    assert np.allclose(z, z[0])
    obs = np.tile(rng.normal(0, 1, 5), (4, 1))
    priv = np.tile(rng.normal(0, 1, 4), (4, 1))
    vals = critic_forward_np(pp, obs, priv)
    assert np.allclose(vals, vals[0])


def test_prpn_lipschitz_smoke():
    pp = small_params()
    rng = np.random.default_rng(1)
    hist = rng.normal(0, 1, (1, 20))
    v0, z0 = prpn_forward_np(pp, hist)
    eps = 1e-4
    for k in (0, 7, 19):
        h2 = hist.copy()
        h2[0, k] += eps
        v1, z1 = prpn_forward_np(pp, h2)
        assert np.abs(v1 - v0).max() < 100 * eps
        assert np.abs(z1 - z0).max() < 100 * eps


def test_z_always_bounded():
    pp = small_params(dtype=np.float32)
    rng = np.random.default_rng(2)
    hist = rng.normal(0, 50, (64, 20)).astype(np.float32)
    _, z = prpn_forward_np(pp, hist)
    assert np.all(np.abs(z) <= 1.0)


def test_zero_actor_head_gives_zero_mean():
    pp = small_params()
    pp.actor.head.W.data[:] = 0.0
    pp.actor.head.b.data[:] = 0.0
    rng = np.random.default_rng(3)
    hist = rng.normal(0, 1, (2, 20))
    obs = rng.normal(0, 1, (2, 5))
    vhat, z = prpn_forward_np(pp, hist)
    assert np.all(actor_forward_np(pp, obs, vhat, z) == 0.0)


def test_log_std_init_value():
    pp = small_params()
    assert np.allclose(np.exp(pp.log_std.data), np.exp(-0.5))


def test_tape_matches_inference_path():
    pp = small_params()
    rng = np.random.default_rng(4)
    hist = rng.normal(0, 1, (5, 20))
    obs = rng.normal(0, 1, (5, 5))
    priv = rng.normal(0, 1, (5, 4))
    vhat_t, z_t = prpn_forward(pp, Tensor(hist))
    vhat_n, z_n = prpn_forward_np(pp, hist)
    assert np.allclose(vhat_t.data, vhat_n)
    assert np.allclose(z_t.data, z_n)
    mean_t = actor_forward(pp, Tensor(obs), vhat_t, z_t)
    assert np.allclose(mean_t.data, actor_forward_np(pp, obs, vhat_n, z_n))
    vals_t = critic_forward(pp, Tensor(obs), Tensor(priv))
    assert np.allclose(vals_t.data[:, 0], critic_forward_np(pp, obs, priv))


def test_log_prob_matches_direct_density():
    pp = small_params()
    rng = np.random.default_rng(5)
    mean = rng.normal(0, 1, (8, 3))
    actions = gaussian_sample(rng, mean, pp.log_std.data)
    lp = gaussian_log_prob_np(mean, pp.log_std.data, actions)
    # direct density evaluation, product of univariate normals
    std = np.exp(pp.log_std.data)
    direct = np.sum(
        -0.5 * ((actions - mean) / std) ** 2
        - np.log(std)
        - 0.5 * np.log(2 * np.pi),
        axis=1,
    )
    assert np.allclose(lp, direct, atol=1e-12)
    lp_t = gaussian_log_prob(Tensor(mean), pp.log_std, actions)
    assert np.allclose(lp_t.data, direct, atol=1e-6)


def test_entropy_closed_form():
    pp = small_params()
    ent = gaussian_entropy(pp.log_std)
    d = 3
    expected = d * (-0.5) + 0.5 * d * (1 + np.log(2 * np.pi))
    assert float(ent.data) == pytest.approx(expected)


# --- gradients --------------------------------------------------------------------

def fd_check(pp, data, n_coords=10, h=1e-5, seed=0, detach_vhat=False):
    loss = composite_loss(pp, data, detach_vhat=detach_vhat)
    loss.backward()
    named = pp.parameters()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_coords):
        _, t = named[rng.integers(len(named))]
        idx = tuple(rng.integers(s) for s in t.data.shape)
        keep = t.data[idx]
        t.data[idx] = keep + h
        up = float(composite_loss(pp, data, detach_vhat=detach_vhat).data)
        t.data[idx] = keep - h
        dn = float(composite_loss(pp, data, detach_vhat=detach_vhat).data)
        t.data[idx] = keep
        fd = (up - dn) / (2 * h)
        an = t.grad[idx]
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
    return worst


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    for seed in (0, 1, 2):
        pp = small_params(seed=seed)
        data = random_batch(rng)
        assert fd_check(pp, data, n_coords=10, seed=seed) < 1e-4


def test_hand_computed_gradient_1x1():
    # loss = sum((x w)^2) over rows -> d/dw = sum(2 w x^2)
    w = tensor([[0.7]], requires_grad=True, dtype=np.float64)
    x = Tensor(np.array([[1.0], [2.0], [3.0]]))
    loss = (x @ w).square().sum()
    loss.backward()
    expected = sum(2 * 0.7 * xi ** 2 for xi in (1.0, 2.0, 3.0))
    assert w.grad[0, 0] == pytest.approx(expected)


def test_unused_parameters_get_zero_gradient():
    pp = small_params()
    rng = np.random.default_rng(8)
    data = random_batch(rng)
    # loss without the critic
    vhat, z = prpn_forward(pp, Tensor(data["hist"]))
    mean = actor_forward(pp, Tensor(data["obs"]), vhat, z)
    loss = mean.square().mean() + (vhat - Tensor(data["v_true"])).square().mean()
    loss.backward()
    for name, t in pp.parameters():
        if name.startswith("critic"):
            assert t.grad is None  # read as exactly zero downstream
        elif name.startswith("actor") and name.endswith("W"):
            assert t.grad is not None and np.any(t.grad != 0.0)


def test_velocity_head_blocked_from_policy_loss():
    """The actor consumes the velocity estimate detached: a pure policy loss
    must leave the velocity head columns untouched while the latent columns
    still receive gradient."""
    pp = small_params(seed=9)
    rng = np.random.default_rng(9)
    data = random_batch(rng)
    vhat, z = prpn_forward(pp, Tensor(data["hist"]))
    mean = actor_forward(pp, Tensor(data["obs"]), vhat, z)
    logp = gaussian_log_prob(mean, pp.log_std, data["actions"])
    policy = (logp * Tensor(data["adv"])).mean() * (-1.0)
    policy.backward()
    head = pp.prpn.head.W.grad
    assert np.all(head[:, :3] == 0.0)
    assert np.any(head[:, 3:] != 0.0)


def test_backward_requires_scalar():
    x = tensor([[1.0, 2.0]], requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_minimum_and_clip_gradients():
    a = tensor([1.0, 5.0], requires_grad=True, dtype=np.float64)
    b = tensor([2.0, 2.0], requires_grad=True, dtype=np.float64)
    minimum(a, b).sum().backward()
    assert np.array_equal(a.grad, [1.0, 0.0])
    assert np.array_equal(b.grad, [0.0, 1.0])
    c = tensor([0.5, 3.0], requires_grad=True, dtype=np.float64)
    c.clip(0.0, 1.0).sum().backward()
    assert np.array_equal(c.grad, [1.0, 0.0])


def test_concat_routes_gradients():
    a = tensor(np.ones((2, 2)), requires_grad=True, dtype=np.float64)
    b = tensor(np.ones((2, 3)), requires_grad=True, dtype=np.float64)
    out = concat([a, b], axis=1)
    (out * np.arange(10.0).reshape(2, 5)).sum().backward()
    assert np.array_equal(a.grad, [[0, 1], [5, 6]])
    assert np.array_equal(b.grad, [[2, 3, 4], [7, 8, 9]])


# --- history buffer -----------------------------------------------------------------

def test_history_reset_fills_with_first_observation():
    h = ObservationHistory(2, 3, 2)
    h.reset_envs([0, 1], np.array([[1.0, 2.0], [3.0, 4.0]]))
    w = h.window()
    assert np.allclose(w[0], [1, 2, 1, 2, 1, 2])
    assert np.allclose(w[1], [3, 4, 3, 4, 3, 4])


def test_history_window_ordering_oldest_to_newest():
    h = ObservationHistory(1, 3, 1)
    h.reset_envs([0], np.array([[0.0]]))
    for k in (1.0, 2.0, 3.0, 4.0):
        h.push(np.array([[k]]))
    assert np.allclose(h.window()[0], [2, 3, 4])


def test_history_no_leakage_across_reset():
    h = ObservationHistory(2, 4, 1)
    h.reset_envs([0, 1], np.array([[5.0], [6.0]]))
    h.push(np.array([[7.0], [8.0]]))
    h.reset_envs([1], np.array([[0.5]]))
    w = h.window()
    assert 8.0 not in w[1]
    assert np.allclose(w[1], 0.5)
    assert 7.0 in w[0]


# --- checkpoints --------------------------------------------------------------------

def test_flatten_roundtrip_bit_identical():
    pp = small_params(dtype=np.float32)
    vec = pp.flatten()
    pp2 = small_params(seed=99, dtype=np.float32)
    pp2.load_flat(vec)
    assert np.array_equal(pp2.flatten(), vec)


def test_manifest_accounts_for_every_parameter():
    pp = small_params()
    man = pp.manifest()
    total = sum(int(np.prod(e["shape"])) for e in man)
    assert total == pp.n_params()
    assert man[-1]["offset"] + int(np.prod(man[-1]["shape"])) == total


def test_checkpoint_roundtrip(tmp_path):
    pp = small_params(dtype=np.float32)
    stem = str(tmp_path / "ck")
    save_checkpoint(stem, pp, "planar-ref", extra={"note": 1})
    manifest, vec = load_checkpoint(stem)
    assert manifest["morphology"] == "planar-ref"
    assert np.array_equal(vec, pp.flatten())
    pp2, man2 = params_from_checkpoint(stem)
    assert np.array_equal(pp2.flatten(), pp.flatten())


def test_truncated_checkpoint_raises(tmp_path):
    pp = small_params(dtype=np.float32)
    stem = str(tmp_path / "ck")
    save_checkpoint(stem, pp, "planar-ref")
    payload = open(stem + ".bin", "rb").read()
    with open(stem + ".bin", "wb") as fh:
        fh.write(payload[: len(payload) // 2])
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(stem)
    assert "expected" in str(err.value)


def test_corrupt_manifest_raises(tmp_path):
    pp = small_params(dtype=np.float32)
    stem = str(tmp_path / "ck")
    save_checkpoint(stem, pp, "planar-ref")
    with open(stem + ".json", "w") as fh:
        fh.write("{not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(stem)


def test_missing_checkpoint_raises(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / "nope"))
