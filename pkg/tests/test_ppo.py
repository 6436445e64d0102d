import numpy as np
import pytest

from wheelleg.nn import PolicyParams, Tensor
from wheelleg.nn.models import (
    actor_forward_np,
    gaussian_log_prob_np,
    prpn_forward_np,
)
from wheelleg.ppo import (
    Adam,
    NonFiniteLossError,
    PpoConfig,
    PpoLearner,
    RolloutBuffer,
    compute_gae,
    normalize_advantages,
    ppo_losses,
)


def discounted_returns_bruteforce(rewards, dones, bootstrap, gamma):
    """Reward-to-go by forward enumeration, the independent oracle."""
    T, N = rewards.shape
    out = np.zeros((T, N))
    for n in range(N):
        for t in range(T):
            acc = 0.0
            disc = 1.0
            for k in range(t, T):
                acc += disc * rewards[k, n]
                if dones[k, n]:
                    break
                disc *= gamma
            else:
                acc += disc * bootstrap[n]  # disc is already gamma^(T-t)
            out[t, n] = acc
    return out


def test_gae_hand_example():
    rewards = np.array([[1.0], [1.0], [1.0]])
    values = np.zeros((3, 1))
    dones = np.zeros((3, 1), dtype=bool)
    adv, ret = compute_gae(rewards, values, dones, np.zeros(1), gamma=0.5, lam=0.5)
    assert np.allclose(adv[:, 0], [1.3125, 1.25, 1.0])
    assert np.allclose(ret, adv + values)


def test_gae_lambda_one_equals_bruteforce():
    rng = np.random.default_rng(0)
    for _ in range(100):
        T = int(rng.integers(1, 9))
        N = int(rng.integers(1, 5))
        rewards = rng.normal(0, 1, (T, N))
        dones = rng.random((T, N)) < 0.2
        bootstrap = rng.normal(0, 1, N)
        values = np.zeros((T, N))
        adv, _ = compute_gae(rewards, values, dones, bootstrap, gamma=0.97, lam=1.0)
        want = discounted_returns_bruteforce(rewards, dones, bootstrap, 0.97)
        assert np.abs(adv - want).max() < 1e-10


def test_gae_done_blocks_future_information():
    rng = np.random.default_rng(1)
    T, N = 6, 3
    rewards = rng.normal(0, 1, (T, N))
    values = rng.normal(0, 1, (T, N))
    dones = np.zeros((T, N), dtype=bool)
    dones[2, 1] = True
    adv_a, _ = compute_gae(rewards, values, dones, np.zeros(N), 0.99, 0.95)
    mutated = rewards.copy()
    mutated[3:, 1] += 100.0
    adv_b, _ = compute_gae(mutated, values, dones, np.zeros(N), 0.99, 0.95)
    assert np.allclose(adv_a[: 3, 1], adv_b[: 3, 1])
    assert not np.allclose(adv_a[3:, 1], adv_b[3:, 1])


def test_gae_shape_errors():
    with pytest.raises(ValueError):
        compute_gae(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros((3, 2), bool),
                    np.zeros(2), 0.99, 0.95)
    with pytest.raises(ValueError):
        compute_gae(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 2), bool),
                    np.zeros(3), 0.99, 0.95)


def test_advantage_normalization_stats():
    rng = np.random.default_rng(2)
    adv = rng.normal(3.0, 7.0, (50, 8))
    out = normalize_advantages(adv)
    assert abs(out.mean()) < 1e-6
    assert abs(out.std() - 1.0) < 1e-6


def small_setup(seed=0):
    pp = PolicyParams(obs_dim=4, priv_dim=3, act_dim=2, history_len=2,
                      latent_dim=2, seed=seed, dtype=np.float32)
    return pp


def make_minibatch(pp, n=32, seed=0, ratio_one=False, perfect_vhat=False):
    rng = np.random.default_rng(seed)
    hist = rng.normal(0, 1, (n, pp.history_len * pp.obs_dim)).astype(np.float32)
    obs = rng.normal(0, 1, (n, pp.obs_dim)).astype(np.float32)
    priv = rng.normal(0, 1, (n, pp.priv_dim)).astype(np.float32)
    vhat, z = prpn_forward_np(pp, hist)
    mean = actor_forward_np(pp, obs, vhat, z)
    actions = (mean + 0.3 * rng.normal(0, 1, mean.shape)).astype(np.float32)
    logp = gaussian_log_prob_np(mean, pp.log_std.data, actions).astype(np.float32)
    if not ratio_one:
        logp = logp + rng.normal(0, 0.1, logp.shape).astype(np.float32)
    v_true = vhat if perfect_vhat else rng.normal(0, 1, (n, 3)).astype(np.float32)
    return {
        "obs": obs, "hist": hist, "priv": priv, "actions": actions,
        "logp": logp,
        "advantages": rng.normal(0, 1, n).astype(np.float32),
        "returns": rng.normal(0, 1, n).astype(np.float32),
        "v_true": v_true,
    }


def test_ppo_losses_identity_ratio():
    pp = small_setup()
    mb = make_minibatch(pp, ratio_one=True)
    _, parts = ppo_losses(pp, mb, PpoConfig())
    assert parts["approx_kl"] == pytest.approx(0.0, abs=1e-6)
    assert parts["policy_loss"] == pytest.approx(-mb["advantages"].mean(), rel=1e-4)


def test_clip_arithmetic():
    # ratio 1.5 with positive advantage clips the surrogate at 1.2
    ratio = Tensor(np.array([1.5], dtype=np.float64))
    adv = 1.0
    clipped = ratio.clip(0.8, 1.2)
    surrogate = min(float(ratio.data * adv), float(clipped.data * adv))
    assert surrogate == pytest.approx(1.2)


def test_clipped_surrogate_never_exceeds_unclipped_objective():
    pp = small_setup()
    cfg = PpoConfig()
    rng = np.random.default_rng(3)
    mb = make_minibatch(pp, n=64, seed=3)
    vhat, z = prpn_forward_np(pp, mb["hist"])
    mean = actor_forward_np(pp, mb["obs"], vhat, z)
    logp_new = gaussian_log_prob_np(mean, pp.log_std.data, mb["actions"])
    ratio = np.exp(logp_new - mb["logp"])
    unclipped = ratio * mb["advantages"]
    clipped = np.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps) * mb["advantages"]
    assert np.all(np.minimum(unclipped, clipped) <= unclipped + 1e-9)


def test_perfect_velocity_prediction_zero_aux():
    pp = small_setup()
    mb = make_minibatch(pp, perfect_vhat=True)
    _, parts = ppo_losses(pp, mb, PpoConfig())
    assert parts["aux_loss"] == pytest.approx(0.0, abs=1e-10)


def test_non_finite_loss_raises_with_stats():
    pp = small_setup()
    mb = make_minibatch(pp)
    mb["advantages"][0] = np.inf
    with pytest.raises(NonFiniteLossError) as err:
        ppo_losses(pp, mb, PpoConfig())
    assert "adv range" in str(err.value)


def full_buffer(pp, T=8, N=4, seed=0, zero_signal=False):
    rng = np.random.default_rng(seed)
    buf = RolloutBuffer(T, N, pp.obs_dim, pp.history_len * pp.obs_dim,
                        pp.priv_dim, pp.act_dim)
    for t in range(T):
        obs = rng.normal(0, 1, (N, pp.obs_dim)).astype(np.float32)
        hist = rng.normal(0, 1, (N, pp.history_len * pp.obs_dim)).astype(np.float32)
        priv = rng.normal(0, 1, (N, pp.priv_dim)).astype(np.float32)
        vhat, z = prpn_forward_np(pp, hist)
        mean = actor_forward_np(pp, obs, vhat, z)
        act = mean + 0.2 * rng.normal(0, 1, mean.shape).astype(np.float32)
        logp = gaussian_log_prob_np(mean, pp.log_std.data, act)
        reward = np.zeros(N) if zero_signal else rng.normal(0, 1, N)
        v_true = vhat if zero_signal else rng.normal(0, 1, (N, 3))
        buf.add(obs, hist, priv, act, logp, reward, np.zeros(N),
                np.zeros(N, dtype=bool), v_true)
    return buf


def test_update_requires_full_buffer():
    pp = small_setup()
    buf = RolloutBuffer(4, 2, pp.obs_dim, pp.history_len * pp.obs_dim,
                        pp.priv_dim, pp.act_dim)
    learner = PpoLearner(pp, PpoConfig())
    with pytest.raises(ValueError):
        learner.update(buf, np.zeros(2), np.random.default_rng(0))


def test_zero_signal_update_moves_only_value_head():
    """Zero advantages, perfect velocity targets and zero entropy bonus leave
    the policy path untouched; only the critic trains."""
    pp = small_setup(seed=4)
    cfg = PpoConfig(entropy_coef=0.0, epochs=2, minibatches=2)
    buf = full_buffer(pp, zero_signal=True, seed=4)
    before = {name: t.data.copy() for name, t in pp.parameters()}
    learner = PpoLearner(pp, cfg)
    learner.update(buf, np.zeros(4), np.random.default_rng(0))
    for name, t in pp.parameters():
        if name.startswith("critic"):
            assert not np.array_equal(before[name], t.data)
        else:
            assert np.array_equal(before[name], t.data), name


def test_update_deterministic():
    def run():
        pp = small_setup(seed=5)
        buf = full_buffer(pp, seed=5)
        learner = PpoLearner(pp, PpoConfig(epochs=2, minibatches=2))
        stats = learner.update(buf, np.zeros(4), np.random.default_rng(7))
        return stats, pp.flatten()

    s1, v1 = run()
    s2, v2 = run()
    assert s1 == s2
    assert np.array_equal(v1, v2)


def test_learning_rate_stays_clamped():
    pp = small_setup(seed=6)
    cfg = PpoConfig(epochs=3, minibatches=2, kl_target=1e-9)  # forces lr growth
    learner = PpoLearner(pp, cfg)
    buf = full_buffer(pp, seed=6)
    learner.update(buf, np.zeros(4), np.random.default_rng(0))
    assert cfg.lr_min <= learner.lr <= cfg.lr_max
    cfg2 = PpoConfig(epochs=3, minibatches=2, kl_target=1e9)  # forces lr shrink
    learner2 = PpoLearner(small_setup(seed=6), cfg2)
    learner2.update(full_buffer(pp, seed=6), np.zeros(4), np.random.default_rng(0))
    assert cfg2.lr_min <= learner2.lr <= cfg2.lr_max


def test_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(gamma=0.0).validate()
    with pytest.raises(ValueError):
        PpoConfig(lam=1.5).validate()
    with pytest.raises(ValueError):
        PpoConfig(epochs=0).validate()


def test_adam_matches_reference_update():
    # one step with g, lr: p -= lr * mhat / (sqrt(shat) + eps)
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    g = np.array([0.5, -1.5])
    opt = Adam()
    opt.step([("p", p)], [g], lr=0.1)
    mhat = (0.1 * g) / (1 - 0.9)
    shat = (0.001 * g * g) / (1 - 0.999)
    want = np.array([1.0, -2.0]) - 0.1 * mhat / (np.sqrt(shat) + 1e-8)
    assert np.allclose(p.data, want)


def bandit_buffer(pp, target, n, rng):
    """One-step episodes: fixed observation, reward = -|a - target|^2."""
    obs = np.zeros((n, pp.obs_dim), dtype=np.float32)
    hist = np.zeros((n, pp.history_len * pp.obs_dim), dtype=np.float32)
    priv = np.zeros((n, pp.priv_dim), dtype=np.float32)
    buf = RolloutBuffer(1, n, pp.obs_dim, pp.history_len * pp.obs_dim,
                        pp.priv_dim, pp.act_dim)
    vhat, z = prpn_forward_np(pp, hist)
    mean = actor_forward_np(pp, obs, vhat, z)
    std = np.exp(pp.log_std.data)[None, :]
    act = mean + std * rng.standard_normal(mean.shape).astype(np.float32)
    logp = gaussian_log_prob_np(mean, pp.log_std.data, act)
    reward = -np.sum((act - target) ** 2, axis=1)
    buf.add(obs, hist, priv, act, logp, reward, np.zeros(n),
            np.ones(n, dtype=bool), np.zeros((n, 3)))
    return buf, float(reward.mean())


def run_bandit(seed, updates=300, n=64):
    pp = PolicyParams(obs_dim=4, priv_dim=3, act_dim=2, history_len=2,
                      latent_dim=2, seed=seed, dtype=np.float32)
    target = np.array([0.6, -0.4], dtype=np.float32)
    cfg = PpoConfig(epochs=4, minibatches=2, entropy_coef=0.002)
    learner = PpoLearner(pp, cfg)
    rng = np.random.default_rng(seed)
    returns = []
    for k in range(updates):
        buf, mean_ret = bandit_buffer(pp, target, n, rng)
        returns.append(mean_ret)
        learner.update(buf, np.zeros(n), rng)
    vhat, z = prpn_forward_np(pp, np.zeros((1, pp.history_len * pp.obs_dim),
                                           dtype=np.float32))
    mean = actor_forward_np(pp, np.zeros((1, pp.obs_dim), dtype=np.float32), vhat, z)
    return np.abs(mean[0] - target).max(), returns


def test_bandit_converges_to_target():
    err, _ = run_bandit(seed=0)
    assert err < 0.05


def test_bandit_monotone_sanity_three_seeds():
    for seed in (0, 1, 2):
        _, returns = run_bandit(seed, updates=300)
        assert np.mean(returns[-5:]) > np.mean(returns[:5])
