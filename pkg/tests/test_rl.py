import math

import numpy as np
import pytest

from animat.errors import SchemaError, ValidationError
from animat.rl import (Adam, MlpNet, ReplayBuffer, SacConfig, SacLearner,
                       flip_action, grad_check, load_checkpoint,
                       save_checkpoint)

SMALL = SacConfig(hidden=(8, 8))


def small_learner(seed=0, obs_dim=3, n_actions=4):
    return SacLearner(obs_dim, n_actions, SMALL, seed=seed)


def random_batch(learner, rng, batch=16):
    return (rng.normal(size=(batch, learner.obs_dim)),
            rng.integers(learner.n_actions, size=batch),
            rng.normal(size=batch),
            rng.normal(size=(batch, learner.obs_dim)),
            (rng.random(batch) < 0.2).astype(float))


# -- networks ------------------------------------------------------------

def test_mlp_zero_params():
    net = MlpNet((3, 4, 2), np.random.default_rng(0))
    for w in net.weights:
        w[...] = 0.0
    assert np.all(net.forward(np.ones((2, 3))) == 0.0)


def test_mlp_identity_layer():
    net = MlpNet((3, 3), np.random.default_rng(0))
    net.weights[0][...] = np.eye(3)
    net.biases[0][...] = 0.0
    x = np.array([[0.5, -1.0, 2.0]])
    assert np.array_equal(net.forward(x), x)  # final layer is linear


def test_mlp_matches_hand_arithmetic():
    net = MlpNet((4, 3, 2), np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=(5, 4))
    h = np.maximum(x @ net.weights[0] + net.biases[0], 0.0)
    expected = h @ net.weights[1] + net.biases[1]
    assert np.allclose(net.forward(x), expected, atol=1e-12)


def test_mlp_rejects_wrong_width():
    net = MlpNet((4, 3, 2), np.random.default_rng(1))
    with pytest.raises(ValidationError):
        net.forward(np.ones((1, 5)))


# -- Adam / polyak -------------------------------------------------------

def test_adam_first_step_size():
    # with m_hat = g and v_hat = g^2, the first step is lr * sign(g)
    p = np.array([1.0, -2.0])
    opt = Adam([p], lr=0.1, eps=0.0)
    opt.step([np.array([3.0, -0.5])])
    assert np.allclose(p, [1.0 - 0.1, -2.0 + 0.1])


def test_polyak_exact():
    learner = small_learner()
    before = [t.copy() for t in learner.q1_target.parameters()]
    online = learner.q1.parameters()
    for o in online:
        o += 1.0
    learner._polyak(learner.q1_target, learner.q1)
    tau = learner.config.polyak
    for t, b, o in zip(learner.q1_target.parameters(), before, online):
        assert np.allclose(t, (1 - tau) * b + tau * o)


# -- replay buffer -------------------------------------------------------

def test_buffer_fifo_eviction():
    buf = ReplayBuffer(3, 1)
    for i in range(5):
        buf.push([float(i)], i, float(i), [float(i)], False)
    assert len(buf) == 3
    # slots now hold transitions 3, 4, 2
    assert sorted(buf.actions.tolist()) == [2, 3, 4]


def test_buffer_sample_shapes():
    buf = ReplayBuffer(10, 2)
    for i in range(4):
        buf.push([i, i], i, 0.0, [i, i], i % 2)
    obs, act, rew, nxt, done = buf.sample(8, np.random.default_rng(0))
    assert obs.shape == (8, 2) and act.shape == (8,)
    assert set(act.tolist()) <= {0, 1, 2, 3}


# -- action selection ----------------------------------------------------

def test_greedy_argmax():
    learner = small_learner()
    for w in learner.policy.weights:
        w[...] = 0.0
    learner.policy.biases[-1][...] = [0.0, 10.0, 0.0, 0.0]
    a = learner.select_action(np.zeros(3), "greedy", np.random.default_rng(0))
    assert a == 1


def test_explore_uniform_frequencies():
    learner = small_learner()
    for w in learner.policy.weights:
        w[...] = 0.0  # uniform logits
    rng = np.random.default_rng(3)
    n = 100_000
    acts = np.bincount([learner.select_action(np.zeros(3), "explore", rng)
                        for _ in range(n)], minlength=4)
    assert np.all(np.abs(acts / n - 0.25) < 0.01)


def test_action_stream_deterministic():
    learner = small_learner()
    obs = np.ones(3)
    a = [learner.select_action(obs, "explore", np.random.default_rng(7))
         for _ in range(30)]
    b = [learner.select_action(obs, "explore", np.random.default_rng(7))
         for _ in range(30)]
    assert a == b


def test_select_action_validation():
    learner = small_learner()
    with pytest.raises(ValidationError):
        learner.select_action(np.zeros(2), "greedy", np.random.default_rng(0))
    with pytest.raises(ValidationError):
        learner.select_action(np.zeros(3), "softmax", np.random.default_rng(0))


def test_policy_probs_normalized():
    learner = small_learner(seed=5)
    probs = learner.policy_probs(np.random.default_rng(1).normal(size=(6, 3)))
    assert probs.shape == (6, 4)
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert np.all(probs >= 0)


def test_uniform_policy_entropy():
    learner = SacLearner(3, 5, SMALL, seed=0)
    for w in learner.policy.weights:
        w[...] = 0.0
    rng = np.random.default_rng(0)
    obs = rng.normal(size=(8, 3))
    _, _, entropy = learner.policy_loss(obs, np.zeros((8, 5)))
    assert entropy == pytest.approx(math.log(5))


# -- losses and gradients ------------------------------------------------

def test_critic_fixed_point():
    learner = small_learner()
    for net in (learner.q1, learner.q1_target, learner.q2_target):
        for p in net.parameters():
            p[...] = 0.0
    obs = np.zeros((4, 3))
    actions = np.zeros(4, dtype=int)
    targets = learner.critic_targets(np.zeros(4), obs, np.ones(4))  # done
    loss, _ = learner.critic_loss(learner.q1, obs, actions, targets)
    assert loss == 0.0


def test_grad_check_quadratic_exact():
    # loss = mean(out^2) through a linear net has near-exact gradients
    net = MlpNet((3, 2), np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(6, 3))

    def loss_fn():
        return float(np.mean(net.forward(x) ** 2))

    from animat import kernels
    acts = net.forward_acts(x)
    d_out = 2.0 * acts[-1] / acts[-1].size
    d_w, d_b = kernels.mlp_backward(acts, net.weights, d_out)
    assert grad_check(loss_fn, net.parameters(), d_w + d_b) < 1e-6


def test_grad_check_critic_loss():
    learner = small_learner(seed=2)
    rng = np.random.default_rng(3)
    obs, actions, rewards, next_obs, dones = random_batch(learner, rng, 8)
    targets = learner.critic_targets(rewards, next_obs, dones)

    def loss_fn():
        loss, _ = learner.critic_loss(learner.q1, obs, actions, targets)
        return loss

    _, grads = learner.critic_loss(learner.q1, obs, actions, targets)
    assert grad_check(loss_fn, learner.q1.parameters(), grads) < 1e-4


def test_grad_check_policy_loss():
    learner = small_learner(seed=4)
    rng = np.random.default_rng(5)
    obs = rng.normal(size=(8, 3))
    q_min = rng.normal(size=(8, 4))

    def loss_fn():
        loss, _, _ = learner.policy_loss(obs, q_min)
        return loss

    _, grads, _ = learner.policy_loss(obs, q_min)
    assert grad_check(loss_fn, learner.policy.parameters(), grads) < 1e-4


def test_grad_check_alpha_loss():
    learner = small_learner(seed=6)
    entropy = 0.37

    def loss_fn():
        return learner.alpha * (entropy - learner.target_entropy)

    _, (grad,) = learner.alpha_loss(entropy)
    assert grad_check(loss_fn, [learner.log_alpha], [grad]) < 1e-6


# -- update dynamics -----------------------------------------------------

def test_update_runs_and_reports():
    learner = small_learner(seed=1)
    rng = np.random.default_rng(2)
    m = learner.update(batch=random_batch(learner, rng, 16))
    assert set(m) == {"q1_loss", "q2_loss", "policy_loss", "entropy", "alpha"}
    assert m["alpha"] > 0
    assert 0 <= m["entropy"] <= math.log(4) + 1e-9


def test_update_targets_track_online():
    learner = small_learner(seed=3)
    rng = np.random.default_rng(4)
    before = [p.copy() for p in learner.q1_target.parameters()]
    for _ in range(5):
        learner.update(batch=random_batch(learner, rng, 16))
    moved = any(not np.array_equal(b, p)
                for b, p in zip(before, learner.q1_target.parameters()))
    assert moved


def test_update_deterministic_given_seed():
    def run():
        learner = small_learner(seed=8)
        rng = np.random.default_rng(8)
        for _ in range(10):
            learner.update(batch=random_batch(learner, rng, 16))
        return learner.policy.weights[0].copy()

    assert np.array_equal(run(), run())


def test_temperature_moves_toward_target_entropy():
    learner = small_learner(seed=9)
    rng = np.random.default_rng(9)
    # entropy starts near ln(4), well above the 0.5*ln(4) target, so the
    # temperature should fall from its initial value of 1
    for _ in range(300):
        learner.update(batch=random_batch(learner, rng, 16))
    assert learner.alpha < 1.0


# -- action flips --------------------------------------------------------

def test_flip_action_identity_and_total():
    rng = np.random.default_rng(0)
    assert flip_action(2, 0.0, rng) == 2
    for _ in range(200):
        assert flip_action(2, 1.0, rng, n_actions=5) != 2


def test_flip_action_rate():
    rng = np.random.default_rng(1)
    n = 100_000
    flips = sum(flip_action(1, 0.2, rng, n_actions=5) != 1 for _ in range(n))
    assert abs(flips / n - 0.2) < 0.01


def test_flip_action_validation():
    with pytest.raises(ValidationError):
        flip_action(0, 1.5, np.random.default_rng(0))


# -- checkpoints ---------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    learner = small_learner(seed=11)
    rng = np.random.default_rng(11)
    for _ in range(3):
        learner.update(batch=random_batch(learner, rng, 16))
    learner.step_count = 123
    path = tmp_path / "ck.npz"
    save_checkpoint(learner, path)
    back = load_checkpoint(path)
    assert back.step_count == 123
    assert back.config == learner.config
    assert np.array_equal(back.log_alpha, learner.log_alpha)
    for a, b in zip(back.policy.parameters() + back.q1_target.parameters(),
                    learner.policy.parameters() + learner.q1_target.parameters()):
        assert np.array_equal(a, b)
    obs = np.ones(3)
    assert back.select_action(obs, "greedy", np.random.default_rng(0)) == \
        learner.select_action(obs, "greedy", np.random.default_rng(0))


def test_checkpoint_version_guard(tmp_path):
    learner = small_learner()
    path = tmp_path / "ck.npz"
    save_checkpoint(learner, path)
    import json

    data = dict(np.load(path))
    meta = json.loads(str(data["meta"]))
    meta["version"] = 99
    data["meta"] = json.dumps(meta)
    np.savez(path, **data)
    with pytest.raises(SchemaError):
        load_checkpoint(path)
