"""Discrete-action soft actor-critic with small dense networks.

The action space is a handful of discrete choices (stimulus frequencies or
direct commands), so the policy is categorical and the soft value targets
are exact expectations over it.  All math is float64; the matrix kernels
come from :mod:`animat.kernels` (compiled extension or NumPy fallback).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import SchemaError, TrainingDiverged, ValidationError

CHECKPOINT_VERSION = 1


class MlpNet:
    """Fully connected ReLU network (linear final layer)."""

    def __init__(self, sizes, rng: np.random.Generator):
        self.sizes = tuple(sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, (fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.sizes[0]:
            raise ValidationError(
                f"input width {x.shape[-1]} != first layer size {self.sizes[0]}")
        return kernels.mlp_forward(np.atleast_2d(x), self.weights, self.biases)[-1]

    def forward_acts(self, x: np.ndarray):
        return kernels.mlp_forward(np.atleast_2d(x), self.weights, self.biases)

    def parameters(self):
        return self.weights + self.biases

    def copy_from(self, other: "MlpNet"):
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src


class Adam:
    """Adam over a fixed list of parameter arrays."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            kernels.adam_step(p.ravel(), np.ascontiguousarray(g, dtype=float).ravel(),
                              m.ravel(), v.ravel(), self.t,
                              self.lr, self.beta1, self.beta2, self.eps)


class ReplayBuffer:
    """Fixed-capacity FIFO transition store."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, obs, action, reward, next_obs, done):
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(self._size, size=batch_size)
        return (self.obs[idx], self.actions[idx], self.rewards[idx],
                self.next_obs[idx], self.dones[idx])


@dataclass(frozen=True)
class SacConfig:
    hidden: tuple = (64, 64)
    lr: float = 3e-4
    discount: float = 0.99
    polyak: float = 0.005
    batch_size: int = 64
    warmup_steps: int = 1000
    capacity: int = 50000
    target_entropy_scale: float = 0.5  # target entropy = scale * ln(n_actions)
    update_every: int = 2

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


class SacLearner:
    """Categorical-policy SAC with twin critics and auto-tuned temperature."""

    def __init__(self, obs_dim: int, n_actions: int, config: SacConfig = SacConfig(),
                 seed: int = 0):
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        sizes = (obs_dim, *config.hidden, n_actions)
        self.policy = MlpNet(sizes, rng)
        self.q1 = MlpNet(sizes, rng)
        self.q2 = MlpNet(sizes, rng)
        self.q1_target = MlpNet(sizes, rng)
        self.q2_target = MlpNet(sizes, rng)
        self.q1_target.copy_from(self.q1)
        self.q2_target.copy_from(self.q2)
        self.log_alpha = np.zeros(1)
        self.target_entropy = config.target_entropy_scale * np.log(n_actions)
        self.opt_policy = Adam(self.policy.parameters(), config.lr)
        self.opt_q1 = Adam(self.q1.parameters(), config.lr)
        self.opt_q2 = Adam(self.q2.parameters(), config.lr)
        self.opt_alpha = Adam([self.log_alpha], config.lr)
        self.buffer = ReplayBuffer(config.capacity, obs_dim)
        self.step_count = 0
        self.use_fused = kernels.HAS_FUSED

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    # -- acting ---------------------------------------------------------

    def policy_probs(self, obs: np.ndarray) -> np.ndarray:
        logits = self.policy.forward(np.atleast_2d(obs))
        return np.exp(_log_softmax(logits))

    def select_action(self, obs, mode: str, rng: np.random.Generator) -> int:
        obs = np.ascontiguousarray(obs, dtype=float)
        if obs.shape[-1] != self.obs_dim:
            raise ValidationError(f"observation width {obs.shape[-1]} != {self.obs_dim}")
        if mode not in ("greedy", "explore"):
            raise ValidationError(f"unknown action mode {mode!r}")
        greedy = mode == "greedy"
        if self.use_fused:
            u = 0.0 if greedy else rng.random()
            return int(kernels.policy_act(obs, self.policy.weights,
                                          self.policy.biases, greedy, u))
        if greedy:
            return int(np.argmax(self.policy.forward(obs)[0]))
        probs = self.policy_probs(obs)[0]
        return int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum()))

    # -- losses (exposed separately so gradients can be finite-difference
    #    checked against each term) -------------------------------------

    def critic_targets(self, rewards, next_obs, dones) -> np.ndarray:
        logp = _log_softmax(self.policy.forward(next_obs))
        probs = np.exp(logp)
        q_min = np.minimum(self.q1_target.forward(next_obs),
                           self.q2_target.forward(next_obs))
        v_next = (probs * (q_min - self.alpha * logp)).sum(axis=1)
        return rewards + self.config.discount * (1.0 - dones) * v_next

    def critic_loss(self, qnet: MlpNet, obs, actions, targets):
        """Mean squared TD error plus analytic parameter gradients."""
        acts = qnet.forward_acts(obs)
        q = acts[-1]
        b = len(actions)
        taken = q[np.arange(b), actions]
        err = taken - targets
        loss = float(np.mean(err**2))
        d_q = np.zeros_like(q)
        d_q[np.arange(b), actions] = 2.0 * err / b
        d_w, d_b = kernels.mlp_backward(acts, qnet.weights, d_q)
        return loss, d_w + d_b

    def policy_loss(self, obs, q_min):
        """Expected soft objective: E_pi[alpha*log pi - Q] plus gradients."""
        acts = self.policy.forward_acts(obs)
        logp = _log_softmax(acts[-1])
        probs = np.exp(logp)
        g = self.alpha * logp - q_min
        loss = float(np.mean((probs * g).sum(axis=1)))
        inner = g + self.alpha
        d_logits = probs * (inner - (probs * inner).sum(axis=1, keepdims=True))
        d_logits /= len(obs)
        d_w, d_b = kernels.mlp_backward(acts, self.policy.weights, d_logits)
        entropy = float(np.mean(-(probs * logp).sum(axis=1)))
        return loss, d_w + d_b, entropy

    def alpha_loss(self, entropy: float):
        """Temperature objective alpha*(H - H_target), gradient w.r.t. log alpha."""
        loss = self.alpha * (entropy - self.target_entropy)
        grad = np.array([loss])  # d/dlog_alpha of alpha*(H-H*) = alpha*(H-H*)
        return float(loss), [grad]

    # -- training -------------------------------------------------------

    def update(self, batch=None, rng: np.random.Generator | None = None) -> dict:
        """One gradient step on critics, policy and temperature."""
        if batch is None:
            batch = self.buffer.sample(self.config.batch_size, rng)
        obs, actions, rewards, next_obs, dones = batch
        if self.use_fused:
            metrics = kernels.sac_update_fused(self, obs, actions, rewards,
                                               next_obs, dones)
            if not all(np.isfinite(v) for v in metrics.values()):
                raise TrainingDiverged(f"non-finite update metrics: {metrics}")
            return metrics
        targets = self.critic_targets(rewards, next_obs, dones)

        q1_loss, g1 = self.critic_loss(self.q1, obs, actions, targets)
        self.opt_q1.step(g1)
        q2_loss, g2 = self.critic_loss(self.q2, obs, actions, targets)
        self.opt_q2.step(g2)

        q_min = np.minimum(self.q1.forward(obs), self.q2.forward(obs))
        pi_loss, g_pi, entropy = self.policy_loss(obs, q_min)
        self.opt_policy.step(g_pi)

        a_loss, g_a = self.alpha_loss(entropy)
        self.opt_alpha.step(g_a)

        self._polyak(self.q1_target, self.q1)
        self._polyak(self.q2_target, self.q2)

        metrics = {"q1_loss": q1_loss, "q2_loss": q2_loss, "policy_loss": pi_loss,
                   "entropy": entropy, "alpha": self.alpha}
        if not all(np.isfinite(v) for v in metrics.values()):
            raise TrainingDiverged(f"non-finite update metrics: {metrics}")
        return metrics

    def _polyak(self, target: MlpNet, online: MlpNet):
        tau = self.config.polyak
        for t, o in zip(target.parameters(), online.parameters()):
            t[...] = (1.0 - tau) * t + tau * o


def flip_action(action: int, flip_prob: float, rng: np.random.Generator,
                n_actions: int = 5) -> int:
    """With probability ``flip_prob``, replace with a different random action."""
    if not 0 <= flip_prob <= 1:
        raise ValidationError("flip_prob must be a probability")
    if flip_prob > 0 and rng.random() < flip_prob:
        other = int(rng.integers(n_actions - 1))
        return other + (other >= action)
    return action


def grad_check(loss_fn, params, analytic_grads, h: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_fn`` must recompute the loss from the (perturbed in place)
    parameter arrays.
    """
    max_rel = 0.0
    for p, g in zip(params, analytic_grads):
        flat_p = p.ravel()
        flat_g = np.asarray(g, dtype=float).ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = loss_fn()
            flat_p[i] = orig - h
            down = loss_fn()
            flat_p[i] = orig
            fd = (up - down) / (2.0 * h)
            rel = abs(fd - flat_g[i]) / max(abs(fd) + abs(flat_g[i]), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel


# -- checkpoints --------------------------------------------------------


def save_checkpoint(learner: SacLearner, path):
    """Write a versioned binary checkpoint of every parameter array."""
    arrays = {"log_alpha": learner.log_alpha}
    for name, net in (("policy", learner.policy), ("q1", learner.q1),
                      ("q2", learner.q2), ("q1_target", learner.q1_target),
                      ("q2_target", learner.q2_target)):
        for i, w in enumerate(net.weights):
            arrays[f"{name}_w{i}"] = w
        for i, b in enumerate(net.biases):
            arrays[f"{name}_b{i}"] = b
    meta = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": learner.obs_dim,
        "n_actions": learner.n_actions,
        "config": asdict(learner.config),
        "config_hash": learner.config.digest(),
        "seed": learner.seed,
        "step_count": learner.step_count,
    }
    np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)


def load_checkpoint(path) -> SacLearner:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise SchemaError(f"unsupported checkpoint version {meta.get('version')!r}")
        cfg = SacConfig(**{k: tuple(v) if isinstance(v, list) else v
                           for k, v in meta["config"].items()})
        learner = SacLearner(meta["obs_dim"], meta["n_actions"], cfg, seed=meta["seed"])
        learner.step_count = meta["step_count"]
        learner.log_alpha[...] = data["log_alpha"]
        for name, net in (("policy", learner.policy), ("q1", learner.q1),
                          ("q2", learner.q2), ("q1_target", learner.q1_target),
                          ("q2_target", learner.q2_target)):
            for i in range(len(net.weights)):
                net.weights[i][...] = data[f"{name}_w{i}"]
                net.biases[i][...] = data[f"{name}_b{i}"]
    return learner
