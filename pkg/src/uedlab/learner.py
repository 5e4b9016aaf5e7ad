"""Actor-critic training: rollout collection, generalized advantage
estimation, and clipped-surrogate policy updates on the hand-rolled nets.

A PolicyHandle bundles one NetworkSpec with two parameter sets (policy and
value networks of identical topology).  Updates mutate the handle's
parameters in place and are bit-deterministic given (params, batch, config,
rng seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import Trajectory
from .designer import AdversaryObservation
from .gridworld import AgentObservation
from .nets import (
    NetworkSpec,
    ParamSet,
    RecurrentNet,
    StepFeatures,
    init_params,
    log_softmax,
    param_shapes,
    softmax,
)


class UpdateError(RuntimeError):
    """Raised when an update produces a non-finite loss; carries diagnostics."""


@dataclass
class OptimConfig:
    discount: float = 0.995
    learning_rate: float = 1e-4
    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    workers_per_batch: int = 30
    epochs_per_batch: int = 1
    minibatch_size: int = 0  # 0 = one minibatch per batch
    optimizer: str = "sgd"  # "sgd" or "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    normalize_advantages: bool = False
    max_grad_norm: float = 0.0  # 0 disables clipping

    def __post_init__(self):
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be > 0")
        if not 0.0 <= self.gae_lambda <= 1.0 or not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount and gae_lambda must lie in [0, 1]")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class PolicyHandle:
    spec: NetworkSpec
    pi_params: ParamSet
    vf_params: ParamSet
    # Adaptive-moment state, allocated lazily on first adam step.
    opt_state: dict = field(default_factory=dict)

    @classmethod
    def create(cls, spec: NetworkSpec, rng: np.random.Generator) -> "PolicyHandle":
        return cls(
            spec=spec,
            pi_params=init_params(spec, spec.n_actions, rng),
            vf_params=init_params(spec, 1, rng),
        )

    @property
    def params(self) -> np.ndarray:
        """The full flat parameter vector (policy net then value net)."""
        return np.concatenate([self.pi_params.flat, self.vf_params.flat])

    def set_params(self, flat: np.ndarray):
        n_pi = self.pi_params.size
        self.pi_params.flat[...] = flat[:n_pi]
        self.vf_params.flat[...] = flat[n_pi:]

    def policy_net(self) -> RecurrentNet:
        return RecurrentNet(self.spec, self.spec.n_actions, self.pi_params)

    def value_net(self) -> RecurrentNet:
        return RecurrentNet(self.spec, 1, self.vf_params)

    def clone(self) -> "PolicyHandle":
        return PolicyHandle(self.spec, self.pi_params.copy(), self.vf_params.copy())


def observation_features(obs) -> StepFeatures:
    if isinstance(obs, AgentObservation):
        return StepFeatures(image=obs.view, direction=obs.direction)
    if isinstance(obs, AdversaryObservation):
        return StepFeatures(image=obs.full_grid_view, timestep=float(obs.t),
                            latent=obs.z)
    raise TypeError(f"unsupported observation type {type(obs).__name__}")


def act(policy: PolicyHandle, observation, rng: np.random.Generator,
        state=None, greedy: bool = False):
    """Samples one action; returns (action, log_prob, value, next_state).

    ``state`` is the per-episode recurrent state pair (policy, value); pass
    None at the start of an episode.
    """
    pi_net = policy.policy_net()
    vf_net = policy.value_net()
    if state is None:
        state = (pi_net.initial_state(), vf_net.initial_state())
    feats = observation_features(observation)
    logits, h_pi, _ = pi_net.step(feats, state[0])
    value, h_vf, _ = vf_net.step(feats, state[1])
    log_probs = log_softmax(logits)
    if greedy:
        action = int(np.argmax(log_probs))
    else:
        action = int(rng.choice(len(log_probs), p=np.exp(log_probs)))
    return action, float(log_probs[action]), float(value[0]), (h_pi, h_vf)


class EpisodeActor:
    """Stateful per-episode wrapper around act(), for rollout loops."""

    def __init__(self, policy: PolicyHandle, rng: np.random.Generator,
                 greedy: bool = False):
        self.policy = policy
        self.rng = rng
        self.greedy = greedy
        self.state = None

    def reset(self):
        self.state = None

    def act(self, observation):
        action, log_prob, value, self.state = act(
            self.policy, observation, self.rng, self.state, self.greedy
        )
        return action, log_prob, value


def run_episode(policy: PolicyHandle, env, rng: np.random.Generator,
                greedy: bool = False) -> Trajectory:
    """Collects one full episode in a gridworld-style env (reset/step API)."""
    actor = EpisodeActor(policy, rng, greedy=greedy)
    obs = env.reset()
    traj = Trajectory(observations=[obs], actions=[], rewards=[])
    done = False
    while not done:
        action, log_prob, value = actor.act(obs)
        obs, reward, done = env.step(action)
        traj.observations.append(obs)
        traj.actions.append(action)
        traj.rewards.append(float(reward))
        traj.log_probs.append(log_prob)
        traj.values.append(value)
    traj.terminated = True
    return traj


def gae_advantages(rewards: Sequence[float], values: Sequence[float],
                   bootstrap_value: float, discount: float,
                   gae_lambda: float) -> np.ndarray:
    """advantage_t = sum_k (discount*lambda)^k * delta_{t+k} with
    delta_t = r_t + discount*V_{t+1} - V_t."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = len(rewards)
    advantages = np.zeros(n)
    next_value = bootstrap_value
    running = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + discount * next_value - values[t]
        running = delta + discount * gae_lambda * running
        advantages[t] = running
        next_value = values[t]
    return advantages


@dataclass
class RolloutBatch:
    """Episodes collected under a frozen behavior policy."""

    trajectories: list[Trajectory]

    def prepared(self, config: OptimConfig) -> list[dict]:
        """Per-episode arrays (features, actions, behavior log-probs,
        advantages, value targets) ready for the update step."""
        episodes = []
        for traj in self.trajectories:
            if traj.length == 0:
                continue
            advantages = gae_advantages(
                traj.rewards, traj.values, 0.0, config.discount, config.gae_lambda
            )
            episodes.append({
                "features": [observation_features(o)
                             for o in traj.observations[:-1]],
                "actions": np.asarray(traj.actions, dtype=np.int64),
                "log_probs_old": np.asarray(traj.log_probs, dtype=np.float64),
                "advantages": advantages,
                "value_targets": advantages + np.asarray(traj.values),
            })
        if not episodes:
            raise ValueError("cannot update from an empty batch")
        if config.normalize_advantages:
            all_adv = np.concatenate([ep["advantages"] for ep in episodes])
            mean, std = all_adv.mean(), all_adv.std()
            for ep in episodes:
                ep["advantages"] = (ep["advantages"] - mean) / max(std, 1e-8)
        return episodes


def loss_and_grads(policy: PolicyHandle, episodes: list[dict],
                   config: OptimConfig, compute_grads: bool = True):
    """Clipped-surrogate policy loss + value regression + entropy bonus over
    a list of prepared episodes, with gradients via full BPTT.

    Returns (stats, pi_grads, vf_grads); the gradient ParamSets are None when
    ``compute_grads`` is false.
    """
    pi_net = policy.policy_net()
    vf_net = policy.value_net()
    n_steps = sum(len(ep["actions"]) for ep in episodes)
    pi_grads = ParamSet(policy.pi_params.shapes) if compute_grads else None
    vf_grads = ParamSet(policy.vf_params.shapes) if compute_grads else None
    policy_loss = value_loss = entropy_sum = 0.0
    clip_lo, clip_hi = 1.0 - config.clip_ratio, 1.0 + config.clip_ratio
    for ep in episodes:
        logits_seq, pi_caches = pi_net.forward_sequence(ep["features"])
        values_seq, vf_caches = vf_net.forward_sequence(ep["features"])
        d_logits = np.zeros_like(logits_seq)
        d_values = np.zeros_like(values_seq)
        for t, action in enumerate(ep["actions"]):
            logits = logits_seq[t]
            log_probs = log_softmax(logits)
            probs = np.exp(log_probs)
            adv = ep["advantages"][t]
            ratio = np.exp(log_probs[action] - ep["log_probs_old"][t])
            clipped = min(max(ratio, clip_lo), clip_hi)
            policy_loss += -min(ratio * adv, clipped * adv) / n_steps
            entropy = -float(np.dot(probs, log_probs))
            entropy_sum += entropy / n_steps
            # Gradient of -min(r*A, clip(r)*A): zero when the clip binds on
            # the active branch, r*A otherwise.
            clip_binds = (adv >= 0 and ratio >= clip_hi) or \
                         (adv < 0 and ratio <= clip_lo)
            d_logp = 0.0 if clip_binds else -adv * ratio / n_steps
            one_hot = np.zeros_like(probs)
            one_hot[action] = 1.0
            d_logits[t] = d_logp * (one_hot - probs)
            # Entropy bonus: d(-coef*H)/dlogits.
            d_logits[t] += config.entropy_coef * probs * (log_probs + entropy) \
                / n_steps
            err = values_seq[t, 0] - ep["value_targets"][t]
            value_loss += err * err / n_steps
            d_values[t, 0] = config.value_coef * 2.0 * err / n_steps
        if compute_grads:
            pi_net.backward_sequence(pi_caches, d_logits, pi_grads)
            vf_net.backward_sequence(vf_caches, d_values, vf_grads)
    mean_entropy = entropy_sum
    total = policy_loss + config.value_coef * value_loss \
        - config.entropy_coef * mean_entropy
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(mean_entropy),
        "total_loss": float(total),
    }
    return stats, pi_grads, vf_grads


def total_loss(policy: PolicyHandle, episodes: list[dict],
               config: OptimConfig) -> float:
    """Loss as a pure function of the current parameters (no gradients); used
    by the finite-difference checks."""
    stats, _, _ = loss_and_grads(policy, episodes, config, compute_grads=False)
    return stats["total_loss"]


def _apply_gradients(policy: PolicyHandle, pi_grads: ParamSet,
                     vf_grads: ParamSet, config: OptimConfig):
    grad = np.concatenate([pi_grads.flat, vf_grads.flat])
    if config.max_grad_norm > 0:
        norm = float(np.linalg.norm(grad))
        if norm > config.max_grad_norm:
            grad *= config.max_grad_norm / norm
    if config.optimizer == "sgd":
        step = config.learning_rate * grad
    else:
        state = policy.opt_state
        if not state:
            state.update(m=np.zeros_like(grad), v=np.zeros_like(grad), t=0)
        state["t"] += 1
        state["m"] = config.adam_beta1 * state["m"] + (1 - config.adam_beta1) * grad
        state["v"] = config.adam_beta2 * state["v"] + (1 - config.adam_beta2) * grad ** 2
        m_hat = state["m"] / (1 - config.adam_beta1 ** state["t"])
        v_hat = state["v"] / (1 - config.adam_beta2 ** state["t"])
        step = config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    policy.set_params(policy.params - step)


def update(policy: PolicyHandle, batch: RolloutBatch, config: OptimConfig,
           rng: Optional[np.random.Generator] = None):
    """One training update over a rollout batch; mutates the handle's
    parameters in place and returns (policy, loss_stats).

    Aborts (without applying a step) if the loss or gradients go non-finite.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    episodes = batch.prepared(config)
    last_stats = None
    order = np.arange(len(episodes))
    mb_size = config.minibatch_size or len(episodes)
    for _ in range(max(1, config.epochs_per_batch)):
        rng.shuffle(order)
        for start in range(0, len(order), mb_size):
            chunk = [episodes[i] for i in order[start:start + mb_size]]
            stats, pi_grads, vf_grads = loss_and_grads(policy, chunk, config)
            if not np.isfinite(stats["total_loss"]):
                raise UpdateError(f"non-finite loss in update: {stats}")
            if not (np.all(np.isfinite(pi_grads.flat))
                    and np.all(np.isfinite(vf_grads.flat))):
                raise UpdateError(f"non-finite gradients in update: {stats}")
            _apply_gradients(policy, pi_grads, vf_grads, config)
            last_stats = stats
    return policy, last_stats


def desk_scale_spec(view_shape, n_actions, **overrides) -> NetworkSpec:
    """Small preset for tests and CI runs."""
    defaults = dict(conv_filters=8, recurrent_width=64, head_widths=(16, 16))
    defaults.update(overrides)
    return NetworkSpec(view_shape=view_shape, n_actions=n_actions, **defaults)


def paper_scale_spec(view_shape, n_actions, **overrides) -> NetworkSpec:
    defaults = dict(conv_filters=16, recurrent_width=256, head_widths=(32, 32))
    defaults.update(overrides)
    return NetworkSpec(view_shape=view_shape, n_actions=n_actions, **defaults)
