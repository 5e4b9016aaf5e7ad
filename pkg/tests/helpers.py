"""Shared fixtures for the learner and strategy tests: tiny network specs,
finite-difference gradient checking, and scripted stub policies."""

from __future__ import annotations

import numpy as np

from uedlab.learner import (
    NetworkSpec,
    OptimConfig,
    PolicyHandle,
    loss_and_grads,
    total_loss,
)
from uedlab.nets import StepFeatures, log_softmax


def tiny_spec(direction_embed=2, timestep_embed=0, latent_dim=0,
              n_actions=3) -> NetworkSpec:
    return NetworkSpec(
        view_shape=(5, 5, 3),
        n_actions=n_actions,
        conv_filters=2,
        recurrent_width=4,
        head_widths=(4, 4),
        direction_embed=direction_embed,
        timestep_embed=timestep_embed,
        latent_dim=latent_dim,
    )


def random_features(spec: NetworkSpec, rng: np.random.Generator) -> StepFeatures:
    image = (rng.random(spec.view_shape) < 0.3).astype(np.float64)
    return StepFeatures(
        image=image,
        direction=int(rng.integers(4)) if spec.direction_embed else None,
        timestep=float(rng.integers(50)) if spec.timestep_embed else None,
        latent=rng.standard_normal(spec.latent_dim) if spec.latent_dim else None,
    )


def random_episodes(policy: PolicyHandle, rng: np.random.Generator,
                    n_episodes=2, length=5) -> list[dict]:
    """Prepared episodes with parameter-independent targets, so the training
    loss is a pure function of the parameter vector."""
    spec = policy.spec
    pi_net = policy.policy_net()
    episodes = []
    for _ in range(n_episodes):
        features = [random_features(spec, rng) for _ in range(length)]
        logits_seq, _ = pi_net.forward_sequence(features)
        actions = np.array([int(rng.integers(spec.n_actions))
                            for _ in range(length)])
        log_probs_old = np.array([
            log_softmax(logits_seq[t])[a] + rng.normal(0, 0.05)
            for t, a in enumerate(actions)
        ])
        episodes.append({
            "features": features,
            "actions": actions,
            "log_probs_old": log_probs_old,
            "advantages": rng.normal(0, 1, size=length),
            "value_targets": rng.normal(0, 1, size=length),
        })
    return episodes


def finite_difference_check(policy: PolicyHandle, episodes: list[dict],
                            config: OptimConfig, n_coords: int,
                            rng: np.random.Generator,
                            step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients
    over ``n_coords`` random parameter coordinates.

    The relative-error denominator is floored at 1e-5: below that scale the
    central difference itself is dominated by floating-point cancellation
    (halving the step quarters the discrepancy), so tighter comparison would
    measure the oracle's noise, not the gradient.
    """
    _, pi_grads, vf_grads = loss_and_grads(policy, episodes, config)
    grad = np.concatenate([pi_grads.flat, vf_grads.flat])
    flat = policy.params
    coords = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
    worst = 0.0
    for i in coords:
        saved = flat[i]
        flat_plus = flat.copy()
        flat_plus[i] = saved + step
        policy.set_params(flat_plus)
        up = total_loss(policy, episodes, config)
        flat_minus = flat.copy()
        flat_minus[i] = saved - step
        policy.set_params(flat_minus)
        down = total_loss(policy, episodes, config)
        flat_restore = flat.copy()
        flat_restore[i] = saved
        policy.set_params(flat_restore)
        fd = (up - down) / (2 * step)
        denom = max(abs(fd), abs(grad[i]), 1e-5)
        worst = max(worst, abs(fd - grad[i]) / denom)
    return worst


class FixedActionActor:
    """Duck-typed stand-in for EpisodeActor: plays a scripted sequence."""

    def __init__(self, actions):
        self.actions = list(actions)
        self.i = 0

    def reset(self):
        self.i = 0

    def act(self, observation):
        action = self.actions[min(self.i, len(self.actions) - 1)]
        self.i += 1
        return action, 0.0, 0.0


class StubPolicy:
    """Duck-typed stand-in for PolicyHandle in strategy tests; never trained."""

    def __init__(self, actions):
        self.actions = list(actions)

    def episode_actor(self, rng):
        return FixedActionActor(self.actions)


def spinner() -> StubPolicy:
    """Agent stub that turns in place until the horizon expires."""
    return StubPolicy([0])


def runner(n_forward: int) -> StubPolicy:
    """Agent stub that walks straight ahead ``n_forward`` tiles, then spins."""
    return StubPolicy([2] * n_forward + [0])
