"""Shared primitives: trajectories, discounted returns, and regret estimators.

All functions here are pure and operate on plain floats / sequences, so they
are safe to call from any number of concurrent rollout workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Utility:
    """A discounted return together with the discount that produced it."""

    value: float
    discount: float


@dataclass(frozen=True)
class RegretEstimate:
    """Batched regret: best antagonist return minus mean protagonist return."""

    raw: float
    clamped: float
    antagonist_max: float
    protagonist_mean: float


@dataclass
class Trajectory:
    """One episode: per-step rewards/actions plus the observation sequence.

    ``observations`` has one more entry than ``actions``/``rewards`` because it
    includes the initial observation.
    """

    observations: list
    actions: list[int]
    rewards: list[float]
    terminated: bool = False
    # Extra per-step records filled in by rollout collection (behavior-policy
    # log-probs and value estimates); empty for trajectories that are never
    # trained on.
    log_probs: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.actions) != len(self.rewards):
            raise ValueError("actions and rewards must have equal length")
        if self.observations and len(self.observations) != len(self.actions) + 1:
            raise ValueError("observations must have length len(actions)+1")

    @property
    def length(self) -> int:
        return len(self.rewards)

    def undiscounted_return(self) -> float:
        return float(sum(self.rewards))


def discounted_return(rewards: Sequence[float], discount: float) -> Utility:
    """Sum of rewards[t] * discount**t.  Empty reward streams return 0."""
    if not 0.0 < discount <= 1.0:
        raise ValueError(f"discount must be in (0, 1], got {discount}")
    value = 0.0
    for r in reversed(rewards):
        value = r + discount * value
    return Utility(value=float(value), discount=discount)


def regret_pair(antagonist_return: float, protagonist_return: float) -> float:
    """Single-trajectory regret: antagonist return minus protagonist return."""
    return antagonist_return - protagonist_return


def regret_batch(
    antagonist_returns: Sequence[float],
    protagonist_returns: Sequence[float],
    clamp: bool = True,
) -> RegretEstimate:
    """Batched regret estimator over several trajectories per environment.

    Uses the max antagonist return against the mean protagonist return, which
    is less noisy than differencing single trajectories.  ``clamp`` controls
    only which value callers should feed to the adversary; both raw and
    clamped values are always reported.
    """
    if len(antagonist_returns) == 0 or len(protagonist_returns) == 0:
        raise ValueError("regret_batch requires non-empty return batches")
    a_max = float(max(antagonist_returns))
    p_mean = float(np.mean(protagonist_returns))
    raw = a_max - p_mean
    return RegretEstimate(
        raw=raw,
        clamped=max(0.0, raw) if clamp else raw,
        antagonist_max=a_max,
        protagonist_mean=p_mean,
    )


def regret_pop(population_returns: Sequence[float]) -> float:
    """Population regret: best member's return minus the population mean."""
    if len(population_returns) == 0:
        raise ValueError("regret_pop requires a non-empty population")
    returns = np.asarray(population_returns, dtype=float)
    return float(returns.max() - returns.mean())


def per_step_penalty(opponent_max_return: float, horizon: int) -> float:
    """Per-timestep penalty spreading the opponent's best return over the
    episode horizon.  Callers subtract it from every step's reward post-hoc,
    before return computation (applied to the undiscounted reward stream)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return opponent_max_return / horizon
