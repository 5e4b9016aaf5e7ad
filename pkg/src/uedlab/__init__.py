"""Regret-driven adversarial maze curricula with exact decision-theory
solvers and a from-scratch recurrent actor-critic."""

__version__ = "0.1.0"
