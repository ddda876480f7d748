"""Toy robot: one macro decision per episode, walk or run.

Running pays more but wears the motors, which scales down the reward of both
options in later episodes.  The passive variant replaces wear with an
exogenous sinusoidal fluctuation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..policies import PresetPolicy, TabularPolicy, epsilon_mixture
from .base import Domain, DomainId, EpisodeTrace, register

WALK, RUN = 0, 1


@dataclass(frozen=True)
class RoboToyParams:
    walk_reward: float = 8.0
    run_reward: float = 10.0
    reward_sigma: float = 0.05
    alpha0: float = 0.0005      # wear per run, per unit speed
    lambda_min: float = 0.05
    amplitude: float = 0.3      # passive variant
    period: float = 2000.0      # passive variant


def run_heavy(q: float) -> TabularPolicy:
    return TabularPolicy(np.array([[1.0 - q, q]]), name=f"robotoy_run_heavy({q:g})")


class _RoboToy(Domain):
    params_cls = RoboToyParams
    default_horizon = 1
    n_observations = 1
    n_actions = 2

    def __init__(self, config):
        super().__init__(config)
        p = self.params
        self.r_max = max(p.walk_reward, p.run_reward) * (1.0 + p.amplitude) + 10.0 * p.reward_sigma

    def initial_latent(self) -> np.ndarray:
        return np.array([1.0])

    def play(self, latent, episode_index, policy, rng):
        p = self.params
        lam = float(latent[0])
        obs, acts, rews, probs = [], [], [], []
        for _ in range(self.horizon):
            a = policy.sample(0, rng)
            base = p.run_reward if a == RUN else p.walk_reward
            r = base * lam + p.reward_sigma * rng.standard_normal()
            obs.append(0)
            acts.append(a)
            rews.append(min(max(r, -self.r_max), self.r_max))
            probs.append(float(policy.table[0, a]))
        return EpisodeTrace(obs, acts, rews, probs, {"runs": acts.count(RUN)})

    def expected_return(self, latent, policy) -> float:
        """Exact J(pi) for the current latent (used by diagnostics, not by estimators)."""
        p = self.params
        q = float(policy.table[0, RUN])
        return self.horizon * float(latent[0]) * ((1 - q) * p.walk_reward + q * p.run_reward)

    def presets(self):
        return {
            "robotoy_run_heavy": lambda q=0.8: run_heavy(float(q)),
            "robotoy_walk_heavy": lambda q=0.3: epsilon_mixture(run_heavy(float(q)), 0.5),
            "robotoy_always_run": lambda: run_heavy(1.0),
            "robotoy_always_walk": lambda: run_heavy(0.0),
        }

    def default_policies(self):
        return "robotoy_run_heavy(0.8)", "robotoy_walk_heavy(0.3)"


@register
class RoboToyActive(_RoboToy):
    domain_id = DomainId.ROBOTOY_ACTIVE
    active = True

    def meta_transition(self, latent, episode_index, summary):
        p = self.params
        alpha = self.speed * p.alpha0
        lam = float(latent[0]) * (1.0 - alpha) ** summary["runs"]
        return np.array([max(p.lambda_min, lam)]) if self.speed > 0 else np.array(latent)


@register
class RoboToyPassive(_RoboToy):
    domain_id = DomainId.ROBOTOY_PASSIVE
    active = False

    def meta_transition(self, latent, episode_index, summary):
        p = self.params
        phase = 2.0 * math.pi * self.speed * (episode_index + 1) / p.period
        return np.array([1.0 + p.amplitude * math.sin(phase)])


__all__ = ["RoboToyActive", "RoboToyPassive", "RoboToyParams", "run_heavy", "WALK", "RUN", "PresetPolicy"]
