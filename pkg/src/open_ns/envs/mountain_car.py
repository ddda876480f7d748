"""Mountain car whose engine weakens with use.

Classic dynamics with macro-actions (each decision repeats one primitive
action ``repeat`` times).  After every episode the effective engine force is
scaled down in proportion to the mean absolute velocity driven in it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..policies import TabularPolicy, epsilon_mixture
from .base import Domain, DomainId, EpisodeTrace, register

BACK, COAST, FORWARD = 0, 1, 2
X_MIN, X_MAX, GOAL = -1.2, 0.6, 0.5
V_MAX = 0.07


@dataclass(frozen=True)
class MountainCarParams:
    force: float = 0.001
    gravity: float = 0.0025
    repeat: int = 10
    pos_bins: int = 8
    vel_bins: int = 8
    c_v: float = 0.02
    kappa_min: float = 0.2
    start_low: float = -0.6
    start_high: float = -0.4


@register
class NsMountainCar(Domain):
    domain_id = DomainId.NS_MOUNTAIN_CAR
    params_cls = MountainCarParams
    default_horizon = 30
    active = True
    n_actions = 3
    r_max = 1.0

    def __init__(self, config):
        super().__init__(config)
        self.n_observations = self.params.pos_bins * self.params.vel_bins

    def initial_latent(self) -> np.ndarray:
        return np.array([1.0])

    def observe(self, x: float, v: float) -> int:
        p = self.params
        i = min(p.pos_bins - 1, int((x - X_MIN) / (X_MAX - X_MIN) * p.pos_bins))
        j = min(p.vel_bins - 1, int((v + V_MAX) / (2 * V_MAX) * p.vel_bins))
        return i * p.vel_bins + j

    def play(self, latent, episode_index, policy, rng):
        p = self.params
        push = p.force * float(latent[0])
        grav, cos = p.gravity, math.cos
        x = float(rng.uniform(p.start_low, p.start_high))
        v = 0.0
        table = policy.table
        obs, acts, rews, probs = [], [], [], []
        speed_sum, n_prim = 0.0, 0
        for _ in range(self.horizon):
            o = self.observe(x, v)
            a = policy.sample(o, rng)
            obs.append(o)
            acts.append(a)
            probs.append(float(table[o, a]))
            rews.append(-1.0)
            accel = (a - 1) * push
            for _ in range(p.repeat):
                v += accel - grav * cos(3.0 * x)
                v = -V_MAX if v < -V_MAX else (V_MAX if v > V_MAX else v)
                x += v
                if x < X_MIN:
                    x, v = X_MIN, max(v, 0.0)
                elif x > X_MAX:
                    x = X_MAX
                speed_sum += abs(v)
                n_prim += 1
                if x >= GOAL:
                    break
            if x >= GOAL:
                break
        return EpisodeTrace(obs, acts, rews, probs,
                            {"mean_speed": speed_sum / max(n_prim, 1), "reached": x >= GOAL})

    def meta_transition(self, latent, episode_index, summary):
        if self.speed == 0:
            return np.array(latent)
        p = self.params
        kappa = float(latent[0]) * (1.0 - self.speed * p.c_v * summary["mean_speed"])
        return np.array([max(p.kappa_min, kappa)])

    # ------------------------------------------------------------ presets

    def _velocity_sign(self) -> np.ndarray:
        p = self.params
        centres = -V_MAX + (np.arange(p.vel_bins) + 0.5) * (2 * V_MAX / p.vel_bins)
        return np.tile(np.sign(centres), p.pos_bins)

    def pump(self, strength: float = 0.6) -> TabularPolicy:
        """Push in the direction of motion (energy pumping) with probability ``strength``."""
        rest = (1.0 - strength) / 2.0
        table = np.full((self.n_observations, 3), rest)
        sign = self._velocity_sign()
        table[sign >= 0, FORWARD] = strength
        table[sign < 0, BACK] = strength
        return TabularPolicy(table, name=f"mountaincar_pump({strength:g})")

    def constant(self, action: int, name: str) -> TabularPolicy:
        table = np.zeros((self.n_observations, 3))
        table[:, action] = 1.0
        return TabularPolicy(table, name=name)

    def presets(self):
        return {
            "mountaincar_pump": lambda s=0.6: self.pump(float(s)),
            "mountaincar_behavior": lambda s=0.6: epsilon_mixture(self.pump(float(s)), 0.5),
            "mountaincar_full_throttle": lambda: self.constant(FORWARD, "mountaincar_full_throttle"),
            "mountaincar_coast": lambda: self.constant(COAST, "mountaincar_coast"),
        }

    def default_policies(self):
        return "mountaincar_pump(0.6)", "mountaincar_behavior(0.6)"
