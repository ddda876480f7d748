"""Air-ambulance dispatch with hybrid non-stationarity.

Requests arrive as a Poisson stream over zones and priority levels; each
decision either dispatches one of the ambulances or holds.  The arrival rate of
the highest priority oscillates with the episode index (passive) and every
ambulance's service rate decays with the number of dispatches it has made
(active).  Structure follows the usual MEDEVAC set-up; constants are our own.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..policies import TabularPolicy, epsilon_mixture
from .base import Domain, DomainId, EpisodeTrace, register


@dataclass(frozen=True)
class MedevacParams:
    n_zones: int = 34
    n_ambulances: int = 4
    rewards: tuple = (1.0, 5.0, 25.0)           # low, medium, high priority
    arrival_rates: tuple = (0.6, 0.3, 0.1)      # per unit time, summed over zones
    amplitude: float = 0.5                      # high-priority oscillation
    period: float = 2000.0
    service_rate: float = 0.5
    c_s: float = 0.0002                         # service-rate decay per dispatch, per unit speed
    mu_min: float = 0.2
    layout_seed: int = 2021


@register
class Medevac(Domain):
    domain_id = DomainId.MEDEVAC
    params_cls = MedevacParams
    default_horizon = 20
    active = True

    def __init__(self, config):
        super().__init__(config)
        p = self.params
        self.n_levels = len(p.rewards)
        self.n_masks = 2 ** p.n_ambulances
        self.n_observations = self.n_levels * self.n_masks
        self.n_actions = p.n_ambulances + 1
        self.hold = p.n_ambulances
        self.r_max = float(max(p.rewards))
        layout = np.random.default_rng(p.layout_seed)
        coords = layout.random((p.n_zones, 2))
        self.zone_weights = layout.dirichlet(np.full(p.n_zones, 2.0))
        bases = np.linspace(0, p.n_zones - 1, p.n_ambulances).round().astype(int)
        self.distance = np.linalg.norm(coords[:, None, :] - coords[None, bases, :], axis=2)
        self._zone_cdf = np.cumsum(self.zone_weights)
        self._zone_cdf[-1] = 1.0

    # latent = [high-priority arrival multiplier, service multiplier per ambulance]
    def initial_latent(self) -> np.ndarray:
        return np.ones(1 + self.params.n_ambulances)

    def play(self, latent, episode_index, policy, rng):
        p = self.params
        rates = np.array(p.arrival_rates, dtype=float)
        rates[-1] *= float(latent[0])
        total = rates.sum()
        level_cdf = np.cumsum(rates) / total
        mult = np.asarray(latent[1:], dtype=float)
        busy_until = np.zeros(p.n_ambulances)
        counts = [0] * p.n_ambulances
        table = policy.table
        obs, acts, rews, probs = [], [], [], []
        t = 0.0
        for _ in range(self.horizon):
            t += rng.exponential(1.0 / total)
            level = int(np.searchsorted(level_cdf, rng.random(), side="right"))
            level = min(level, self.n_levels - 1)
            zone = int(np.searchsorted(self._zone_cdf, rng.random(), side="right"))
            free = busy_until <= t
            mask = int(sum(1 << k for k in range(p.n_ambulances) if free[k]))
            o = level * self.n_masks + mask
            a = policy.sample(o, rng)
            r = 0.0
            if a != self.hold and free[a]:
                r = p.rewards[level]
                mean = (1.0 + 2.0 * self.distance[zone, a]) / (p.service_rate * mult[a])
                busy_until[a] = t + rng.exponential(mean)
                counts[a] += 1
            obs.append(o)
            acts.append(a)
            rews.append(r)
            probs.append(float(table[o, a]))
        return EpisodeTrace(obs, acts, rews, probs, {"dispatches": counts})

    def meta_transition(self, latent, episode_index, summary):
        p = self.params
        phase = 2.0 * math.pi * self.speed * (episode_index + 1) / p.period
        out = np.array(latent, dtype=float)
        out[0] = 1.0 + p.amplitude * math.sin(phase)
        if self.speed > 0:
            decay = 1.0 - self.speed * p.c_s
            for k, c in enumerate(summary["dispatches"]):
                out[1 + k] = max(p.mu_min, out[1 + k] * decay ** c)
        return out

    # ------------------------------------------------------------ presets

    def _preferred(self, level: int, mask: int) -> int:
        free = [k for k in range(self.params.n_ambulances) if mask >> k & 1]
        need = {self.n_levels - 1: 1, self.n_levels - 2: 2}.get(level, 3)
        return free[0] if len(free) >= need else self.hold

    def triage(self, strength: float = 0.6) -> TabularPolicy:
        """Serve high priority whenever possible; keep reserve capacity for low priority."""
        rest = (1.0 - strength) / (self.n_actions - 1)
        table = np.full((self.n_observations, self.n_actions), rest)
        for level in range(self.n_levels):
            for mask in range(self.n_masks):
                table[level * self.n_masks + mask, self._preferred(level, mask)] = strength
        return TabularPolicy(table, name=f"medevac_triage({strength:g})")

    def constant(self, action: int, name: str) -> TabularPolicy:
        table = np.zeros((self.n_observations, self.n_actions))
        table[:, action] = 1.0
        return TabularPolicy(table, name=name)

    def always_dispatch(self) -> TabularPolicy:
        """Dispatch the first free ambulance (hold only when none is free)."""
        table = np.zeros((self.n_observations, self.n_actions))
        for level in range(self.n_levels):
            for mask in range(self.n_masks):
                free = [k for k in range(self.params.n_ambulances) if mask >> k & 1]
                table[level * self.n_masks + mask, free[0] if free else self.hold] = 1.0
        return TabularPolicy(table, name="medevac_always_dispatch")

    def presets(self):
        return {
            "medevac_triage": lambda s=0.6: self.triage(float(s)),
            "medevac_behavior": lambda s=0.6: epsilon_mixture(self.triage(float(s)), 0.5),
            "medevac_always_dispatch": self.always_dispatch,
            "medevac_never_dispatch": lambda: self.constant(self.hold, "medevac_never_dispatch"),
        }

    def default_policies(self):
        return "medevac_triage(0.6)", "medevac_behavior(0.6)"
