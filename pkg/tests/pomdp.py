"""A fixed two-step, two-state tabular POMDP with an exact value oracle."""
from __future__ import annotations

import itertools

import numpy as np

from open_ns.envs import EpisodeHistory
from open_ns.policies import TabularPolicy, epsilon_mixture

P0 = np.array([0.6, 0.4])
OBS_ACC = 0.75                                     # P(observation == state)
P_NEXT1 = np.array([[0.2, 0.7], [0.5, 0.9]])      # P(s' = 1 | s, a)
REWARD = np.array([[1.0, 0.0], [-0.5, 2.0]])

PI = TabularPolicy(np.array([[0.3, 0.7], [0.8, 0.2]]), name="pi")
BETA = epsilon_mixture(PI, 0.5)


def _p_obs(o: int, s: int) -> float:
    return OBS_ACC if o == s else 1.0 - OBS_ACC


def exact_value(pi=PI) -> float:
    """J(pi) by enumerating every (s1, o1, a1, s2, o2, a2)."""
    total = 0.0
    for s1, o1, a1, s2, o2, a2 in itertools.product(range(2), repeat=6):
        p_s2 = P_NEXT1[s1, a1] if s2 == 1 else 1.0 - P_NEXT1[s1, a1]
        prob = (P0[s1] * _p_obs(o1, s1) * pi.table[o1, a1]
                * p_s2 * _p_obs(o2, s2) * pi.table[o2, a2])
        total += prob * (REWARD[s1, a1] + REWARD[s2, a2])
    return total


def simulate(n: int, policy=BETA, seed: int = 0) -> list[EpisodeHistory]:
    """n independent episodes under ``policy`` (vectorised draws)."""
    rng = np.random.default_rng(seed)
    u = rng.random((n, 6))
    s1 = (u[:, 0] < P0[1]).astype(int)
    o1 = np.where(u[:, 1] < OBS_ACC, s1, 1 - s1)
    a1 = (u[:, 2] < policy.table[o1, 1]).astype(int)
    s2 = (u[:, 3] < P_NEXT1[s1, a1]).astype(int)
    o2 = np.where(u[:, 4] < OBS_ACC, s2, 1 - s2)
    a2 = (u[:, 5] < policy.table[o2, 1]).astype(int)
    obs = np.column_stack([o1, o2])
    acts = np.column_stack([a1, a2])
    rew = np.column_stack([REWARD[s1, a1], REWARD[s2, a2]])
    probs = policy.table[obs, acts]
    return [EpisodeHistory(i, obs[i], acts[i], rew[i], probs[i]) for i in range(n)]
