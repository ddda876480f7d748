"""Discrete stochastic policies with exact action-probability queries."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

ROW_TOL = 1e-12


class PolicyError(ValueError):
    """Raised for malformed policies or out-of-range queries."""


class Policy:
    """Base class: a policy is a row-stochastic table over (observation, action)."""

    kind: str = "base"
    name: str = ""

    @property
    def table(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def n_observations(self) -> int:
        return self.table.shape[0]

    @property
    def n_actions(self) -> int:
        return self.table.shape[1]

    def _check(self, observation: int, action: int | None = None) -> None:
        if not 0 <= observation < self.n_observations:
            raise PolicyError(
                f"observation {observation} out of range [0, {self.n_observations})"
            )
        if action is not None and not 0 <= action < self.n_actions:
            raise PolicyError(f"action {action} out of range [0, {self.n_actions})")

    def probs(self, observation: int) -> np.ndarray:
        self._check(observation)
        return self.table[observation]

    def prob(self, observation: int, action: int) -> float:
        self._check(observation, action)
        return float(self.table[observation, action])

    def sample(self, observation: int, rng: np.random.Generator) -> int:
        """Draw an action from one uniform variate inverted through the CDF row."""
        self._check(observation)
        return int(np.searchsorted(self._cdf[observation], rng.random(), side="right"))

    @property
    def _cdf(self) -> np.ndarray:
        cdf = getattr(self, "_cdf_cache", None)
        if cdf is None:
            table = self.table
            cdf = np.cumsum(table, axis=1)
            for o in range(table.shape[0]):
                # saturate after the last supported action so rounding never picks a zero entry
                cdf[o, np.flatnonzero(table[o])[-1]:] = 1.0
            object.__setattr__(self, "_cdf_cache", cdf)
        return cdf


def _validate_table(table: np.ndarray) -> np.ndarray:
    table = np.array(table, dtype=float)
    if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 1:
        raise PolicyError(f"policy table must be 2-D and non-empty, got {table.shape}")
    if not np.all(np.isfinite(table)) or np.any(table < 0):
        raise PolicyError("policy probabilities must be finite and non-negative")
    sums = table.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
    if bad.size:
        raise PolicyError(f"rows {bad.tolist()} do not sum to 1 (sums={sums[bad].tolist()})")
    table.setflags(write=False)
    return table


@dataclass(frozen=True, eq=False)
class TabularPolicy(Policy):
    """Explicit observation -> action-probability table."""

    probabilities: np.ndarray
    name: str = "tabular"
    kind: str = field(default="Tabular", init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "probabilities", _validate_table(self.probabilities))

    @property
    def table(self) -> np.ndarray:
        return self.probabilities


@dataclass(frozen=True, eq=False)
class MixturePolicy(Policy):
    """Convex combination of policies over identical spaces.

    ``prob`` is evaluated as ``sum_k w_k * prob_k`` so mixtures stay exact.
    """

    components: tuple[Policy, ...]
    weights: tuple[float, ...]
    name: str = "mixture"
    kind: str = field(default="Mixture", init=False)

    def __post_init__(self) -> None:
        if len(self.components) != len(self.weights) or not self.components:
            raise PolicyError("mixture needs one weight per component")
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > ROW_TOL:
            raise PolicyError(f"mixture weights must be a probability vector, got {self.weights}")
        shapes = {c.table.shape for c in self.components}
        if len(shapes) != 1:
            raise PolicyError(f"mixture components disagree on shape: {sorted(shapes)}")
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        # same float operations as prob(), so table lookups and prob() agree bit for bit
        table = sum(wk * c.table for wk, c in zip(self.weights, self.components))
        table = _validate_table(table)
        object.__setattr__(self, "_table", table)

    @property
    def table(self) -> np.ndarray:
        return self._table

    def prob(self, observation: int, action: int) -> float:
        self._check(observation, action)
        return float(sum(w * c.prob(observation, action) for w, c in zip(self.weights, self.components)))


@dataclass(frozen=True, eq=False)
class PresetPolicy(Policy):
    """A named domain preset; behaves exactly like the policy it wraps."""

    preset_id: str
    inner: Policy
    kind: str = field(default="DomainPreset", init=False)

    @property
    def name(self) -> str:  # type: ignore[override]
        return self.preset_id

    @property
    def table(self) -> np.ndarray:
        return self.inner.table

    def prob(self, observation: int, action: int) -> float:
        return self.inner.prob(observation, action)


def uniform(n_observations: int, n_actions: int) -> TabularPolicy:
    return TabularPolicy(np.full((n_observations, n_actions), 1.0 / n_actions), name="uniform")


def epsilon_mixture(pi: Policy, weight: float = 0.5) -> MixturePolicy:
    """``weight * pi + (1 - weight) * uniform``; the default is the usual 50/50 behaviour policy."""
    return MixturePolicy(
        (pi, uniform(pi.n_observations, pi.n_actions)),
        (weight, 1.0 - weight),
        name=f"mix({pi.name},{weight:g})",
    )


def support_ratio_bound(pi: Policy, beta: Policy) -> float:
    """Largest ratio pi/beta over pairs where pi is positive; ``inf`` if beta lacks support."""
    if pi.table.shape != beta.table.shape:
        raise PolicyError(f"policies over different spaces: {pi.table.shape} vs {beta.table.shape}")
    p, b = pi.table, beta.table
    mask = p > 0
    if np.any(b[mask] == 0):
        return float("inf")
    return float(np.max(p[mask] / b[mask]))


def save_csv(policy: Policy, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["observation_id", "action_id", "probability"])
        for o in range(policy.n_observations):
            for a in range(policy.n_actions):
                w.writerow([o, a, repr(float(policy.table[o, a]))])


def load_csv(path: str | Path, name: str | None = None) -> TabularPolicy:
    rows: list[tuple[int, int, float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["observation_id", "action_id", "probability"]:
            raise PolicyError(f"{path}: unexpected header {header}")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != 3:
                raise PolicyError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            try:
                rows.append((int(rec[0]), int(rec[1]), float(rec[2])))
            except ValueError as exc:
                raise PolicyError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise PolicyError(f"{path}: no policy rows")
    n_obs = max(r[0] for r in rows) + 1
    n_act = max(r[1] for r in rows) + 1
    table = np.full((n_obs, n_act), np.nan)
    for o, a, p in rows:
        if o < 0 or a < 0:
            raise PolicyError(f"{path}: negative id ({o}, {a})")
        table[o, a] = p
    if np.isnan(table).any():
        raise PolicyError(f"{path}: table has missing (observation, action) entries")
    return TabularPolicy(table, name=name or Path(path).stem)


def as_table(rows: Sequence[Sequence[float]]) -> np.ndarray:
    return np.asarray(rows, dtype=float)
