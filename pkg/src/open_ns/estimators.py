"""Per-episode off-policy statistics and regression inputs.

Naming used throughout:

* ``G``        observed return of an episode,
* ``rho``      full-trajectory importance ratio pi/beta,
* ``j_hat``    per-decision importance sampling estimate of J_i(pi),
* ``j_tilde``  prefix-normalised weighted estimate rho_i G_i / ((n/i) sum_{k<=i} rho_k),
* ``z``        instrument vector [G_i, j_tilde_i].
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .envs import EpisodeHistory
from .policies import Policy

MIN_WEIGHT_MASS = 1e-12
DATASET_HEADER = ["episode", "t", "observation", "action", "reward", "behavior_prob"]


class EstimatorError(ValueError):
    """Estimator preconditions violated."""


class SupportError(EstimatorError):
    """Behaviour probability of a logged action is zero: pi/beta is unbounded."""


class IneffectiveSampleError(EstimatorError):
    """Importance weights carry (numerically) no mass."""

    taxonomy = "ineffective-sample"


@dataclass(frozen=True)
class Dataset:
    episodes: tuple[EpisodeHistory, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "episodes", tuple(self.episodes))
        idx = [e.episode_index for e in self.episodes]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise EstimatorError("dataset episodes must be ordered by strictly increasing index")

    def __len__(self) -> int:
        return len(self.episodes)

    def __iter__(self):
        return iter(self.episodes)

    @property
    def returns(self) -> np.ndarray:
        return np.array([e.ret for e in self.episodes])

    def to_csv(self, path: str | Path) -> None:
        """Long format, one row per step: episode, t, observation, action, reward, behavior_prob."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DATASET_HEADER)
            for e in self.episodes:
                for t in range(len(e)):
                    w.writerow([e.episode_index, t, int(e.observations[t]), int(e.actions[t]),
                                repr(float(e.rewards[t])), repr(float(e.behavior_probs[t]))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            if next(reader, None) != DATASET_HEADER:
                raise EstimatorError(f"{path}:1: expected header {','.join(DATASET_HEADER)}")
            steps: dict[int, list[list[str]]] = {}
            for line, rec in enumerate(reader, start=2):
                if len(rec) != len(DATASET_HEADER):
                    raise EstimatorError(f"{path}:{line}: expected {len(DATASET_HEADER)} fields")
                steps.setdefault(int(rec[0]), []).append(rec)
        episodes = []
        for idx, recs in steps.items():
            recs.sort(key=lambda r: int(r[1]))
            col = list(zip(*recs))
            episodes.append(EpisodeHistory(idx, np.array(col[2], dtype=int), np.array(col[3], dtype=int),
                                           np.array(col[4], dtype=float), np.array(col[5], dtype=float)))
        return cls(tuple(episodes))


def _step_ratios(history: EpisodeHistory, pi: Policy) -> np.ndarray:
    beta = history.behavior_probs
    if np.any(beta <= 0):
        raise SupportError(
            f"episode {history.episode_index}: zero behaviour probability for a logged action "
            "(pi/beta must be bounded)"
        )
    return pi.table[history.observations, history.actions] / beta


def pdis_estimate(history: EpisodeHistory, pi: Policy) -> float:
    """Per-decision importance sampling: sum_t (prod_{j<=t} pi/beta) R_t."""
    cum = np.cumprod(_step_ratios(history, pi))
    return float(np.dot(cum, history.rewards))


def trajectory_ratio(history: EpisodeHistory, pi: Policy) -> float:
    return float(np.prod(_step_ratios(history, pi)))


@dataclass(frozen=True, eq=False)
class PerformanceSeries:
    G: np.ndarray
    rho: np.ndarray
    j_hat: np.ndarray
    j_tilde: np.ndarray

    def __post_init__(self) -> None:
        for name in ("G", "rho", "j_hat", "j_tilde"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.G)

    @property
    def z(self) -> np.ndarray:
        """Instruments, shape (n, 2): columns [G_i, j_tilde_i]."""
        return np.column_stack([self.G, self.j_tilde])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "G", "rho", "j_hat", "j_tilde"])
            for i in range(len(self)):
                w.writerow([i + 1] + [repr(float(a[i])) for a in (self.G, self.rho, self.j_hat, self.j_tilde)])


def prefix_normalized(G: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """rho_i G_i / ((n/i) sum_{k<=i} rho_k); zero where the prefix mass is zero."""
    n = len(G)
    i = np.arange(1, n + 1)
    denom = (n / i) * np.cumsum(rho)
    out = np.zeros(n)
    ok = denom > 0
    out[ok] = rho[ok] * G[ok] / denom[ok]
    return out


def build_performance_series(dataset: Dataset | Sequence[EpisodeHistory], pi: Policy) -> PerformanceSeries:
    episodes = dataset.episodes if isinstance(dataset, Dataset) else tuple(dataset)
    G = np.array([e.ret for e in episodes])
    rho = np.empty(len(episodes))
    j_hat = np.empty(len(episodes))
    for k, e in enumerate(episodes):
        r = _step_ratios(e, pi)
        cum = np.cumprod(r)
        rho[k] = cum[-1] if len(cum) else 1.0
        j_hat[k] = float(np.dot(cum, e.rewards))
    return PerformanceSeries(G, rho, j_hat, prefix_normalized(G, rho))


# --------------------------------------------------------------- baselines

def wis_estimate(series: PerformanceSeries) -> float:
    mass = float(np.sum(series.rho))
    if mass <= 0:
        raise IneffectiveSampleError("all importance ratios are zero")
    return float(np.dot(series.rho, series.G) / mass)


def swis_estimate(series: PerformanceSeries, window: int) -> float:
    if window < 1:
        raise EstimatorError("window must be positive")
    if window > len(series):
        raise EstimatorError(f"window {window} exceeds series length {len(series)}")
    rho, G = series.rho[-window:], series.G[-window:]
    mass = float(np.sum(rho))
    if mass <= 0:
        raise IneffectiveSampleError(f"all importance ratios in the last {window} episodes are zero")
    return float(np.dot(rho, G) / mass)


# --------------------------------------------------------- regression data

@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """Rows for the two-stage importance-weighted IV fit.

    Stage 1 (rows i = p+1..n, 1-based): instruments Z_{i-1..i-p} -> G_i, weight rho_i.
    Stage 2 (rows i = 2p..n-1): denoised J-bar_{i..i-p+1} -> G_{i+1}, weight rho_i rho_{i+1}.
    ``stage2_lags`` indexes into the stage-1 rows, most recent lag first.
    Weights are normalised to sum to one.
    """

    p: int
    instruments: np.ndarray      # (m1, p*k), most recent lag block first
    targets_stage1: np.ndarray   # (m1,)
    weights_stage1: np.ndarray   # (m1,)
    stage2_lags: np.ndarray      # (m2, p) int indices into stage-1 rows
    targets_stage2: np.ndarray   # (m2,)
    weights_stage2: np.ndarray   # (m2,)
    inputs: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))  # raw j_hat lags of stage-2 rows
    stage1_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))  # 1-based episodes
    stage2_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def scaled(self, c1: float, c2: float) -> "RegressionProblem":
        """Same problem with both weight vectors multiplied by positive constants."""
        return RegressionProblem(
            self.p, self.instruments, self.targets_stage1, self.weights_stage1 * c1,
            self.stage2_lags, self.targets_stage2, self.weights_stage2 * c2,
            self.inputs, self.stage1_index, self.stage2_index,
        )


def lag_matrix(x: np.ndarray, rows: np.ndarray, p: int, offset: int) -> np.ndarray:
    """Row r holds x[rows[r] - offset - k] for k = 0..p-1 (0-based positions)."""
    idx = rows[:, None] - offset - np.arange(p)[None, :]
    if idx.size and idx.min() < 0:
        raise EstimatorError("lag window reaches before the first episode")
    return x[idx]


def normalize_weights(w: np.ndarray, what: str) -> np.ndarray:
    mass = float(np.sum(w))
    if not mass > MIN_WEIGHT_MASS:
        raise IneffectiveSampleError(f"{what} weights have total mass {mass:.3g}")
    return w / mass


def build_instruments(series: PerformanceSeries, p: int, z: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stage-1 design: rows i = p+1..n with the p preceding Z vectors flattened.

    ``z`` (n x k) replaces the default instruments [G, j_tilde].
    """
    n = len(series)
    rows = np.arange(p, n)  # 0-based position of episode i = p+1..n
    z = series.z if z is None else np.asarray(z, dtype=float).reshape(n, -1)
    lags = lag_matrix(z, rows, p, offset=1)  # (m1, p, 2)
    return lags.reshape(len(rows), -1), rows


def build_regression_targets(series: PerformanceSeries, p: int, z: np.ndarray | None = None) -> RegressionProblem:
    n = len(series)
    if p < 1:
        raise EstimatorError("lag order p must be >= 1")
    if n < 2 * p + 1:
        raise EstimatorError(f"need n >= 2p+1 episodes, got n={n}, p={p}")
    G, rho = series.G, series.rho
    instruments, rows1 = build_instruments(series, p, z)
    w1 = normalize_weights(rho[rows1], "stage-1")
    rows2 = np.arange(2 * p - 1, n - 1)  # 0-based position of episode i = 2p..n-1
    w2 = normalize_weights(rho[rows2] * rho[rows2 + 1], "stage-2")
    # stage-1 row r corresponds to position rows1[r] = p + r
    lags2 = rows2[:, None] - np.arange(p)[None, :] - p
    return RegressionProblem(
        p=p,
        instruments=instruments,
        targets_stage1=G[rows1].copy(),
        weights_stage1=w1,
        stage2_lags=lags2,
        targets_stage2=G[rows2 + 1].copy(),
        weights_stage2=w2,
        inputs=lag_matrix(series.j_hat, rows2, p, offset=0),
        stage1_index=rows1 + 1,
        stage2_index=rows2 + 1,
    )


def naive_regression(series: PerformanceSeries, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Design (raw j_hat lags, most recent first) and targets rho_i j_hat_{i+1}, rows i = p..n-1."""
    n = len(series)
    if n < p + 2:
        raise EstimatorError(f"need n >= p+2 episodes, got n={n}, p={p}")
    rows = np.arange(p - 1, n - 1)
    X = lag_matrix(series.j_hat, rows, p, offset=0)
    y = series.rho[rows] * series.j_hat[rows + 1]
    return X, y


def naive_ar_fit(series: PerformanceSeries, p: int = 1, *, intercept: bool = True):
    """Least squares of rho_i j_hat_{i+1} on raw noisy lags of j_hat (biased towards zero)."""
    from .regress import ArModel, weighted_least_squares  # local: regress imports this module

    X, y = naive_regression(series, p)
    design = np.column_stack([X, np.ones(len(y))]) if intercept else X
    coef, info = weighted_least_squares(design, y, np.ones(len(y)), return_info=True)
    theta = coef if intercept else np.append(coef, 0.0)
    flags = ("degenerate",) if info["degenerate"] else ()
    return ArModel(p=p, theta=theta, phi=None,
                   diagnostics={"cond_stage2": info["cond"], "flags": flags})
