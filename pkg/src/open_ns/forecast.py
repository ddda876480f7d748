"""Future-performance forecasts behind one interface."""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import estimators as est
from . import regress
from .policies import Policy

DIVERGENCE_FACTOR = 1e4


class ForecastError(ValueError):
    pass


class Algorithm(str, enum.Enum):
    OPEN = "OPEN"
    PROWLS = "ProWLS"
    WIS = "WIS"
    SWIS = "SWIS"
    NAIVE_AR = "NaiveAR"


@dataclass(frozen=True)
class AlgoParams:
    open_p: int = 400
    prowls_d: int = 5
    swis_window: int = 400
    naive_p: int = 1
    open_ridge: float = 2.5e-3


@dataclass(frozen=True, eq=False)
class Forecast:
    per_episode: np.ndarray
    total: float
    algorithm: str
    provenance: str = ""
    flags: tuple[str, ...] = ()
    extras: dict[str, Any] = field(default_factory=dict, repr=False)

    @classmethod
    def from_values(cls, values: Sequence[float], algorithm: str, provenance: str = "",
                    flags: tuple[str, ...] = (), extras: dict[str, Any] | None = None) -> "Forecast":
        arr = np.array(values, dtype=float)
        arr.setflags(write=False)
        return cls(arr, float(np.sum(arr)), algorithm, provenance, tuple(flags), extras or {})

    def to_csv(self, path: str | Path, first_episode: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode_index", "predicted_J"])
            for k, v in enumerate(self.per_episode):
                w.writerow([first_episode + k, repr(float(v))])

    def summary(self) -> str:
        return json.dumps({"algorithm": self.algorithm, "L": len(self.per_episode),
                           "total": self.total, "provenance": self.provenance,
                           "flags": list(self.flags)}, sort_keys=True)


def rollout(model: regress.ArModel, seed_lags: Sequence[float], L: int, *,
            clip: float | None = None, algorithm: str = "AR", provenance: str = "") -> Forecast:
    """Iterate the AR model forward ``L`` steps.

    ``seed_lags`` holds the p most recent values in chronological order; each
    prediction is appended to the lag window.  With ``clip`` set, values whose
    magnitude exceeds it are clipped and the forecast is flagged divergent.
    """
    if L < 1:
        raise ForecastError("L must be >= 1")
    seed = np.asarray(seed_lags, dtype=float)
    if len(seed) != model.p:
        raise ForecastError(f"need {model.p} seed lags, got {len(seed)}")
    if not model.finite or not np.all(np.isfinite(seed)):
        raise ForecastError("non-finite model coefficients or seed lags")
    coef = model.theta[:-1][::-1]  # align with a chronological window
    c = model.theta[-1]
    window = list(seed)
    out = np.empty(L)
    divergent = False
    for k in range(L):
        v = float(np.dot(coef, window[-model.p:])) + c
        if clip is not None and (not np.isfinite(v) or abs(v) > clip):
            v = float(np.clip(np.nan_to_num(v, nan=0.0, posinf=clip, neginf=-clip), -clip, clip))
            divergent = True
        out[k] = v
        window.append(v)
        if len(window) > 4 * model.p + 16:
            window = window[-model.p:]
    return Forecast.from_values(out, algorithm, provenance, ("divergent-forecast",) if divergent else ())


def _flat(value: float, L: int, algorithm: Algorithm, provenance: str) -> Forecast:
    return Forecast.from_values(np.full(L, value), algorithm.value, provenance)


def predict(algorithm: Algorithm | str, dataset: est.Dataset | est.PerformanceSeries, pi: Policy | None,
            hyper: AlgoParams, L: int, provenance: str = "") -> Forecast:
    """Forecast J_{n+1..n+L}(pi) from logged data with the chosen algorithm."""
    algorithm = Algorithm(algorithm)
    if isinstance(dataset, est.PerformanceSeries):
        series = dataset
    else:
        if pi is None:
            raise ForecastError("an evaluation policy is required to build the performance series")
        series = est.build_performance_series(dataset, pi)
    n = len(series)
    if n == 0:
        raise ForecastError("empty dataset")
    clip = DIVERGENCE_FACTOR * max(float(np.max(np.abs(series.G))), 1e-12)
    try:
        if algorithm is Algorithm.WIS:
            return _flat(est.wis_estimate(series), L, algorithm, provenance)
        if algorithm is Algorithm.SWIS:
            return _flat(est.swis_estimate(series, hyper.swis_window), L, algorithm, provenance)
        if algorithm is Algorithm.PROWLS:
            model = regress.prowls_fit(series, hyper.prowls_d)
            return Forecast.from_values(regress.prowls_forecast(model, n, L), algorithm.value,
                                        provenance, extras={"model": model})
        if algorithm is Algorithm.NAIVE_AR:
            p = hyper.naive_p
            model = est.naive_ar_fit(series, p)
            fc = rollout(model, series.j_hat[-p:], L, clip=clip, algorithm=algorithm.value,
                         provenance=provenance)
            return Forecast(fc.per_episode, fc.total, fc.algorithm, fc.provenance,
                            fc.flags + tuple(model.diagnostics.get("flags", ())), {"model": model})
        # OPEN
        p = hyper.open_p
        problem = est.build_regression_targets(series, p)
        model = regress.two_stage_iv_fit(problem, ridge=hyper.open_ridge)
        seed = model.denoised[-p:]
        fc = rollout(model, seed, L, clip=clip, algorithm=algorithm.value, provenance=provenance)
        return Forecast(fc.per_episode, fc.total, fc.algorithm, fc.provenance,
                        fc.flags + tuple(model.diagnostics.get("flags", ())),
                        {"model": model, "problem": problem})
    except (est.EstimatorError, regress.RegressionError, ForecastError) as exc:
        raise ForecastError(f"{algorithm.value}: {exc}") from exc
