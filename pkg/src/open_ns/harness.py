"""Experiment orchestration: data collection, clone ground truth, sweeps and aggregation.

Seeds are derived hierarchically from ``base_seed``: trial -> (episodes, clones).
The trial seed does not depend on the domain speed or on the algorithm list,
so cells at different speeds share common random numbers and adding an
algorithm never shifts environment randomness.
"""
from __future__ import annotations

import csv
import io
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import estimators as est
from .envs import (
    DomainId,
    EnvConfig,
    EnvState,
    default_policies,
    env_create,
    make_policy,
    restore,
    run_episode,
    snapshot,
)
from .forecast import Algorithm, AlgoParams, ForecastError, predict
from .policies import Policy, support_ratio_bound

RESULTS_HEADER = ["domain", "speed", "algorithm", "trial", "predicted", "truth", "error", "flags"]
SUMMARY_HEADER = ["domain", "speed", "algorithm", "abs_bias", "mse", "se_bias", "se_mse", "n_ok", "n_failed"]
ABLATION_PARAMS = ("open_p", "prowls_d")
BOOTSTRAP_REPS = 1000
DEFAULT_ALGORITHMS = ("OPEN", "ProWLS", "WIS", "SWIS")

# Desk profile halves the reference scale; lag order and window follow n.
PROFILES: dict[str, dict[str, Any]] = {
    "paper": {"n_episodes": 2000, "L": 200, "n_trials": 30, "n_future_clones": 30,
              "algo": {"open_p": 400, "prowls_d": 5, "swis_window": 400}},
    "desk": {"n_episodes": 1000, "L": 100, "n_trials": 20, "n_future_clones": 20,
             "algo": {"open_p": 200, "prowls_d": 5, "swis_window": 200}},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: every (domain, speed, trial) cell runs every algorithm."""

    domains: tuple[str, ...] = ("RoboToyActive",)
    speeds: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)
    n_episodes: int = 2000
    L: int = 200
    n_trials: int = 30
    n_future_clones: int = 30
    algorithms: tuple[str, ...] = DEFAULT_ALGORITHMS
    algo: AlgoParams = field(default_factory=AlgoParams)
    pi_preset: str = ""       # empty: the domain's default evaluation policy
    beta_preset: str = ""     # empty: the domain's default behaviour policy
    horizon_cap: int | None = None
    domain_params: dict[str, dict[str, Any]] = field(default_factory=dict)
    base_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "domains", tuple(DomainId(d).value for d in self.domains))
        object.__setattr__(self, "speeds", tuple(float(s) for s in self.speeds))
        object.__setattr__(self, "algorithms", tuple(Algorithm(a).value for a in self.algorithms))
        if not self.domains or not self.speeds or not self.algorithms:
            raise ConfigError("domains, speeds and algorithms must be non-empty")
        if any(s < 0 or not math.isfinite(s) for s in self.speeds):
            raise ConfigError("speeds must be finite and non-negative")
        for name in ("n_episodes", "L", "n_trials", "n_future_clones"):
            if getattr(self, name) < (0 if name == "n_episodes" else 1):
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError("base_seed must be an unsigned 64-bit integer")
        a, n = self.algo, self.n_episodes
        if "OPEN" in self.algorithms and not 1 <= a.open_p < n / 2:
            raise ConfigError(f"open_p={a.open_p} must satisfy 1 <= p < n_episodes/2 = {n / 2:g}")
        if "SWIS" in self.algorithms and not 1 <= a.swis_window <= n:
            raise ConfigError(f"swis_window={a.swis_window} must be in [1, n_episodes]")
        if "ProWLS" in self.algorithms and not 2 * a.prowls_d + 1 < n:
            raise ConfigError(f"2*prowls_d+1 = {2 * a.prowls_d + 1} must be below n_episodes")
        if "NaiveAR" in self.algorithms and not 1 <= a.naive_p <= n - 2:
            raise ConfigError("naive_p must be in [1, n_episodes-2]")
        for dom in self.domains:
            self.env_config(dom, 0.0, 0)  # rejects unknown domain params early

    def env_config(self, domain: str, speed: float, seed: int) -> EnvConfig:
        return EnvConfig(domain, speed=speed, seed=seed, horizon_cap=self.horizon_cap,
                         params=dict(self.domain_params.get(domain, {})))

    def policies(self, env: EnvConfig) -> tuple[Policy, Policy]:
        pi_id, beta_id = default_policies(env)
        return make_policy(self.pi_preset or pi_id, env), make_policy(self.beta_preset or beta_id, env)

    def to_dict(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["algo"] = {f.name: getattr(self.algo, f.name) for f in fields(self.algo)}
        d["domains"], d["speeds"], d["algorithms"] = list(self.domains), list(self.speeds), list(self.algorithms)
        return d

    @classmethod
    def from_profile(cls, profile: str = "desk", **overrides: Any) -> "ExperimentConfig":
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        base = dict(PROFILES[profile])
        algo = dict(base.pop("algo"))
        algo.update(overrides.pop("algo", {}) or {})
        base.update(overrides)
        return cls(algo=AlgoParams(**algo), **base)


# ------------------------------------------------------------------ seeds

def trial_seed(base_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(base_seed, spawn_key=(trial,))


def _env_seed(ss: np.random.SeedSequence) -> int:
    lo, hi = ss.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def _streams(ts: np.random.SeedSequence) -> tuple[np.random.SeedSequence, np.random.SeedSequence, int]:
    """(episode stream, clone stream, env seed) for one trial."""
    episodes, clones, env = ts.spawn(3)
    return episodes, clones, _env_seed(env)


# ------------------------------------------------------------ collection

def collect(env_config: EnvConfig, beta: Policy, n: int, seed: Any = None,
            pis: Sequence[Policy] = ()) -> tuple[est.Dataset, bytes]:
    """Run ``beta`` for ``n`` episodes; return the dataset and a snapshot of M_{n+1}.

    Episode k uses the k-th child of ``seed`` (default: the config seed).
    ``pis`` are evaluation policies checked for bounded ratios before any work.
    """
    for pi in pis:
        if not math.isfinite(support_ratio_bound(pi, beta)):
            raise est.SupportError(f"{pi.name} takes actions that {beta.name} never takes")
    ss = seed if isinstance(seed, np.random.SeedSequence) else \
        np.random.SeedSequence(env_config.seed if seed is None else seed)
    state = env_create(env_config)
    episodes = []
    for child in ss.spawn(n) if n else ():
        history, state = run_episode(state, beta, child)
        episodes.append(history)
    return est.Dataset(episodes), snapshot(state)


def ground_truth(snap: bytes | EnvState, pi: Policy, L: int, n_future_clones: int,
                 seed: Any) -> tuple[float, float]:
    """Mean and standard error over clones of the return summed over the next L episodes."""
    if L < 1 or n_future_clones < 1:
        raise ValueError("L and n_future_clones must be positive")
    blob = snap if isinstance(snap, (bytes, bytearray)) else snapshot(snap)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    totals = np.empty(n_future_clones)
    for c, clone_seed in enumerate(ss.spawn(n_future_clones)):
        state = restore(blob)
        total = 0.0
        for child in clone_seed.spawn(L):
            history, state = run_episode(state, pi, child)
            total += history.ret
        totals[c] = total
    if np.all(totals == totals[0]):  # includes the single-clone case
        return float(totals[0]), 0.0
    return float(np.mean(totals)), float(np.std(totals, ddof=1) / math.sqrt(n_future_clones))


# ---------------------------------------------------------------- results

@dataclass(frozen=True)
class ResultRow:
    domain: str
    speed: float
    algorithm: str
    trial: int
    predicted: float
    truth: float
    error: float
    flags: str = ""
    variant: str = ""

    @property
    def ok(self) -> bool:
        return math.isfinite(self.predicted)

    def key(self) -> tuple:
        return (self.domain, self.speed, self.variant, self.algorithm, self.trial)


@dataclass(frozen=True)
class SummaryRow:
    domain: str
    speed: float
    algorithm: str
    abs_bias: float
    mse: float
    se_bias: float
    se_mse: float
    n_ok: int
    n_failed: int
    variant: str = ""


def _fmt(x: float) -> str:
    return repr(float(x))


def _stable_seed(*parts: Any) -> int:
    return zlib.crc32("|".join(str(p) for p in parts).encode())


def bootstrap_se(values: np.ndarray, stat, reps: int, seed: int) -> float:
    if len(values) < 2:
        return float("nan")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(values), size=(reps, len(values)))
    return float(np.std([stat(values[i]) for i in idx], ddof=1))


def aggregate(rows: Iterable[ResultRow], base_seed: int = 0) -> list[SummaryRow]:
    """abs_bias = |mean error|, mse = mean squared error, bootstrap SEs, over non-failed rows."""
    cells: dict[tuple, list[ResultRow]] = {}
    for r in sorted(rows, key=ResultRow.key):
        cells.setdefault((r.domain, r.speed, r.variant, r.algorithm), []).append(r)
    out = []
    for (domain, speed, variant, algorithm), rs in cells.items():
        err = np.array([r.error for r in rs if r.ok])
        n_ok, n_failed = len(err), len(rs) - len(err)
        if n_ok:
            abs_bias = abs(float(np.mean(err)))
            mse = float(np.mean(err ** 2))
            seed = _stable_seed(base_seed, domain, speed, variant, algorithm)
            se_bias = bootstrap_se(err, np.mean, BOOTSTRAP_REPS, seed)
            se_mse = bootstrap_se(err, lambda e: np.mean(e ** 2), BOOTSTRAP_REPS, seed + 1)
        else:
            abs_bias = mse = se_bias = se_mse = float("nan")
        out.append(SummaryRow(domain, speed, algorithm, abs_bias, mse, se_bias, se_mse, n_ok, n_failed, variant))
    return out


@dataclass(frozen=True, eq=False)
class SweepResult:
    rows: tuple[ResultRow, ...]
    summary: tuple[SummaryRow, ...]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SweepResult) and self.results_csv() == other.results_csv() \
            and self.summary_csv() == other.summary_csv()

    def select(self, domain: str, speed: float, algorithm: str, variant: str = "") -> list[ResultRow]:
        return [r for r in self.rows if (r.domain, r.speed, r.algorithm, r.variant)
                == (domain, float(speed), algorithm, variant)]

    def errors(self, domain: str, speed: float, algorithm: str, variant: str = "") -> np.ndarray:
        """Per-trial errors ordered by trial (NaN for failed cells)."""
        return np.array([r.error for r in self.select(domain, speed, algorithm, variant)])

    def cell(self, domain: str, speed: float, algorithm: str, variant: str = "") -> SummaryRow:
        for s in self.summary:
            if (s.domain, s.speed, s.algorithm, s.variant) == (domain, float(speed), algorithm, variant):
                return s
        raise KeyError((domain, speed, algorithm, variant))

    @property
    def has_variants(self) -> bool:
        return any(r.variant for r in self.rows)

    def results_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        extra = ["variant"] if self.has_variants else []
        w.writerow(RESULTS_HEADER + extra)
        for r in self.rows:
            w.writerow([r.domain, _fmt(r.speed), r.algorithm, r.trial, _fmt(r.predicted), _fmt(r.truth),
                        _fmt(r.error), r.flags] + ([r.variant] if extra else []))
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        extra = ["variant"] if self.has_variants else []
        w.writerow(SUMMARY_HEADER + extra)
        for s in self.summary:
            w.writerow([s.domain, _fmt(s.speed), s.algorithm, _fmt(s.abs_bias), _fmt(s.mse), _fmt(s.se_bias),
                        _fmt(s.se_mse), s.n_ok, s.n_failed] + ([s.variant] if extra else []))
        return buf.getvalue()

    def write(self, out_dir: str | Path, results_name: str = "results.csv",
              summary_name: str = "summary.csv") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rp, sp = out / results_name, out / summary_name
        rp.write_text(self.results_csv())
        sp.write_text(self.summary_csv())
        return rp, sp


# ------------------------------------------------------------------ cells

@dataclass(frozen=True)
class Cell:
    domain: str
    speed: float
    trial: int


def _failure_tag(exc: BaseException) -> str:
    cause = exc.__cause__ or exc
    taxonomy = getattr(cause, "taxonomy", None)
    if taxonomy:
        return f"failed:{taxonomy}"
    return f"failed:{type(cause).__name__}"


def _predict_all(config: ExperimentConfig, series: est.PerformanceSeries,
                 variants: Sequence[tuple[str, AlgoParams]]) -> list[tuple[str, str, float, str]]:
    out = []
    for variant, hyper in variants:
        for algorithm in config.algorithms:
            try:
                fc = predict(algorithm, series, None, hyper, config.L)
                out.append((variant, algorithm, fc.total, ";".join(fc.flags)))
            except ForecastError as exc:
                out.append((variant, algorithm, float("nan"), _failure_tag(exc)))
    return out


def run_cell(config: ExperimentConfig, cell: Cell,
             variants: Sequence[tuple[str, AlgoParams]] | None = None,
             truth_first: bool = False) -> list[ResultRow]:
    """Collect, predict and compute ground truth for one (domain, speed, trial).

    Predictions see only the dataset; ground truth sees only the snapshot.
    ``truth_first`` swaps their order (used to check for leakage).
    """
    variants = list(variants) if variants is not None else [("", config.algo)]
    episodes_ss, clones_ss, env_seed = _streams(trial_seed(config.base_seed, cell.trial))
    env = config.env_config(cell.domain, cell.speed, env_seed)
    pi, beta = config.policies(env)
    tag = ""
    truth = float("nan")
    predictions: list[tuple[str, str, float, str]] = []
    try:
        dataset, snap = collect(env, beta, config.n_episodes, episodes_ss, pis=[pi])
    except Exception as exc:  # environment/policy failure: every algorithm fails this cell
        tag = _failure_tag(exc)
        predictions = [(v, a, float("nan"), tag) for v, _ in variants for a in config.algorithms]
    else:
        def forecasts() -> list[tuple[str, str, float, str]]:
            try:
                series = est.build_performance_series(dataset, pi)
            except est.EstimatorError as exc:
                return [(v, a, float("nan"), _failure_tag(exc)) for v, _ in variants for a in config.algorithms]
            return _predict_all(config, series, variants)

        if truth_first:
            truth = ground_truth(snap, pi, config.L, config.n_future_clones, clones_ss)[0]
            predictions = forecasts()
        else:
            predictions = forecasts()
            truth = ground_truth(snap, pi, config.L, config.n_future_clones, clones_ss)[0]
    rows = []
    for variant, algorithm, predicted, flags in predictions:
        error = predicted - truth if math.isfinite(predicted) else float("nan")
        rows.append(ResultRow(cell.domain, cell.speed, algorithm, cell.trial, predicted, truth, error, flags, variant))
    return rows


def _run_cell_args(args: tuple) -> list[ResultRow]:
    return run_cell(*args)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        env = os.environ.get("OPEN_NS_JOBS", "").strip()
        jobs = int(env) if env else 1
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return jobs


def _cells(config: ExperimentConfig) -> list[Cell]:
    return [Cell(d, s, t) for d in config.domains for s in config.speeds for t in range(config.n_trials)]


def _execute(config: ExperimentConfig, variants: Sequence[tuple[str, AlgoParams]] | None,
             jobs: int | None) -> SweepResult:
    cells = _cells(config)
    jobs = resolve_jobs(jobs)
    tasks = [(config, c, variants) for c in cells]
    if jobs == 1 or len(tasks) == 1:
        chunks = [_run_cell_args(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_cell_args, tasks))
    rows = sorted((r for chunk in chunks for r in chunk), key=ResultRow.key)
    return SweepResult(tuple(rows), tuple(aggregate(rows, config.base_seed)))


def run_sweep(config: ExperimentConfig, jobs: int | None = None) -> SweepResult:
    """Every (domain, speed, trial) cell, every algorithm; deterministic given ``base_seed``."""
    return _execute(config, None, jobs)


def ablation_sweep(config: ExperimentConfig, param: str, values: Sequence[int],
                   jobs: int | None = None) -> SweepResult:
    """run_sweep with one hyper-parameter varied; datasets and truths are shared across values.

    Rows are labelled ``variant = "<param>=<value>"``; a single value gives
    exactly the run_sweep rows (with the same label attached).
    """
    if param not in ABLATION_PARAMS:
        raise ConfigError(f"ablation parameter must be one of {ABLATION_PARAMS}, got {param!r}")
    if not values:
        raise ConfigError("ablation needs at least one value")
    variants = []
    for v in values:
        hyper = replace(config.algo, **{param: int(v)})
        replace(config, algo=hyper)  # validates the value against n_episodes
        variants.append((f"{param}={int(v)}", hyper))
    return _execute(config, variants, jobs)


# ----------------------------------------------------------------- stats

def sign_test_increase(before: np.ndarray, after: np.ndarray) -> tuple[int, int, float]:
    """One-sided sign test that |after| exceeds |before| trial by trial.

    Returns (increases, non-tied pairs, p-value) with the exact binomial tail.
    """
    a, b = np.abs(np.asarray(before, dtype=float)), np.abs(np.asarray(after, dtype=float))
    ok = np.isfinite(a) & np.isfinite(b) & (a != b)
    k, n = int(np.sum(b[ok] > a[ok])), int(np.sum(ok))
    p = sum(math.comb(n, j) for j in range(k, n + 1)) / 2 ** n if n else 1.0
    return k, n, p


def bootstrap_mse_less(err_a: np.ndarray, err_b: np.ndarray, reps: int = 2000, seed: int = 0) -> float:
    """Fraction of paired bootstrap resamples in which MSE(a) < MSE(b)."""
    a, b = np.asarray(err_a, dtype=float), np.asarray(err_b, dtype=float)
    ok = np.isfinite(a) & np.isfinite(b)
    a, b = a[ok] ** 2, b[ok] ** 2
    if not len(a):
        return 0.0
    idx = np.random.default_rng(seed).integers(0, len(a), size=(reps, len(a)))
    return float(np.mean(a[idx].mean(axis=1) < b[idx].mean(axis=1)))


# ------------------------------------------------------------------- demo

@dataclass(frozen=True, eq=False)
class DemoResult:
    """Arrays behind the three demo panels (episode numbers are 1-based)."""

    n: int
    true_j: np.ndarray          # J_i(pi) for i = 1..n+L; past under beta's history, future under pi
    j_hat: np.ndarray           # PDIS estimates, i = 1..n
    denoised_index: np.ndarray  # episodes carrying a stage-1 denoised value
    denoised: np.ndarray
    forecast: np.ndarray        # OPEN, i = n+1..n+L
    flags: tuple[str, ...] = ()

    @staticmethod
    def _slope(y: np.ndarray) -> float:
        x = np.arange(len(y), dtype=float)
        return float(np.polyfit(x, y, 1)[0])

    @property
    def past_slope(self) -> float:
        """Least-squares slope through the raw estimates."""
        return self._slope(self.j_hat)

    @property
    def forecast_slope(self) -> float:
        return self._slope(self.forecast)

    def residual_sd(self) -> tuple[float, float]:
        """(sd of denoised - J, sd of raw estimate - J) over the denoised episodes."""
        truth = self.true_j[self.denoised_index - 1]
        return (float(np.std(self.denoised - truth)),
                float(np.std(self.j_hat[self.denoised_index - 1] - truth)))


def _true_performance(state: EnvState, pi: Policy, clones: int, seed: np.random.SeedSequence) -> float:
    dom = describe_domain(state)
    exact = getattr(dom, "expected_return", None)
    if exact is not None:
        return float(exact(state.latent, pi))
    blob = snapshot(state)
    return float(np.mean([run_episode(restore(blob), pi, s)[0].ret for s in seed.spawn(clones)]))


def describe_domain(state: EnvState):
    from .envs import describe
    return describe(state.config)


def figure_demo(config: ExperimentConfig, domain: str = "RoboToyActive", speed: float = 2.0,
                trial: int = 0) -> DemoResult:
    """Collect under beta, fit OPEN, and record the per-episode truth around the deployment boundary."""
    episodes_ss, clones_ss, env_seed = _streams(trial_seed(config.base_seed, trial))
    env = config.env_config(domain, speed, env_seed)
    pi, beta = config.policies(env)
    state = env_create(env)
    past_truth_ss, future_ss = clones_ss.spawn(2)
    histories, truth = [], []
    for child, tseed in zip(episodes_ss.spawn(config.n_episodes), past_truth_ss.spawn(config.n_episodes)):
        truth.append(_true_performance(state, pi, config.n_future_clones, tseed))
        history, state = run_episode(state, beta, child)
        histories.append(history)
    blob = snapshot(state)
    future = np.zeros(config.L)
    for clone in future_ss.spawn(config.n_future_clones):
        st = restore(blob)
        for k, child in enumerate(clone.spawn(config.L)):
            h, st = run_episode(st, pi, child)
            future[k] += h.ret
    future /= config.n_future_clones
    series = est.build_performance_series(histories, pi)
    fc = predict(Algorithm.OPEN, series, None, config.algo, config.L)
    model = fc.extras["model"]
    problem = fc.extras["problem"]
    return DemoResult(config.n_episodes, np.concatenate([truth, future]), series.j_hat.copy(),
                      np.asarray(problem.stage1_index), np.asarray(model.denoised), np.asarray(fc.per_episode),
                      fc.flags)
