"""Weighted least squares, two-stage importance-weighted IV regression and Pro-WLS."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .estimators import EstimatorError, PerformanceSeries, RegressionProblem, normalize_weights

RIDGE = 1e-10
COND_DEGENERATE = 1e10


class RegressionError(ValueError):
    pass


def weighted_least_squares(X, y, w, *, ridge: float = RIDGE, penalty=None, return_info: bool = False):
    """argmin_c sum_i w_i (x_i . c - y_i)^2 + sum_j lam_j c_j^2.

    The ridge is scaled by the trace of the normal matrix ``A = X'WX`` and
    spread over the penalised columns in proportion to their own energy:
    ``lam_j = ridge * k * penalty_j * A_jj`` with ``k = sum(penalty)``.  This
    equals a trace-scaled ridge after standardising columns, so it is
    invariant to rescaling the weights or any single column, penalises
    directions shared by many collinear columns lightly and isolated noise
    columns heavily.  ``penalty`` (default all ones) can free a column such
    as the intercept by setting its entry to 0.  The system is solved as an
    augmented least-squares problem rather than via explicit normal equations.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != len(y) or len(y) != len(w):
        raise RegressionError(f"dimension mismatch: X{X.shape}, y{y.shape}, w{w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise RegressionError("weights must be finite and non-negative")
    if not np.sum(w) > 0:
        raise RegressionError("weights sum to zero")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise RegressionError("non-finite design or targets")
    k = X.shape[1]
    sw = np.sqrt(w)
    A = X * sw[:, None]
    b = y * sw
    energy = np.einsum("ij,ij->j", A, A)
    fallback = energy.mean() if energy.any() else float(np.sum(w))
    energy = np.where(energy > 0, energy, fallback)
    pen = np.ones(k) if penalty is None else np.asarray(penalty, dtype=float)
    lam = ridge * float(np.sum(pen)) * pen * energy
    if np.any(lam > 0):
        A = np.vstack([A, np.diag(np.sqrt(lam))])
        b = np.concatenate([b, np.zeros(k)])
    coef = np.linalg.lstsq(A, b, rcond=None)[0]
    if not return_info:
        return coef
    svx = np.linalg.svd(X * sw[:, None], compute_uv=False)
    cond = float(svx[0] / svx[-1]) if svx[-1] > 0 else float("inf")
    return coef, {"cond": cond, "degenerate": bool(cond > COND_DEGENERATE), "lambda": lam}


@dataclass(frozen=True, eq=False)
class ArModel:
    """Linear p-lag performance model.

    ``theta`` = [lag_1 .. lag_p, intercept] with lag_1 the most recent value.
    ``phi`` = stage-1 coefficients over the flattened instrument lags (+ intercept).
    """

    p: int
    theta: np.ndarray
    phi: np.ndarray | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)
    denoised: np.ndarray | None = None   # stage-1 fitted values, one per stage-1 row

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.p + 1,):
            raise RegressionError(f"theta must have p+1={self.p + 1} entries, got {theta.shape}")
        object.__setattr__(self, "theta", theta)
        if self.phi is not None:
            object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float))

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.theta)) and (self.phi is None or np.all(np.isfinite(self.phi))))

    def predict_next(self, lags_recent_first: np.ndarray) -> float:
        return float(np.dot(self.theta[:-1], lags_recent_first) + self.theta[-1])

    def to_json(self) -> str:
        return json.dumps({
            "kind": "ar",
            "p": self.p,
            "theta": [float(v) for v in self.theta],
            "phi": None if self.phi is None else [float(v) for v in self.phi],
            "diagnostics": _jsonable(self.diagnostics),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ArModel":
        d = json.loads(text)
        return cls(d["p"], np.array(d["theta"]), None if d["phi"] is None else np.array(d["phi"]),
                   d.get("diagnostics", {}))


def _jsonable(d: dict[str, Any]) -> dict[str, Any]:
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, float)):
            out[k] = float(v)
        elif isinstance(v, (tuple, list)):
            out[k] = list(v)
        else:
            out[k] = v
    return out


def _with_intercept(X: np.ndarray, intercept: bool) -> np.ndarray:
    return np.column_stack([X, np.ones(len(X))]) if intercept else X


def two_stage_iv_fit(problem: RegressionProblem, *, intercept: bool = True, ridge: float = RIDGE) -> ArModel:
    """Importance-weighted two-stage IV regression.

    Stage 1 regresses the stage-1 targets on lagged instruments (weights
    ``weights_stage1``); its fitted values are the denoised series.  Stage 2
    regresses the stage-2 targets on lags of the denoised series (weights
    ``weights_stage2``).
    """
    p = problem.p
    D1 = _with_intercept(problem.instruments, intercept)
    pen1 = None
    if intercept:
        pen1 = np.append(np.ones(D1.shape[1] - 1), 0.0)
    phi, info1 = weighted_least_squares(D1, problem.targets_stage1, problem.weights_stage1,
                                        ridge=ridge, penalty=pen1, return_info=True)
    denoised = D1 @ phi
    D2 = _with_intercept(denoised[problem.stage2_lags], intercept)
    pen2 = None
    if intercept:
        pen2 = np.append(np.ones(p), 0.0)
    theta, info2 = weighted_least_squares(D2, problem.targets_stage2, problem.weights_stage2,
                                          ridge=ridge, penalty=pen2, return_info=True)
    if not intercept:
        theta = np.append(theta, 0.0)
        phi = np.append(phi, 0.0)
    flags = []
    if info1["degenerate"]:
        flags.append("degenerate-stage1")
    if info2["degenerate"]:
        flags.append("weak-instrument")
    diagnostics = {"cond_stage1": info1["cond"], "cond_stage2": info2["cond"], "flags": tuple(flags)}
    return ArModel(p=p, theta=theta, phi=phi, diagnostics=diagnostics, denoised=denoised)


weighted_two_stage_iv_fit = two_stage_iv_fit


def simple_iv_problem(j_hat: np.ndarray, rho: np.ndarray, instrument: np.ndarray | None = None) -> RegressionProblem:
    """Unweighted single-lag IV problem with importance-corrected targets.

    Rows i = 2..n-1 (1-based) for both stages: stage 1 maps Z_{i-1} (default
    j_hat_{i-1}) to j_hat_i, stage 2 maps the denoised j_hat_i to
    rho_i j_hat_{i+1}; all weights uniform.
    """
    j_hat = np.asarray(j_hat, dtype=float)
    rho = np.asarray(rho, dtype=float)
    n = len(j_hat)
    if n < 3:
        raise EstimatorError("need at least 3 episodes")
    z = j_hat if instrument is None else np.asarray(instrument, dtype=float)
    rows = np.arange(1, n - 1)  # 0-based positions of i = 2..n-1
    m = len(rows)
    w = np.full(m, 1.0 / m)
    return RegressionProblem(
        p=1,
        instruments=z[rows - 1][:, None],
        targets_stage1=j_hat[rows].copy(),
        weights_stage1=w,
        stage2_lags=np.arange(m)[:, None],
        targets_stage2=rho[rows] * j_hat[rows + 1],
        weights_stage2=w.copy(),
        inputs=j_hat[rows][:, None],
        stage1_index=rows + 1,
        stage2_index=rows + 1,
    )


def closed_form_iv(z1, x2, x3, rho2=None) -> float:
    """(Z1' X2)^-1 (Z1' Lambda2 X3) for a scalar regressor and instrument."""
    z1, x2, x3 = (np.asarray(a, dtype=float).ravel() for a in (z1, x2, x3))
    lam = np.ones_like(x3) if rho2 is None else np.asarray(rho2, dtype=float).ravel()
    if not len(z1) == len(x2) == len(x3) == len(lam):
        raise RegressionError("closed_form_iv: length mismatch")
    denom = float(z1 @ x2)
    if denom == 0.0:
        raise RegressionError("instrument is orthogonal to the regressor (Z1'X2 = 0)")
    return float(z1 @ (lam * x3)) / denom


# --------------------------------------------------------------- Pro-WLS

@dataclass(frozen=True, eq=False)
class FourierModel:
    d: int
    coefficients: np.ndarray     # 2d+1: [1, sin(2 pi x), cos(2 pi x), ..., sin(2 pi d x), cos(2 pi d x)]
    n: int
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"kind": "fourier", "d": self.d, "n": self.n,
                           "coefficients": [float(c) for c in self.coefficients],
                           "diagnostics": _jsonable(self.diagnostics)}, sort_keys=True)


def fourier_features(x: np.ndarray, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = [np.ones_like(x)]
    for k in range(1, d + 1):
        cols.append(np.sin(2 * np.pi * k * x))
        cols.append(np.cos(2 * np.pi * k * x))
    return np.column_stack(cols)


def prowls_fit(series: PerformanceSeries, d: int, weights: np.ndarray | None = None,
               *, ridge: float = RIDGE) -> FourierModel:
    """Importance-weighted least squares of G_i on Fourier features of x = i/n."""
    n = len(series)
    if d < 0 or 2 * d + 1 >= n:
        raise RegressionError(f"Fourier basis of size {2 * d + 1} needs more than {n} episodes")
    w = normalize_weights(series.rho, "Pro-WLS") if weights is None else np.asarray(weights, dtype=float)
    x = np.arange(1, n + 1) / n
    penalty = np.append(0.0, np.ones(2 * d))  # constant term unpenalised
    coef, info = weighted_least_squares(fourier_features(x, d), series.G, w,
                                        ridge=ridge, penalty=penalty, return_info=True)
    return FourierModel(d, coef, n, {"cond": info["cond"]})


def prowls_forecast(model: FourierModel, n: int, L: int) -> np.ndarray:
    x = (n + np.arange(1, L + 1)) / n
    return fourier_features(x, model.d) @ model.coefficients
