"""Synthetic errors-in-variables AR(1) series with a known slope.

Latent performance follows J_{i+1} = theta J_i + c + eps_i.  The observed
estimate is J_i + eta_i and a second, independent reading J_i + zeta_i plays
the role of the instrument.  Used as an oracle for consistency checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import estimators as est


@dataclass(frozen=True)
class EivParams:
    theta: float = 0.95
    intercept: float = 0.5
    eps_sigma: float = 0.7     # innovation noise; stationary Var(J) = eps^2 / (1 - theta^2)
    eta_sigma: float = 2.0     # noise on the observed regressor
    zeta_sigma: float = 1.0    # noise on the instrument reading


@dataclass(frozen=True, eq=False)
class EivSample:
    latent: np.ndarray
    observed: np.ndarray
    instrument: np.ndarray
    eta: np.ndarray
    params: EivParams

    def series(self) -> est.PerformanceSeries:
        """On-policy view: rho = 1, G = j_hat = observed."""
        n = len(self.observed)
        ones = np.ones(n)
        return est.PerformanceSeries(self.observed, ones, self.observed,
                                     est.prefix_normalized(self.observed, ones))

    def problem(self, p: int = 1) -> est.RegressionProblem:
        """Two-stage rows with the independent reading as the (lagged) instrument."""
        return est.build_regression_targets(self.series(), p, z=self.instrument[:, None])


def generate(n: int, params: EivParams = EivParams(), seed=None) -> EivSample:
    rng = np.random.default_rng(seed)
    th, c = params.theta, params.intercept
    mean = c / (1 - th)
    sd = params.eps_sigma / np.sqrt(1 - th ** 2)
    J = np.empty(n)
    J[0] = mean + sd * rng.standard_normal()
    eps = params.eps_sigma * rng.standard_normal(n)
    for i in range(1, n):
        J[i] = th * J[i - 1] + c + eps[i]
    eta = params.eta_sigma * rng.standard_normal(n)
    zeta = params.zeta_sigma * rng.standard_normal(n)
    return EivSample(J, J + eta, J + zeta, eta, params)


def naive_asymptote(sample: EivSample) -> float:
    """(JJ'JJ + NN'NN)^-1 JJ'JJ theta on the realised sample, p = 1.

    JJ are the centred latent regressors J_1..J_{n-1} and NN the matching
    input noise, so the value is the attenuated slope the naive fit converges
    to on this very sample.
    """
    J = sample.latent[:-1] - sample.latent[:-1].mean()
    N = sample.eta[:-1] - sample.eta[:-1].mean()
    jj = float(J @ J)
    return jj / (jj + float(N @ N)) * sample.params.theta
