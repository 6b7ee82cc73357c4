"""Failure-probability estimators on the candidate pool, estimator variance
under independent and correlated indicators, and the stopping rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bernoulli import BernoulliField, failure_probability, sigma_b2
from .kriging import MarginalPrediction

DEFAULT_STOP_THRESHOLD = 1e-3
POOL_COV_WARN = 0.05


@dataclass(frozen=True)
class EstimatorStats:
    """One iteration's estimate: P_f, estimator variance and both COVs."""

    pf_hat: float
    variance: float
    cov_estimator: float
    cov_mcs: float
    mode: str              # "deterministic" | "probabilistic"
    correlation_mode: str  # "mi" | "mc"


def _require(preds: MarginalPrediction) -> MarginalPrediction:
    if len(preds) == 0:
        raise ValueError("empty prediction set")
    return preds


def pf_deterministic(preds: MarginalPrediction) -> float:
    """Fraction of candidates whose predicted mean classifies as failure."""
    _require(preds)
    return float(np.mean(preds.mean <= 0.0))


def pf_probabilistic(preds: MarginalPrediction) -> float:
    """Pool average of the per-candidate failure probability Phi(-mu/sigma)."""
    _require(preds)
    return float(np.mean(failure_probability(preds.mean, preds.variance)))


def var_mi(preds: MarginalPrediction) -> float:
    """Estimator variance with mutually independent indicators:
    (1/N^2) sum Phi(-U) Phi(U)."""
    _require(preds)
    return float(np.sum(sigma_b2(preds))) / float(len(preds)) ** 2


def var_mc(bern: BernoulliField) -> float:
    """Estimator variance with correlated indicators: the full double sum of
    the indicator covariance matrix, streamed row by row."""
    return bern.estimator_variance()


def cov_mcs(pf: float, n: int) -> float:
    """Coefficient of variation of a crude Monte Carlo estimate of pf on an
    n-sample pool; +inf when pf is degenerate (0 or 1)."""
    if not 0.0 <= pf <= 1.0:
        raise ValueError("pf must lie in [0, 1]")
    if pf in (0.0, 1.0):
        return np.inf
    return float(np.sqrt((1.0 - pf) / (pf * n)))


def pool_cov_warning(cov: float) -> bool:
    return cov > POOL_COV_WARN


def stop_check(pf: float, variance: float, threshold: float = DEFAULT_STOP_THRESHOLD) -> bool:
    """True when the estimator's coefficient of variation drops to threshold."""
    if pf < 0.0:
        raise ValueError("pf must be nonnegative")
    if pf == 0.0:
        return False
    return bool(np.sqrt(variance) / pf <= threshold)
