"""Candidate-scoring (learning) functions and point selection.

Covers the classic zoo (U, EFF, H, LIF, REIF/REIF2, FNEIF) and the two
variance-reduction strategies: the uncorrelated-indicator credit (equal to the
indicator variance, hence ranking-equivalent to U) and the correlated credit
Gamma that sums indicator covariances over the pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._normal import SQRT_2PI, norm_cdf, norm_pdf
from .bernoulli import BernoulliField, ConsistencyError, sigma_b2
from .kriging import KrigingModel, MarginalPrediction, PoolPosterior

FOLDED_VAR_TOL = -1e-12


class SelectionRule(Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


class StrategyKind(Enum):
    U = "u"
    EFF = "eff"
    H = "h"
    LIF = "lif"
    REIF = "reif"
    REIF2 = "reif2"
    FNEIF = "fneif"
    OPT_NCO = "opt_nco"
    OPT_WCO = "opt_wco"

    @classmethod
    def parse(cls, name) -> "StrategyKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown strategy {name!r}; expected one of: {valid}") from None

    @property
    def selection(self) -> SelectionRule:
        return SelectionRule.MINIMIZE if self is StrategyKind.U else SelectionRule.MAXIMIZE

    @property
    def needs_density(self) -> bool:
        return self in (StrategyKind.LIF, StrategyKind.REIF2)

    @property
    def needs_correlation(self) -> bool:
        return self is StrategyKind.OPT_WCO


@dataclass(frozen=True)
class ScoreVector:
    values: np.ndarray
    strategy: StrategyKind

    def __post_init__(self):
        object.__setattr__(self, "values", np.atleast_1d(np.asarray(self.values, dtype=float)))

    def __len__(self) -> int:
        return self.values.size


def _split(preds: MarginalPrediction):
    mean = preds.mean
    sd = preds.std
    ok = sd > 0.0
    safe_sd = np.where(ok, sd, 1.0)
    return mean, sd, ok, safe_sd


# ----------------------------------------------------------------------------
# Classic learning functions
# ----------------------------------------------------------------------------

def score_u(preds: MarginalPrediction) -> ScoreVector:
    """U = |mu|/sigma, the (inverse) margin against a sign flip; minimized.

    Zero-variance candidates score +inf so they are never selected."""
    mean, sd, ok, safe_sd = _split(preds)
    values = np.where(ok, np.abs(mean) / safe_sd, np.inf)
    return ScoreVector(values, StrategyKind.U)


def score_eff(preds: MarginalPrediction) -> ScoreVector:
    """Expected feasibility with tolerance band 2 sigma around the limit state."""
    mean, sd, ok, safe_sd = _split(preds)
    t = mean / safe_sd
    zc, zm, zp = -t, -2.0 - t, 2.0 - t
    values = (
        mean * (2.0 * norm_cdf(zc) - norm_cdf(zm) - norm_cdf(zp))
        - sd * (2.0 * norm_pdf(zc) - norm_pdf(zm) - norm_pdf(zp))
        + 2.0 * sd * (norm_cdf(zp) - norm_cdf(zm))
    )
    return ScoreVector(np.where(ok, values, 0.0), StrategyKind.EFF)


def score_h(preds: MarginalPrediction) -> ScoreVector:
    """Entropy-flavoured proximity score, even in the predicted mean."""
    mean, sd, ok, safe_sd = _split(preds)
    t = mean / safe_sd
    band = norm_cdf(2.0 - t) - norm_cdf(-2.0 - t)
    tails = 0.5 * (2.0 * sd - mean) * norm_pdf(2.0 - t) + 0.5 * (2.0 * sd + mean) * norm_pdf(
        2.0 + t
    )
    values = np.abs(np.log(SQRT_2PI * sd + 0.5) * band - tails)
    return ScoreVector(np.where(ok, values, 0.0), StrategyKind.H)


def _upper_gaussian_moments(a: np.ndarray, order: int) -> list[np.ndarray]:
    """I_m(a) = int_a^inf t^m exp(-t^2/2) dt for m = 0..order, by recurrence."""
    e = np.exp(-0.5 * a * a)
    moments = [SQRT_2PI * norm_cdf(-a)]
    if order >= 1:
        moments.append(e)
    for m in range(2, order + 1):
        moments.append(a ** (m - 1) * e + (m - 1) * moments[m - 2])
    return moments


def score_lif(preds: MarginalPrediction, densities, dimension: int) -> ScoreVector:
    """Least-improvement score: sign-flip probability times input density times
    the order-d moment of the predictive distribution."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    mean, sd, ok, safe_sd = _split(preds)
    f = np.broadcast_to(np.asarray(densities, dtype=float), mean.shape)
    u = np.abs(mean) / safe_sd
    if dimension % 2 == 0:
        bracket = mean ** dimension
        for m in range(1, dimension // 2 + 1):
            # (2m-1)!! sigma^{2m}: the even Gaussian central moments
            double_fact = math.prod(range(2 * m - 1, 0, -2))
            bracket = bracket + (
                math.comb(dimension, 2 * m)
                * mean ** (dimension - 2 * m)
                * sd ** (2 * m)
                * double_fact
            )
    else:
        a = mean / safe_sd
        moments = _upper_gaussian_moments(a, dimension)
        bracket = np.zeros_like(mean)
        for m in range(dimension + 1):
            bracket = bracket + math.comb(dimension, m) * mean ** (dimension - m) * sd**m * moments[m]
        bracket = np.sqrt(2.0 / np.pi) * bracket
    values = norm_cdf(-u) * f * bracket
    return ScoreVector(np.where(ok, values, 0.0), StrategyKind.LIF)


def folded_mean(mean, sd):
    """Mean of |Y| for Y ~ N(mean, sd^2); equals |mean| when sd = 0."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    ok = sd > 0.0
    safe_sd = np.where(ok, sd, 1.0)
    t = mean / safe_sd
    out = np.sqrt(2.0 / np.pi) * sd * np.exp(-0.5 * t * t) + mean * (2.0 * norm_cdf(t) - 1.0)
    out = np.where(ok, out, np.abs(mean))
    return out if out.ndim else float(out)


def folded_std(mean, sd):
    """Std of |Y|: sqrt(mean^2 + sd^2 - folded_mean^2)."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    mf = folded_mean(mean, sd)
    rad = mean * mean + sd * sd - mf * mf
    if np.min(rad, initial=0.0) < FOLDED_VAR_TOL * np.max(
        mean * mean + sd * sd, initial=1.0
    ):
        raise ConsistencyError("folded-normal variance negative beyond tolerance")
    out = np.sqrt(np.maximum(rad, 0.0))
    return out if out.ndim else float(out)


def score_reif(preds: MarginalPrediction) -> ScoreVector:
    """2 sigma minus the folded-normal mean of the prediction."""
    values = 2.0 * preds.std - folded_mean(preds.mean, preds.std)
    return ScoreVector(values, StrategyKind.REIF)


def score_reif2(preds: MarginalPrediction, densities) -> ScoreVector:
    f = np.broadcast_to(np.asarray(densities, dtype=float), preds.mean.shape)
    values = (2.0 * preds.std - folded_mean(preds.mean, preds.std)) * f
    return ScoreVector(values, StrategyKind.REIF2)


def score_fneif(preds: MarginalPrediction) -> ScoreVector:
    """Folded-normal expected improvement, with its wide/narrow branch split
    at 2 sigma_f vs mu_f."""
    mean, sd, ok, safe_sd = _split(preds)
    mf = folded_mean(mean, sd)
    sf = folded_std(mean, sd)

    z2p = (2.0 * sf - mean) / safe_sd
    z2m = (-2.0 * sf - mean) / safe_sd
    window = norm_cdf(z2p) - norm_cdf(z2m)

    zfp = (mf - mean) / safe_sd
    zfm = (-mf - mean) / safe_sd
    zfs = (mf + mean) / safe_sd
    wide = (
        2.0 * sf * window
        + mf * (norm_cdf(zfp) - norm_cdf(zfm) - norm_cdf(z2p) + norm_cdf(z2m) - 1.0)
        + sd * (norm_cdf(zfs) + norm_cdf(zfp))
        + mean * (norm_cdf(zfs) - norm_cdf(zfp))
    )
    z2s = (2.0 * sf + mean) / safe_sd
    narrow = (
        2.0 * sf * window
        - mf
        + sd * (norm_cdf(z2s) + norm_cdf(z2p))
        + mean * (norm_cdf(z2s) - norm_cdf(z2p))
    )
    values = np.where(2.0 * sf >= mf, wide, narrow)
    return ScoreVector(np.where(ok, values, 0.0), StrategyKind.FNEIF)


# ----------------------------------------------------------------------------
# Variance-reduction strategies
# ----------------------------------------------------------------------------

def score_opt_nco(preds: MarginalPrediction) -> ScoreVector:
    """Per-candidate indicator variance Phi(-U) Phi(U): the variance-reduction
    credit when indicator correlations are ignored."""
    return ScoreVector(sigma_b2(preds), StrategyKind.OPT_NCO)


def score_opt_wco(
    model: KrigingModel = None,
    pool=None,
    bern: BernoulliField | None = None,
    r_min: float = 1e-6,
    max_active: int = 4000,
) -> ScoreVector:
    """Correlated variance-reduction credit Gamma = 2 * rowsum - sigma_b^2,
    streamed row by row over the active candidates."""
    if bern is None:
        if model is None or pool is None:
            raise ValueError("need either a BernoulliField or (model, pool)")
        pts = getattr(pool, "points", pool)
        bern = BernoulliField(PoolPosterior(model, pts), r_min=r_min, max_active=max_active)
    return ScoreVector(bern.gamma_scores(), StrategyKind.OPT_WCO)


# ----------------------------------------------------------------------------
# Selection
# ----------------------------------------------------------------------------

def select(scores: ScoreVector, excluded=()) -> int:
    """Arg-best candidate honouring the strategy's selection rule.

    Ties break to the lowest index; excluded candidates never win."""
    values = scores.values.astype(float, copy=True)
    if np.isnan(values).any():
        raise ValueError("scores contain NaN")
    mask = np.zeros(values.size, dtype=bool)
    excluded = np.asarray(list(excluded) if not isinstance(excluded, np.ndarray) else excluded)
    if excluded.size:
        if excluded.dtype == bool:
            mask |= excluded
        else:
            mask[excluded.astype(int)] = True
    if mask.all():
        raise ValueError("all candidates are excluded")
    if scores.strategy.selection is SelectionRule.MINIMIZE:
        values[mask] = np.inf
        best = int(np.argmin(values))
        if not np.isfinite(values[best]):
            # every admissible candidate scored +inf: fall back to first admissible
            best = int(np.flatnonzero(~mask)[0])
        return best
    values[mask] = -np.inf
    return int(np.argmax(values))


def compute_scores(
    strategy: StrategyKind,
    preds: MarginalPrediction,
    densities=None,
    dimension: int | None = None,
    bern: BernoulliField | None = None,
) -> ScoreVector:
    """Dispatch a strategy over one prediction set."""
    strategy = StrategyKind.parse(strategy)
    if strategy is StrategyKind.U:
        return score_u(preds)
    if strategy is StrategyKind.EFF:
        return score_eff(preds)
    if strategy is StrategyKind.H:
        return score_h(preds)
    if strategy is StrategyKind.LIF:
        if densities is None or dimension is None:
            raise ValueError("LIF needs candidate densities and the input dimension")
        return score_lif(preds, densities, dimension)
    if strategy is StrategyKind.REIF:
        return score_reif(preds)
    if strategy is StrategyKind.REIF2:
        if densities is None:
            raise ValueError("REIF2 needs candidate densities")
        return score_reif2(preds, densities)
    if strategy is StrategyKind.FNEIF:
        return score_fneif(preds)
    if strategy is StrategyKind.OPT_NCO:
        return score_opt_nco(preds)
    if bern is None:
        raise ValueError("OPT_WCO needs a BernoulliField")
    return score_opt_wco(bern=bern)
