"""Sequential multi-point enrichment with fantasy responses.

Between real evaluations, the surrogate is conditioned on hypothesized
responses at the points already picked this round, so that one iteration can
select a whole batch. The post-pick indicator statistics are estimated under a
squared-error, absolute-error or 0-1 loss: the Bayes estimates are the mean
(three-node quadrature over the predictive distribution), the median (sample
median) and the mode (plug in the predictive mean). The carried chain state
always conditions on the predictive mean, which is simultaneously the mean,
median and mode of the Gaussian predictive distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._normal import norm_pdf
from .bernoulli import BernoulliField
from .kriging import KrigingModel, MarginalPrediction, PoolPosterior
from .learning import ScoreVector, StrategyKind, compute_scores, select

EXCLUSION_TOL = 1e-10
GL3_POSITIONS = (-np.sqrt(0.6), 0.0, np.sqrt(0.6))
GL3_WEIGHTS = (5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0)

POLICY_KINDS = ("mmse", "mmae", "mape")


@dataclass(frozen=True)
class FantasyPolicy:
    """How the post-pick indicator statistics are estimated mid-batch."""

    kind: str = "mmse"
    quad_points: int = 3
    mmae_samples: int = 15

    def __post_init__(self):
        kind = str(self.kind).strip().lower()
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.quad_points != 3:
            raise ValueError("only the three-node quadrature is supported")
        if self.mmae_samples < 3 or self.mmae_samples % 2 == 0:
            raise ValueError("mmae_samples must be odd and >= 3")

    @classmethod
    def parse(cls, value, mmae_samples: int = 15) -> "FantasyPolicy":
        if isinstance(value, cls):
            return value
        return cls(kind=str(value), mmae_samples=mmae_samples)


@dataclass(frozen=True)
class EnrichmentBatch:
    """Points picked in one outer iteration, with their mid-batch fantasies."""

    indices: tuple
    points: np.ndarray
    fantasies: tuple
    scores: tuple
    n_para: int

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("batch indices must be distinct")
        if self.n_para < 1:
            raise ValueError("n_para must be >= 1")


def quad_nodes(mu: float, sigma: float) -> list[tuple[float, float]]:
    """Three-node Gauss-Legendre rule over [mu - 3 sigma, mu + 3 sigma].

    Weights carry the interval half-length 3*sigma, so the rule integrates
    quintic polynomials over the interval exactly. A zero-sigma interval
    degenerates to a single unit-weight node at mu.
    """
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return [(float(mu), 1.0)]
    half = 3.0 * sigma
    return [(float(mu + half * t), float(w * half)) for t, w in zip(GL3_POSITIONS, GL3_WEIGHTS)]


def _mmse_weights(mu: float, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature responses and normalized weights for the mean estimate.

    Raw weights are node weight times the predictive density at the node;
    normalizing by their sum makes a response-independent quantity map to
    itself exactly.
    """
    nodes = quad_nodes(mu, sigma)
    ys = np.array([y for y, _ in nodes])
    if sigma == 0.0:
        return ys, np.array([1.0])
    raw = np.array([w * norm_pdf((y - mu) / sigma) / sigma for y, w in nodes])
    return ys, raw / raw.sum()


def _strategy_scores(
    state: PoolPosterior,
    strategy: StrategyKind,
    mean_variants,
    combine,
    densities,
    dimension,
    r_min,
    max_active,
) -> ScoreVector:
    """Scores on one posterior state whose mean vector may take several values
    (fantasy branches); ``combine`` folds the per-branch results."""
    strategy = StrategyKind.parse(strategy)
    if strategy.needs_correlation:
        field = BernoulliField(state, r_min=r_min, max_active=max_active)
        active, rows, sb2 = field.rowsums_for(mean_variants)
        rows_c = combine(rows)
        sb2_c = combine(sb2)
        gamma = sb2_c.copy()
        gamma[active] = 2.0 * rows_c - sb2_c[active]
        return ScoreVector(gamma, StrategyKind.OPT_WCO)
    stacked = np.stack(
        [
            compute_scores(
                strategy,
                MarginalPrediction(mv, state.var),
                densities=densities,
                dimension=dimension,
            ).values
            for mv in mean_variants
        ]
    )
    return ScoreVector(combine(stacked), strategy)


def _fantasy_step(
    state: PoolPosterior,
    index: int,
    policy: FantasyPolicy,
    strategy: StrategyKind,
    densities,
    dimension,
    r_min,
    max_active,
    rng,
) -> tuple[ScoreVector, PoolPosterior]:
    """Condition on the hypothesized response at ``index`` and return the
    scores for the next pick plus the carried state."""
    y_center = float(state.mean[index])
    var_star = float(state.var[index])
    if var_star <= 0.0:
        # the surrogate already pins this response; conditioning is a no-op
        scores = _strategy_scores(
            state, strategy, [state.mean], lambda a: a[0], densities, dimension, r_min, max_active
        )
        return scores, state

    shift = state.mean_shift_vector(index)
    new_state = state.condition(index, y_center)  # mean surface unchanged

    if policy.kind == "mape":
        variants = [new_state.mean]
        combine = lambda a: a[0]
    elif policy.kind == "mmse":
        ys, weights = _mmse_weights(y_center, np.sqrt(var_star))
        variants = [new_state.mean + shift * (y - y_center) for y in ys]
        combine = lambda a, w=weights: np.tensordot(w, a, axes=1)
    else:  # mmae
        if rng is None:
            raise ValueError("MMAE needs a random generator for its response samples")
        ys = y_center + np.sqrt(var_star) * rng.standard_normal(policy.mmae_samples)
        variants = [new_state.mean + shift * (y - y_center) for y in ys]
        combine = lambda a: np.median(a, axis=0)

    scores = _strategy_scores(
        new_state, strategy, variants, combine, densities, dimension, r_min, max_active
    )
    return scores, new_state


def fantasy_score(
    model: KrigingModel,
    pool,
    x_star: int,
    policy: FantasyPolicy,
    strategy,
    densities=None,
    dimension: int | None = None,
    r_min: float = 1e-6,
    max_active: int = 4000,
    rng=None,
    posterior: PoolPosterior | None = None,
) -> ScoreVector:
    """Score vector after hypothetically enriching pool candidate ``x_star``."""
    pts = getattr(pool, "points", pool)
    state = posterior if posterior is not None else PoolPosterior(model, pts)
    policy = FantasyPolicy.parse(policy)
    scores, _ = _fantasy_step(
        state,
        int(x_star),
        policy,
        StrategyKind.parse(strategy),
        densities,
        dimension,
        r_min,
        max_active,
        rng,
    )
    return scores


def select_batch(
    model: KrigingModel,
    pool,
    n_para: int,
    policy: FantasyPolicy,
    strategy,
    excluded=(),
    densities=None,
    dimension: int | None = None,
    r_min: float = 1e-6,
    max_active: int = 4000,
    rng=None,
    posterior: PoolPosterior | None = None,
    first_scores: ScoreVector | None = None,
) -> EnrichmentBatch:
    """Pick ``n_para`` distinct candidates, refreshing scores between picks by
    conditioning on fantasy responses (the real evaluations happen outside).

    ``n_para`` = 1 degenerates to plain single-point selection and never
    touches the fantasy machinery.
    """
    if n_para < 1:
        raise ValueError("n_para must be >= 1")
    pts = getattr(pool, "points", pool)
    strategy = StrategyKind.parse(strategy)
    policy = FantasyPolicy.parse(policy)
    state = posterior if posterior is not None else PoolPosterior(model, pts)
    banned = {int(i) for i in excluded}
    if pts.shape[0] - len(banned) < n_para:
        raise ValueError("not enough admissible candidates for the requested batch")

    scores = first_scores
    if scores is None:
        scores = _strategy_scores(
            state, strategy, [state.mean], lambda a: a[0], densities, dimension, r_min, max_active
        )

    indices: list[int] = []
    fantasies: list[float] = []
    picked_scores: list[float] = []
    for j in range(n_para):
        idx = select(scores, banned)
        indices.append(idx)
        picked_scores.append(float(scores.values[idx]))
        fantasies.append(float(state.mean[idx]))
        banned.add(idx)
        near = np.flatnonzero(np.sum((pts - pts[idx]) ** 2, axis=1) <= EXCLUSION_TOL**2)
        banned.update(int(k) for k in near)
        if j + 1 < n_para:
            scores, state = _fantasy_step(
                state, idx, policy, strategy, densities, dimension, r_min, max_active, rng
            )
    return EnrichmentBatch(
        indices=tuple(indices),
        points=pts[np.array(indices, dtype=int)].copy(),
        fantasies=tuple(fantasies),
        scores=tuple(picked_scores),
        n_para=n_para,
    )
