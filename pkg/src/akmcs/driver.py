"""The outer active-learning loop: fit, estimate, select/enrich, evaluate,
stop; plus replicated comparison studies and plot-grid emission.
"""

from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bench, estimator, learning, rv_model
from .bernoulli import BernoulliField, sigma_b2
from .enrich import EXCLUSION_TOL, FantasyPolicy, select_batch
from .kriging import DesignOfExperiment, PoolPosterior, fit, predict_marginal
from .learning import StrategyKind
from .rng import STREAM_DOE, STREAM_MMAE, STREAM_REPLICATION, derive_seed, substream

STOP_ESTIMATOR_COV = "estimator_cov"
STOP_CLASSIC = "classic_criterion"
STOP_MAX_ITERATIONS = "max_iterations"

DEFAULT_EVAL_BUDGET = 2000  # single-point equivalents, safety valve


@dataclass(frozen=True)
class RunConfig:
    """Everything one run depends on; two equal configs give equal reports."""

    limit_state: str = "rastrigin"
    limit_state_params: dict = field(default_factory=dict)
    n_mcs: int = 10_000
    n_doe: int = 12
    pool_origin: str = "lhs"          # "lhs" | "mc"
    strategy: str = "u"
    policy: str = "mmse"              # fantasy policy for n_para > 1
    mmae_samples: int = 15
    n_para: int = 1
    threshold: float = 1e-3
    classic_stop: bool = False
    correlation_mode: str = "auto"    # "auto" | "mi" | "mc"
    theta_bounds: tuple = (1e-2, 10.0)
    r_min: float = 1e-6
    wco_max_active: int = 4000
    max_iterations: int | None = None
    seed: int = 0
    reference: object = "pool"        # "pool" | float | None
    mle_starts: int = 8
    mle_multistart_every: int = 25
    grid_bounds: tuple = (-5.0, 5.0)

    def __post_init__(self):
        if self.n_mcs < 1 or self.n_doe < 1 or self.n_para < 1:
            raise ValueError("n_mcs, n_doe and n_para must all be >= 1")
        if self.n_doe >= self.n_mcs:
            raise ValueError("initial design must be smaller than the candidate pool")
        if self.threshold <= 0.0:
            raise ValueError("stop threshold must be > 0")
        if self.pool_origin not in ("lhs", "mc"):
            raise ValueError("pool_origin must be 'lhs' or 'mc'")
        if self.correlation_mode not in ("auto", "mi", "mc"):
            raise ValueError("correlation_mode must be 'auto', 'mi' or 'mc'")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        StrategyKind.parse(self.strategy)
        FantasyPolicy(kind=self.policy, mmae_samples=self.mmae_samples)
        if self.reference is not None and self.reference != "pool":
            if not isinstance(self.reference, (int, float)) or not 0.0 < float(self.reference) < 1.0:
                raise ValueError("reference must be 'pool', a probability in (0,1), or null")

    @property
    def resolved_max_iterations(self) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return max(1, math.ceil(DEFAULT_EVAL_BUDGET / self.n_para))


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    n_call: int
    pf_hat: float
    variance: float
    cov_estimator: float
    cov_mcs: float
    selected_indices: tuple
    selected_points: tuple
    selected_scores: tuple
    wall_time: float


@dataclass
class RunReport:
    records: list
    final_pf: float
    final_variance: float
    final_cov: float
    stop_cause: str
    n_call: int
    n_iterations: int
    eps: float | None
    reference_pf: float | None
    pool_cov_warning: bool
    strategy: str
    seed: int
    config: dict
    wall_time: float
    final_model: object = field(repr=False, compare=False, default=None)

    def to_summary_dict(self) -> dict:
        """Deterministic summary payload (no timing, no model object)."""
        return {
            "schema_version": 1,
            "strategy": self.strategy,
            "pf_hat": self.final_pf,
            "variance": self.final_variance,
            "cov_estimator": self.final_cov,
            "n_call": self.n_call,
            "n_iterations": self.n_iterations,
            "stop_cause": self.stop_cause,
            "eps": self.eps,
            "reference_pf": self.reference_pf,
            "pool_cov_warning": self.pool_cov_warning,
            "seed": self.seed,
            "config": self.config,
        }


def _proximity_excluded(points: np.ndarray, targets: np.ndarray) -> set:
    """Pool indices within the exclusion tolerance of any target point."""
    out: set[int] = set()
    for t in np.atleast_2d(targets):
        near = np.flatnonzero(np.sum((points - t) ** 2, axis=1) <= EXCLUSION_TOL**2)
        out.update(int(k) for k in near)
    return out


def _classic_stop(strategy: StrategyKind, preds, admissible: np.ndarray) -> bool:
    if not admissible.any():
        return True
    sub = preds[admissible]
    if strategy is StrategyKind.EFF:
        return float(np.max(learning.score_eff(sub).values)) <= 0.001
    return float(np.min(learning.score_u(sub).values)) >= 2.0


def run(config: RunConfig) -> RunReport:
    """Execute the full adaptive loop for one configuration."""
    t_start = time.perf_counter()
    strategy = StrategyKind.parse(config.strategy)
    policy = FantasyPolicy(kind=config.policy, mmae_samples=config.mmae_samples)
    correlation_mode = config.correlation_mode
    if correlation_mode == "auto":
        correlation_mode = "mc" if strategy.needs_correlation else "mi"

    with bench.make_limit_state(config.limit_state, **config.limit_state_params) as ls:
        spec = rv_model.RandomVariableSpec.standard_normal(ls.dimension)
        sampler = rv_model.lhs_sample if config.pool_origin == "lhs" else rv_model.mc_sample
        pool = sampler(spec, config.n_mcs, config.seed)
        densities = (
            rv_model.joint_pdf(spec, pool.points) if strategy.needs_density else None
        )

        doe_rng = substream(config.seed, STREAM_DOE)
        doe_idx = doe_rng.choice(config.n_mcs, size=config.n_doe, replace=False)
        doe_points = pool.points[doe_idx]
        doe = DesignOfExperiment(doe_points, ls.evaluate(doe_points))
        excluded = {int(i) for i in doe_idx}
        excluded |= _proximity_excluded(pool.points, doe_points)

        model = fit(doe, bounds=config.theta_bounds, n_starts=config.mle_starts)

        records: list[IterationRecord] = []
        stop_cause = STOP_MAX_ITERATIONS
        stats = None
        max_iter = config.resolved_max_iterations

        for iteration in range(1, max_iter + 2):
            it_start = time.perf_counter()
            posterior = PoolPosterior(model, pool.points)
            preds = posterior.marginal()
            pf = estimator.pf_probabilistic(preds)
            bern = None
            if strategy.needs_correlation or correlation_mode == "mc":
                bern = BernoulliField(
                    posterior, r_min=config.r_min, max_active=config.wco_max_active
                )
            variance = (
                estimator.var_mc(bern) if correlation_mode == "mc" else estimator.var_mi(preds)
            )
            cov_est = float(np.sqrt(variance) / pf) if pf > 0.0 else np.inf
            cov_pool = estimator.cov_mcs(pf, config.n_mcs) if 0.0 < pf < 1.0 else np.inf
            stats = estimator.EstimatorStats(
                pf_hat=pf,
                variance=variance,
                cov_estimator=cov_est,
                cov_mcs=cov_pool,
                mode="probabilistic",
                correlation_mode=correlation_mode,
            )

            admissible = np.ones(config.n_mcs, dtype=bool)
            admissible[list(excluded)] = False
            if config.classic_stop:
                if _classic_stop(strategy, preds, admissible):
                    stop_cause = STOP_CLASSIC
                    break
            elif estimator.stop_check(pf, variance, config.threshold):
                stop_cause = STOP_ESTIMATOR_COV
                break
            if iteration > max_iter or not admissible.any():
                stop_cause = STOP_MAX_ITERATIONS
                break

            first_scores = learning.compute_scores(
                strategy, preds, densities=densities, dimension=ls.dimension, bern=bern
            )
            batch = select_batch(
                model,
                pool,
                config.n_para,
                policy,
                strategy,
                excluded=excluded,
                densities=densities,
                dimension=ls.dimension,
                r_min=config.r_min,
                max_active=config.wco_max_active,
                rng=substream(config.seed, STREAM_MMAE, iteration),
                posterior=posterior,
                first_scores=first_scores,
            )
            responses = ls.evaluate(batch.points)
            for x, y in zip(batch.points, responses):
                doe = doe.with_point(x, y)
            excluded.update(batch.indices)
            excluded |= _proximity_excluded(pool.points, batch.points)

            multistart = config.mle_multistart_every > 0 and (
                iteration % config.mle_multistart_every == 0
            )
            model = fit(
                doe,
                bounds=config.theta_bounds,
                n_starts=config.mle_starts if multistart else 0,
                extra_starts=[model.theta],
            )

            records.append(
                IterationRecord(
                    iteration=iteration,
                    n_call=ls.n_calls,
                    pf_hat=pf,
                    variance=variance,
                    cov_estimator=cov_est,
                    cov_mcs=cov_pool,
                    selected_indices=batch.indices,
                    selected_points=tuple(tuple(map(float, p)) for p in batch.points),
                    selected_scores=batch.scores,
                    wall_time=time.perf_counter() - it_start,
                )
            )

        reference_pf = None
        eps = None
        if config.reference == "pool":
            try:
                g_true = ls.evaluate_reference(pool.points)
                reference_pf = float(np.mean(g_true <= 0.0))
            except bench.ExternalEvaluatorFailure:
                reference_pf = None
        elif config.reference is not None:
            reference_pf = float(config.reference)
        if reference_pf is not None and reference_pf > 0.0 and stats is not None:
            eps = abs(reference_pf - stats.pf_hat) / reference_pf

        return RunReport(
            records=records,
            final_pf=stats.pf_hat,
            final_variance=stats.variance,
            final_cov=stats.cov_estimator,
            stop_cause=stop_cause,
            n_call=ls.n_calls,
            n_iterations=len(records),
            eps=eps,
            reference_pf=reference_pf,
            pool_cov_warning=estimator.pool_cov_warning(stats.cov_mcs),
            strategy=strategy.value,
            seed=config.seed,
            config=config_to_dict(config),
            wall_time=time.perf_counter() - t_start,
            final_model=model,
        )


# ----------------------------------------------------------------------------
# Comparison studies
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    strategy: str
    mean_n_call: float
    cov_n_call: float
    mean_eps: float
    cov_eps: float
    replications: int
    failures: int
    max_iteration_stops: int = 0


def replication_config(config: RunConfig, rep: int) -> RunConfig:
    """The same study with the replication's derived seed."""
    return dataclasses.replace(config, seed=derive_seed(config.seed, STREAM_REPLICATION, rep))


def _compare_job(config: RunConfig):
    try:
        report = run(config)
        return (report.n_call, report.eps, report.stop_cause, None)
    except Exception as exc:  # recorded per cell, not fatal to the study
        return (None, None, None, f"{type(exc).__name__}: {exc}")


def _mean_cov(values) -> tuple[float, float]:
    values = np.asarray([v for v in values if v is not None], dtype=float)
    if values.size == 0:
        return (float("nan"), float("nan"))
    mean = float(values.mean())
    if values.size < 2 or mean == 0.0:
        return (mean, 0.0)
    return (mean, float(values.std(ddof=1) / abs(mean)))


def compare(configs, replications: int, workers: int = 1) -> list[ComparisonRow]:
    """Run each configuration ``replications`` times on derived seeds and
    aggregate call counts and errors; per-run failures are recorded, not fatal."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    jobs = [
        replication_config(cfg, rep) for cfg in configs for rep in range(replications)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_compare_job, jobs))
    else:
        results = [_compare_job(job) for job in jobs]

    rows = []
    for i, cfg in enumerate(configs):
        chunk = results[i * replications : (i + 1) * replications]
        n_calls = [r[0] for r in chunk]
        epss = [r[1] for r in chunk]
        failures = sum(1 for r in chunk if r[3] is not None)
        max_stops = sum(1 for r in chunk if r[2] == STOP_MAX_ITERATIONS)
        mean_n, cov_n = _mean_cov(n_calls)
        mean_e, cov_e = _mean_cov(epss)
        rows.append(
            ComparisonRow(
                strategy=StrategyKind.parse(cfg.strategy).value,
                mean_n_call=mean_n,
                cov_n_call=cov_n,
                mean_eps=mean_e,
                cov_eps=cov_e,
                replications=replications,
                failures=failures,
                max_iteration_stops=max_stops,
            )
        )
    return rows


# ----------------------------------------------------------------------------
# Grid emission for limit-state plots
# ----------------------------------------------------------------------------

def grid_dump(model, bounds, resolution: int) -> np.ndarray:
    """Row-major (x1, x2, mean, std, sigma_b^2) records on a square grid."""
    if model.dimension != 2:
        raise ValueError("grid dumps are defined for 2-dimensional models only")
    if resolution < 2:
        raise ValueError("resolution must be >= 2 per axis")
    lo, hi = float(bounds[0]), float(bounds[1])
    axis = np.linspace(lo, hi, resolution)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    preds = predict_marginal(model, pts)
    return np.column_stack([pts, preds.mean, preds.std, sigma_b2(preds)])


# ----------------------------------------------------------------------------
# Config (de)serialization
# ----------------------------------------------------------------------------

def config_to_dict(config: RunConfig) -> dict:
    out = dataclasses.asdict(config)
    out["theta_bounds"] = list(config.theta_bounds)
    out["grid_bounds"] = list(config.grid_bounds)
    return out


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    if "theta_bounds" in data:
        data["theta_bounds"] = tuple(data["theta_bounds"])
    if "grid_bounds" in data:
        data["grid_bounds"] = tuple(data["grid_bounds"])
    return RunConfig(**data)
