"""Input random-variable model: independent normal marginals, candidate pools
drawn by Latin hypercube or crude Monte Carlo sampling, and the joint density.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._normal import norm_pdf, norm_ppf
from .rng import STREAM_POOL, substream

_P_CLIP = 1e-15  # keep inverse-CDF arguments strictly inside (0, 1)


@dataclass(frozen=True)
class RandomVariableSpec:
    """Independent normal marginals: per-dimension mean and standard deviation."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.atleast_1d(np.asarray(self.means, dtype=float))
        stds = np.atleast_1d(np.asarray(self.stds, dtype=float))
        if means.ndim != 1 or stds.shape != means.shape:
            raise ValueError("means and stds must be 1-D arrays of equal length")
        if means.size < 1:
            raise ValueError("dimension must be >= 1")
        if not (np.isfinite(means).all() and np.isfinite(stds).all()):
            raise ValueError("means and stds must be finite")
        if (stds <= 0.0).any():
            raise ValueError("every standard deviation must be > 0")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @classmethod
    def standard_normal(cls, dimension: int) -> "RandomVariableSpec":
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        return cls(np.zeros(dimension), np.ones(dimension))

    @property
    def dimension(self) -> int:
        return self.means.size


@dataclass(frozen=True)
class SamplePool:
    """An immutable candidate pool of size N in d dimensions."""

    points: np.ndarray
    origin: str  # "lhs" | "mc"
    seed: int = field(default=0)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError("points must be a non-empty N x d matrix")
        if not np.isfinite(points).all():
            raise ValueError("points must be finite")
        points = points.copy()
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


def lhs_sample(spec: RandomVariableSpec, n: int, seed: int, midpoint: bool = False) -> SamplePool:
    """Latin hypercube sample of size ``n``.

    Each dimension is split into ``n`` equiprobable strata; exactly one point
    lands in each stratum, placed uniformly at random inside it (or at the
    stratum midpoint when ``midpoint`` is set), then mapped through the
    marginal inverse CDF. Deterministic given ``seed``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = substream(seed, STREAM_POOL)
    d = spec.dimension
    x = np.empty((n, d))
    for k in range(d):
        strata = rng.permutation(n)
        offset = np.full(n, 0.5) if midpoint else rng.random(n)
        p = np.clip((strata + offset) / n, _P_CLIP, 1.0 - _P_CLIP)
        x[:, k] = spec.means[k] + spec.stds[k] * norm_ppf(p)
    return SamplePool(points=x, origin="lhs", seed=seed)


def mc_sample(spec: RandomVariableSpec, n: int, seed: int) -> SamplePool:
    """Crude Monte Carlo sample: n i.i.d. draws from the joint distribution."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = substream(seed, STREAM_POOL)
    x = spec.means + spec.stds * rng.standard_normal((n, spec.dimension))
    return SamplePool(points=x, origin="mc", seed=seed)


def joint_pdf(spec: RandomVariableSpec, x) -> float | np.ndarray:
    """Joint density: product of the marginal normal densities.

    Accepts a single point of shape (d,) or a batch of shape (N, d).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != spec.dimension:
        raise ValueError(f"expected points of dimension {spec.dimension}, got {pts.shape[1]}")
    z = (pts - spec.means) / spec.stds
    dens = np.prod(norm_pdf(z) / spec.stds, axis=1)
    return float(dens[0]) if single else dens
