"""Ordinary Kriging: anisotropic Gaussian kernel, likelihood-based
hyperparameter search, marginal and joint prediction, and incremental
conditioning over a fixed candidate pool.

The model is the classic noise-free interpolating formulation: constant trend,
correlation matrix factorized once per fit, predictions carrying the
trend-estimation uncertainty term. ``PoolPosterior`` caches the triangular
solves for a whole candidate pool so pairwise covariances and rank-one
conditioning (hypothesized responses) stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

DUPLICATE_TOL = 1e-12
DEFAULT_THETA_BOUNDS = (1e-2, 10.0)
DEFAULT_JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class KrigingError(Exception):
    """Base class for surrogate construction failures."""


class DuplicatePoints(KrigingError):
    """Two training points coincide within tolerance."""


class SingularCorrelation(KrigingError):
    """Correlation matrix stayed non-positive-definite after jitter escalation."""


# ----------------------------------------------------------------------------
# Kernel
# ----------------------------------------------------------------------------

def weighted_sqdist(a: np.ndarray, b: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """sum_n theta_n (a_in - b_jn)^2, accumulated per dimension."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    out = np.zeros((a.shape[0], b.shape[0]))
    for n in range(a.shape[1]):
        out += theta[n] * np.subtract.outer(a[:, n], b[:, n]) ** 2
    return out


def kernel(x_i, x_j, theta) -> float:
    """Anisotropic Gaussian correlation prod_n exp(-theta_n (x_i - x_j)_n^2)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if (theta <= 0.0).any():
        raise ValueError("kernel requires strictly positive theta")
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    x_j = np.atleast_1d(np.asarray(x_j, dtype=float))
    if x_i.shape != x_j.shape or x_i.size != theta.size:
        raise ValueError("point/theta dimension mismatch")
    return float(np.exp(-np.sum(theta * (x_i - x_j) ** 2)))


# ----------------------------------------------------------------------------
# Data containers
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignOfExperiment:
    """Evaluated training points and their true responses."""

    points: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        y = np.atleast_1d(np.asarray(self.responses, dtype=float))
        if pts.shape[0] != y.shape[0]:
            raise ValueError("points and responses must have equal length")
        if pts.shape[0] < 2:
            raise ValueError("need at least 2 training points")
        if not (np.isfinite(pts).all() and np.isfinite(y).all()):
            raise ValueError("training data must be finite")
        d2 = weighted_sqdist(pts, pts, np.ones(pts.shape[1]))
        np.fill_diagonal(d2, np.inf)
        if d2.min() <= DUPLICATE_TOL**2:
            raise DuplicatePoints("training points coincide within tolerance")
        pts = pts.copy()
        pts.setflags(write=False)
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "responses", y)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def with_point(self, x, y: float) -> "DesignOfExperiment":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size != self.dimension:
            raise ValueError("dimension mismatch")
        dist2 = np.sum((self.points - x) ** 2, axis=1)
        if dist2.min() <= DUPLICATE_TOL**2:
            raise DuplicatePoints("new point coincides with an existing training point")
        return DesignOfExperiment(
            np.vstack([self.points, x]), np.append(self.responses, float(y))
        )


@dataclass(frozen=True)
class MarginalPrediction:
    """Per-point mean and variance of the surrogate (vectorized over points)."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.atleast_1d(np.asarray(self.variance, dtype=float))
        if mean.shape != var.shape:
            raise ValueError("mean and variance must have equal shape")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @classmethod
    def of(cls, mean: float, variance: float) -> "MarginalPrediction":
        return cls(np.array([float(mean)]), np.array([float(variance)]))

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def __len__(self) -> int:
        return self.mean.size

    def __getitem__(self, i) -> "MarginalPrediction":
        return MarginalPrediction(np.atleast_1d(self.mean[i]), np.atleast_1d(self.variance[i]))


@dataclass(frozen=True)
class JointPrediction:
    """Mean vector and full covariance matrix at a point set."""

    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class KrigingModel:
    """Fitted ordinary-Kriging surrogate.

    Stores the lower Cholesky factor of the regularized correlation matrix and
    the triangular-solve byproducts every prediction needs (solved trend and
    response vectors), so predictions never refactorize.
    """

    doe: DesignOfExperiment
    theta: np.ndarray
    beta: float
    gamma: np.ndarray
    sigma2: float
    chol_r: np.ndarray
    jitter: float
    bounds: tuple[float, float]
    li_one: np.ndarray   # L^-1 1
    li_y: np.ndarray     # L^-1 Y
    z_trend: np.ndarray  # R^-1 1
    s_f: float           # 1' R^-1 1

    @property
    def m(self) -> int:
        return self.doe.m

    @property
    def dimension(self) -> int:
        return self.doe.dimension


# ----------------------------------------------------------------------------
# Fitting
# ----------------------------------------------------------------------------

def _factorize(r: np.ndarray, jitters) -> tuple[np.ndarray, float]:
    for jit in jitters:
        try:
            return cholesky(r + jit * np.eye(r.shape[0]), lower=True), jit
        except LinAlgError:
            continue
    raise SingularCorrelation(
        f"correlation matrix not positive definite up to jitter {jitters[-1]:g}"
    )


def _assemble(doe: DesignOfExperiment, theta: np.ndarray, bounds, jitters) -> KrigingModel:
    r = np.exp(-weighted_sqdist(doe.points, doe.points, theta))
    chol_l, jit = _factorize(r, jitters)
    li_one = solve_triangular(chol_l, np.ones(doe.m), lower=True)
    li_y = solve_triangular(chol_l, doe.responses, lower=True)
    s_f = float(li_one @ li_one)
    beta = float(li_one @ li_y) / s_f
    resid = li_y - beta * li_one
    sigma2 = float(resid @ resid) / doe.m
    gamma = solve_triangular(chol_l, resid, lower=True, trans="T")
    z_trend = solve_triangular(chol_l, li_one, lower=True, trans="T")
    return KrigingModel(
        doe=doe, theta=theta.copy(), beta=beta, gamma=gamma, sigma2=max(sigma2, 0.0),
        chol_r=chol_l, jitter=jit, bounds=(float(bounds[0]), float(bounds[1])),
        li_one=li_one, li_y=li_y, z_trend=z_trend, s_f=s_f,
    )


def reduced_likelihood(doe: DesignOfExperiment, theta, jitters=DEFAULT_JITTERS) -> float:
    """log of the fit objective |R|^(1/m) sigma^2 at fixed theta.

    Computed in log space so nearly singular correlation matrices cannot
    underflow the determinant; +inf when the factorization fails outright.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    r = np.exp(-weighted_sqdist(doe.points, doe.points, theta))
    try:
        chol_l, _ = _factorize(r, jitters)
    except SingularCorrelation:
        return np.inf
    li_one = solve_triangular(chol_l, np.ones(doe.m), lower=True)
    li_y = solve_triangular(chol_l, doe.responses, lower=True)
    beta = float(li_one @ li_y) / float(li_one @ li_one)
    resid = li_y - beta * li_one
    sigma2 = float(resid @ resid) / doe.m
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol_l))))
    if sigma2 <= 0.0:
        return -np.inf
    return logdet / doe.m + float(np.log(sigma2))


def _pattern_search(objective, t0, lo, hi, tol, budget):
    """Hooke-Jeeves pattern search with box clipping; returns (t, f, evals)."""
    t = np.clip(t0, lo, hi)
    f_best = objective(t)
    evals = 1
    step = 1.0
    d = t.size
    while step >= tol and evals < budget:
        trial = t.copy()
        f_trial = f_best
        for k in range(d):
            for sign in (1.0, -1.0):
                cand = trial.copy()
                cand[k] = np.clip(cand[k] + sign * step, lo, hi)
                if cand[k] == trial[k]:
                    continue
                f_cand = objective(cand)
                evals += 1
                if f_cand < f_trial:
                    trial, f_trial = cand, f_cand
                    break
                if evals >= budget:
                    break
            if evals >= budget:
                break
        if f_trial < f_best:
            # pattern move: keep stepping along the improving direction
            direction = trial - t
            t, f_best = trial, f_trial
            while evals < budget:
                cand = np.clip(t + direction, lo, hi)
                if np.array_equal(cand, t):
                    break
                f_cand = objective(cand)
                evals += 1
                if f_cand < f_best:
                    t, f_best = cand, f_cand
                else:
                    break
        else:
            step *= 0.5
    return t, f_best, evals


def fit(
    doe: DesignOfExperiment,
    bounds=DEFAULT_THETA_BOUNDS,
    n_starts: int = 8,
    max_evals_per_start: int = 200,
    tol: float = 1e-4,
    extra_starts=None,
    jitters=DEFAULT_JITTERS,
) -> KrigingModel:
    """Fit by minimizing |R|^(1/m) sigma^2 over the kernel hyperparameters.

    Multi-start Hooke-Jeeves pattern search in log(theta); starts sit on a
    log grid across ``bounds`` (same value in every dimension), optionally
    augmented by warm starts from a previous fit.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (0.0 < lo < hi):
        raise ValueError("theta bounds must satisfy 0 < lo < hi")
    d = doe.dimension
    log_lo, log_hi = np.log(lo), np.log(hi)

    cache: dict[tuple, float] = {}

    def objective(t):
        key = tuple(np.round(t, 12))
        if key not in cache:
            cache[key] = reduced_likelihood(doe, np.exp(np.asarray(t)), jitters)
        return cache[key]

    starts = [np.full(d, g) for g in np.linspace(log_lo, log_hi, n_starts)]
    for theta0 in extra_starts or []:
        theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
        starts.append(np.log(np.clip(theta0, lo, hi)))

    best_t, best_f = None, np.inf
    for t0 in starts:
        t, f, _ = _pattern_search(objective, t0, log_lo, log_hi, tol, max_evals_per_start)
        if f < best_f or best_t is None:
            best_t, best_f = t, f
    return _assemble(doe, np.exp(best_t), (lo, hi), jitters)


def refit_with(model: KrigingModel, x_new, y: float, reoptimize: bool = False) -> KrigingModel:
    """Refit on the design augmented by one point.

    With ``reoptimize`` the full hyperparameter search reruns (warm-started at
    the current optimum); otherwise theta is held fixed and the Cholesky factor
    is extended by one row, with the trend, process variance and correlation
    weights recomputed on the augmented data.
    """
    new_doe = model.doe.with_point(x_new, y)
    if reoptimize:
        return fit(new_doe, bounds=model.bounds, extra_starts=[model.theta])

    x = np.atleast_1d(np.asarray(x_new, dtype=float))
    r_new = np.exp(-weighted_sqdist(model.doe.points, x[None, :], model.theta))[:, 0]
    w = solve_triangular(model.chol_r, r_new, lower=True)
    diag2 = 1.0 + model.jitter - float(w @ w)
    if diag2 < 1e-14:
        # escalate jitter via a fresh factorization at the same theta
        return _assemble(new_doe, model.theta, model.bounds, DEFAULT_JITTERS)

    m = model.m
    ldiag = np.sqrt(diag2)
    chol_l = np.zeros((m + 1, m + 1))
    chol_l[:m, :m] = model.chol_r
    chol_l[m, :m] = w
    chol_l[m, m] = ldiag
    li_one = np.append(model.li_one, (1.0 - w @ model.li_one) / ldiag)
    li_y = np.append(model.li_y, (float(y) - w @ model.li_y) / ldiag)
    s_f = float(li_one @ li_one)
    beta = float(li_one @ li_y) / s_f
    resid = li_y - beta * li_one
    sigma2 = float(resid @ resid) / (m + 1)
    gamma = solve_triangular(chol_l, resid, lower=True, trans="T")
    z_trend = solve_triangular(chol_l, li_one, lower=True, trans="T")
    return KrigingModel(
        doe=new_doe, theta=model.theta, beta=beta, gamma=gamma, sigma2=max(sigma2, 0.0),
        chol_r=chol_l, jitter=model.jitter, bounds=model.bounds,
        li_one=li_one, li_y=li_y, z_trend=z_trend, s_f=s_f,
    )


# ----------------------------------------------------------------------------
# Prediction
# ----------------------------------------------------------------------------

def _as_points(model: KrigingModel, points) -> np.ndarray:
    pts = getattr(points, "points", points)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[1] != model.dimension:
        raise ValueError(
            f"query dimension {pts.shape[1]} does not match model dimension {model.dimension}"
        )
    return pts


def predict_marginal(model: KrigingModel, points) -> MarginalPrediction:
    """Mean and mean-square error per point, including trend uncertainty."""
    pts = _as_points(model, points)
    r_u = np.exp(-weighted_sqdist(model.doe.points, pts, model.theta))
    mean = model.beta + r_u.T @ model.gamma
    w = solve_triangular(model.chol_r, r_u, lower=True)
    u = model.z_trend @ r_u - 1.0
    var = model.sigma2 * (1.0 + u * u / model.s_f - np.einsum("ij,ij->j", w, w))
    return MarginalPrediction(mean, np.maximum(var, 0.0))


def predict_joint(model: KrigingModel, points) -> JointPrediction:
    """Mean vector and full posterior covariance matrix at a point set."""
    pts = _as_points(model, points)
    r_u = np.exp(-weighted_sqdist(model.doe.points, pts, model.theta))
    mean = model.beta + r_u.T @ model.gamma
    w = solve_triangular(model.chol_r, r_u, lower=True)
    u = model.z_trend @ r_u - 1.0
    r_qq = np.exp(-weighted_sqdist(pts, pts, model.theta))
    cov = model.sigma2 * (r_qq + np.outer(u, u) / model.s_f - w.T @ w)
    cov = 0.5 * (cov + cov.T)
    return JointPrediction(mean, cov)


# ----------------------------------------------------------------------------
# Pool posterior with incremental conditioning
# ----------------------------------------------------------------------------

class PoolPosterior:
    """Joint Gaussian posterior of a model over a fixed candidate pool.

    Caches the triangular solves once (O(m N) memory) so single covariance
    entries, covariance columns and whole blocks come cheap, and supports
    functional rank-one conditioning on hypothesized responses: conditioning
    holds the process variance fixed, which makes the update exact Gaussian
    conditioning of the joint prediction.
    """

    def __init__(self, model: KrigingModel, points, _shared=None):
        self.model = model
        if _shared is not None:
            (self.points, self.wt, self.u, self._kernel_cache) = _shared
            return
        pts = _as_points(model, points)
        r_u = np.exp(-weighted_sqdist(model.doe.points, pts, model.theta))
        self.points = pts
        self.wt = np.ascontiguousarray(
            solve_triangular(model.chol_r, r_u, lower=True).T
        )  # (N, m)
        self.u = model.z_trend @ r_u - 1.0
        self._kernel_cache: dict = {}
        self.mean = model.beta + r_u.T @ model.gamma
        base_var = model.sigma2 * (
            1.0 + self.u * self.u / model.s_f - np.einsum("ij,ij->i", self.wt, self.wt)
        )
        self.var = np.maximum(base_var, 0.0)
        self.dvecs: tuple[np.ndarray, ...] = ()

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def marginal(self) -> MarginalPrediction:
        return MarginalPrediction(self.mean, self.var)

    # -- covariance access -----------------------------------------------

    def prior_sqdist_block(self, rows, cols) -> np.ndarray:
        """theta-weighted squared distances between pool subsets (screening)."""
        return weighted_sqdist(self.points[rows], self.points[cols], self.model.theta)

    def cov_block(self, rows, cols) -> np.ndarray:
        """Posterior covariance block between two pool index subsets."""
        m = self.model
        k = np.exp(-self.prior_sqdist_block(rows, cols))
        block = m.sigma2 * (
            k
            + np.outer(self.u[rows], self.u[cols]) / m.s_f
            - self.wt[rows] @ self.wt[cols].T
        )
        for d in self.dvecs:
            block -= np.outer(d[rows], d[cols])
        return block

    def cov_column(self, index: int) -> np.ndarray:
        """Posterior covariances between one candidate and the whole pool."""
        m = self.model
        col = m.sigma2 * (
            np.exp(-weighted_sqdist(self.points, self.points[index][None, :], m.theta))[:, 0]
            + self.u * self.u[index] / m.s_f
            - self.wt @ self.wt[index]
        )
        for d in self.dvecs:
            col -= d * d[index]
        return col

    def joint(self, indices=None) -> JointPrediction:
        idx = np.arange(self.n) if indices is None else np.asarray(indices)
        cov = self.cov_block(idx, idx)
        cov = 0.5 * (cov + cov.T)
        return JointPrediction(self.mean[idx].copy(), cov)

    # -- conditioning -------------------------------------------------------

    def mean_shift_vector(self, index: int) -> np.ndarray:
        """d mean'/d y for conditioning on candidate ``index``: cov column / var."""
        var_star = self.var[index]
        if var_star <= 0.0:
            raise KrigingError("cannot condition on a zero-variance candidate")
        return self.cov_column(index) / var_star

    def condition(self, index: int, y: float) -> "PoolPosterior":
        """Posterior after observing response ``y`` at pool candidate ``index``.

        Returns a new view sharing the O(m N) caches; mean/variance vectors and
        the rank-one covariance downdate stack are copied.
        """
        var_star = self.var[index]
        if var_star <= 0.0:
            raise KrigingError("cannot condition on a zero-variance candidate")
        col = self.cov_column(index)
        d = col / np.sqrt(var_star)
        out = PoolPosterior(
            self.model, None, _shared=(self.points, self.wt, self.u, self._kernel_cache)
        )
        out.mean = self.mean + col * ((float(y) - self.mean[index]) / var_star)
        out.var = np.maximum(self.var - d * d, 0.0)
        out.dvecs = self.dvecs + (d,)
        return out
