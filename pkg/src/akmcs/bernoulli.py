"""Correlated failure indicators on the candidate pool.

Each candidate carries a Bernoulli failure indicator whose mean is the
probabilistic classification probability; indicators at different candidates
are correlated through the surrogate's joint posterior. This module computes
the indicator variance, the pairwise indicator covariance/correlation via a
bivariate normal orthant probability, and streaming row sums of the indicator
covariance matrix (never materializing N x N storage).

The orthant probability uses a two-node Gauss-Legendre rule on the
Drezner-Wesolowsky correlation integral after the sine substitution (the
substitution absorbs the 1/sqrt(1-r^2) factor, making the rule exact for zero
normalized means), with the complementary branch anchored at rho = +-1 for
high correlation and closed forms at rho in {-1, 0, +1}.
"""

from __future__ import annotations

import numpy as np

from ._normal import norm_cdf
from .kriging import MarginalPrediction, PoolPosterior

GL2_FRACTIONS = ((3.0 - np.sqrt(3.0)) / 6.0, (3.0 + np.sqrt(3.0)) / 6.0)
HIGH_RHO = 0.75
RHO_ONE_TOL = 1e-9
RHO_CONSISTENCY_TOL = 1e-6

DEFAULT_R_MIN = 1e-6
DEFAULT_MAX_ACTIVE = 4000


class DegenerateIndicator(ValueError):
    """Indicator correlation requested at a candidate with zero variance."""


class ConsistencyError(RuntimeError):
    """An internal identity was violated beyond numerical tolerance."""


# ----------------------------------------------------------------------------
# Marginal indicator statistics
# ----------------------------------------------------------------------------

def failure_probability(mean, variance):
    """P(response <= 0): Phi(-mu/sigma), by sign of the mean when sigma = 0."""
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(variance, dtype=float)
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = norm_cdf(-np.where(sd > 0.0, mean / np.where(sd > 0.0, sd, 1.0), 0.0))
    frozen = np.where(mean < 0.0, 1.0, np.where(mean > 0.0, 0.0, 0.5))
    out = np.where(sd > 0.0, p, frozen)
    return out if out.ndim else float(out)


def sigma_b2(pred: MarginalPrediction):
    """Indicator variance Phi(-U) Phi(U) per candidate, in [0, 0.25]."""
    mean, sd = pred.mean, pred.std
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(sd > 0.0, mean / np.where(sd > 0.0, sd, 1.0), 0.0)
    out = np.where(sd > 0.0, norm_cdf(-u) * norm_cdf(u), 0.0)
    # zero-variance candidate sitting exactly on the limit state: p = 1/2
    out = np.where((sd == 0.0) & (mean == 0.0), 0.25, out)
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------------
# Bivariate orthant probability
# ----------------------------------------------------------------------------

def _angle_integral(m_i, m_j, a, b):
    """(1/2pi) int_a^b exp(-(m_i^2 + m_j^2 - 2 m_i m_j sin t) / (2 cos^2 t)) dt
    with a two-node Gauss-Legendre rule; broadcastable over arrays."""
    width = b - a
    total = 0.0
    for frac in GL2_FRACTIONS:
        t = a + width * frac
        s = np.sin(t)
        c2 = np.cos(t) ** 2
        total = total + np.exp(-(m_i * m_i + m_j * m_j - 2.0 * m_i * m_j * s) / (2.0 * c2))
    return width * total / (4.0 * np.pi)


def _orthant_excess(m_i, m_j, rho):
    """Phi2(m_i, m_j; rho) - Phi(m_i) Phi(m_j), vectorized and cancellation-free.

    This is exactly the covariance of the two failure indicators.
    """
    m_i, m_j, rho = np.broadcast_arrays(
        np.asarray(m_i, dtype=float), np.asarray(m_j, dtype=float), np.asarray(rho, dtype=float)
    )
    rho = np.clip(rho, -1.0, 1.0)
    out = np.zeros(rho.shape)
    prod = norm_cdf(m_i) * norm_cdf(m_j)

    pos1 = rho >= 1.0 - RHO_ONE_TOL
    if pos1.any():
        out[pos1] = norm_cdf(np.minimum(m_i[pos1], m_j[pos1])) - prod[pos1]
    neg1 = rho <= -1.0 + RHO_ONE_TOL
    if neg1.any():
        lower = np.maximum(norm_cdf(m_i[neg1]) + norm_cdf(m_j[neg1]) - 1.0, 0.0)
        out[neg1] = lower - prod[neg1]

    mid = (~pos1) & (~neg1) & (np.abs(rho) <= HIGH_RHO)
    if mid.any():
        out[mid] = _angle_integral(m_i[mid], m_j[mid], 0.0, np.arcsin(rho[mid]))

    hi = (~pos1) & (~neg1) & (rho > HIGH_RHO)
    if hi.any():
        anchor = norm_cdf(np.minimum(m_i[hi], m_j[hi]))
        out[hi] = anchor - prod[hi] - _angle_integral(
            m_i[hi], m_j[hi], np.arcsin(rho[hi]), np.pi / 2.0
        )
    lo = (~pos1) & (~neg1) & (rho < -HIGH_RHO)
    if lo.any():
        anchor = np.maximum(norm_cdf(m_i[lo]) + norm_cdf(m_j[lo]) - 1.0, 0.0)
        out[lo] = anchor - prod[lo] + _angle_integral(
            m_i[lo], m_j[lo], -np.pi / 2.0, np.arcsin(rho[lo])
        )
    return out if out.ndim else float(out)


def bvn_orthant(m_i: float, m_j: float, rho: float) -> float:
    """P(Z_i <= m_i, Z_j <= m_j) for standard bivariate normal correlation rho.

    Two-point Drezner-Wesolowsky approximation; exact closed forms at
    rho in {-1, 0, +1} and exact (arcsine law) whenever m_i = m_j = 0.
    """
    if not np.isfinite(rho) or abs(rho) > 1.0:
        raise ValueError("correlation must lie in [-1, 1]")
    value = norm_cdf(m_i) * norm_cdf(m_j) + _orthant_excess(m_i, m_j, rho)
    return float(np.clip(value, 0.0, 1.0))


# ----------------------------------------------------------------------------
# Pairwise indicator statistics
# ----------------------------------------------------------------------------

def _pair_stats(pred: MarginalPrediction) -> tuple[float, float, float]:
    mean = float(pred.mean.reshape(-1)[0])
    var = float(pred.variance.reshape(-1)[0])
    return mean, np.sqrt(max(var, 0.0)), float(sigma_b2(pred[0]))


def sigma_b_cov(pred_i: MarginalPrediction, pred_j: MarginalPrediction, cov_ij: float) -> float:
    """Indicator covariance: orthant probability minus the product of marginals.

    Computed directly in difference form so the rho -> 0 limit is exact and
    degenerate (zero indicator variance) candidates yield exactly 0.
    """
    mean_i, sd_i, sb2_i = _pair_stats(pred_i)
    mean_j, sd_j, sb2_j = _pair_stats(pred_j)
    if sb2_i == 0.0 or sb2_j == 0.0 or sd_i == 0.0 or sd_j == 0.0:
        return 0.0
    rho = cov_ij / (sd_i * sd_j)
    if abs(rho) > 1.0 + RHO_CONSISTENCY_TOL:
        raise ConsistencyError(f"response correlation {rho} outside [-1, 1]")
    return float(_orthant_excess(-mean_i / sd_i, -mean_j / sd_j, np.clip(rho, -1.0, 1.0)))


def rho_b(pred_i: MarginalPrediction, pred_j: MarginalPrediction, cov_ij: float) -> float:
    """Correlation of the two failure indicators, clamped to [-1, 1]."""
    _, _, sb2_i = _pair_stats(pred_i)
    _, _, sb2_j = _pair_stats(pred_j)
    if sb2_i == 0.0 or sb2_j == 0.0:
        raise DegenerateIndicator("indicator correlation undefined at zero indicator variance")
    value = sigma_b_cov(pred_i, pred_j, cov_ij) / np.sqrt(sb2_i * sb2_j)
    if abs(value) > 1.0 + RHO_CONSISTENCY_TOL:
        raise ConsistencyError(f"indicator correlation {value} outside [-1, 1]")
    return float(np.clip(value, -1.0, 1.0))


# ----------------------------------------------------------------------------
# Pool-level field
# ----------------------------------------------------------------------------

class BernoulliField:
    """Per-candidate indicator statistics plus streaming pairwise access.

    Off-diagonal work is restricted to the ``max_active`` candidates with the
    largest indicator variance (exact whenever the pool has fewer active
    candidates than the cap) and to pairs whose prior kernel correlation is at
    least ``r_min`` (r_min = 0 disables screening). Row sums are evaluated in
    fixed-order blocks of O(N) memory.
    """

    def __init__(
        self,
        posterior: PoolPosterior,
        r_min: float = DEFAULT_R_MIN,
        max_active: int = DEFAULT_MAX_ACTIVE,
        block: int = 256,
    ):
        if not 0.0 <= r_min < 1.0:
            raise ValueError("r_min must lie in [0, 1)")
        self.posterior = posterior
        self.r_min = float(r_min)
        self.max_active = int(max_active)
        self.block = int(block)
        self.mean = posterior.mean
        self.variance = posterior.var
        self.sd = np.sqrt(self.variance)
        self.pfail = failure_probability(self.mean, self.variance)
        self.sigma_b2 = sigma_b2(posterior.marginal())
        self._active: np.ndarray | None = None
        self._rowsums: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.mean.size

    def active_indices(self) -> np.ndarray:
        """Candidates participating in off-diagonal work, ascending order."""
        if self._active is None:
            ok = np.flatnonzero((self.sigma_b2 > 0.0) & (self.variance > 0.0))
            if ok.size > self.max_active:
                order = np.argsort(-self.sigma_b2[ok], kind="stable")
                ok = ok[order[: self.max_active]]
            self._active = np.sort(ok)
        return self._active

    # -- pairwise access ---------------------------------------------------

    def prior_correlation(self, i: int, j: int) -> float:
        return float(np.exp(-self.posterior.prior_sqdist_block([i], [j])[0, 0]))

    def cov(self, i: int, j: int) -> float:
        """Sigma_b[i, j]; screened pairs return 0 without any orthant work."""
        if i == j:
            return float(self.sigma_b2[i])
        if self.r_min > 0.0 and self.prior_correlation(i, j) < self.r_min:
            return 0.0
        pred = self.posterior.marginal()
        return sigma_b_cov(pred[i], pred[j], float(self.posterior.cov_block([i], [j])[0, 0]))

    def rho_b(self, i: int, j: int) -> float:
        if self.sigma_b2[i] == 0.0 or self.sigma_b2[j] == 0.0:
            raise DegenerateIndicator("indicator correlation undefined at zero indicator variance")
        if i == j:
            return 1.0
        return float(
            np.clip(self.cov(i, j) / np.sqrt(self.sigma_b2[i] * self.sigma_b2[j]), -1.0, 1.0)
        )

    # -- streaming row sums --------------------------------------------------

    def rowsums_for(self, mean_variants=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row sums of Sigma_b over the active set for one or more mean vectors.

        All variants share the covariance structure (conditioning on a
        hypothesized response moves only the means), so the expensive pair
        geometry is computed once. Returns ``(active, rowsums, sb2)`` with
        ``rowsums`` of shape (V, |active|) including the diagonal and ``sb2``
        of shape (V, N).
        """
        post = self.posterior
        active = self.active_indices()
        if mean_variants is None:
            means = [self.mean]
        else:
            means = [np.asarray(mv, dtype=float) for mv in mean_variants]
        n_var = len(means)

        sb2_variants = np.empty((n_var, self.n))
        for v, mv in enumerate(means):
            sb2_variants[v] = sigma_b2(MarginalPrediction(mv, self.variance))

        rows = np.zeros((n_var, active.size))
        if active.size:
            sd_a = self.sd[active]
            m_a = np.array([-mv[active] / sd_a for mv in means])  # (V, |A|)
            thr = np.inf if self.r_min <= 0.0 else -np.log(self.r_min)
            for start in range(0, active.size, self.block):
                stop = min(start + self.block, active.size)
                blk = active[start:stop]
                sq = post.prior_sqdist_block(blk, active)
                cov = post.cov_block(blk, active)
                mask = sq <= thr
                mask[np.arange(stop - start), start + np.arange(stop - start)] = False
                r_loc, c_loc = np.nonzero(mask)
                if r_loc.size == 0:
                    continue
                denom = sd_a[start:stop][r_loc] * sd_a[c_loc]
                rho = np.clip(cov[r_loc, c_loc] / denom, -1.0, 1.0)
                for v in range(n_var):
                    vals = _orthant_excess(m_a[v, start:stop][r_loc], m_a[v, c_loc], rho)
                    rows[v, start:stop] += np.bincount(
                        r_loc, weights=vals, minlength=stop - start
                    )
            rows += sb2_variants[:, active]
        return active, rows, sb2_variants

    def rowsums(self) -> tuple[np.ndarray, np.ndarray]:
        """Base-state row sums (cached)."""
        if self._rowsums is None:
            active, rows, _ = self.rowsums_for(None)
            self._rowsums = rows[0]
        return self.active_indices(), self._rowsums

    def gamma_scores(self) -> np.ndarray:
        """Variance-reduction credit 2 * rowsum - sigma_b^2 per candidate.

        Candidates outside the active set carry their diagonal-only value
        (identical to the uncorrelated credit)."""
        active, rows = self.rowsums()
        gamma = self.sigma_b2.copy()
        gamma[active] = 2.0 * rows - self.sigma_b2[active]
        return gamma

    def estimator_variance(self) -> float:
        """(1/N^2) * sum of all Sigma_b entries (diagonal exact for all rows)."""
        active, rows = self.rowsums()
        total = float(self.sigma_b2.sum())
        if active.size:
            total += float(rows.sum() - self.sigma_b2[active].sum())
        return total / float(self.n) ** 2
