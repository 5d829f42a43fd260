"""Core types and objectives for self-regressed spherical Gaussian mixtures.

Model: each observation Y_i in R^d is drawn from

    sum_k  pi_k * N(mu_k, sigma_k^2 * I_d)

with every cluster mean constrained to the span of the centered data,

    mu_k = Y beta_k,

where Y is the d x n matrix whose columns are the observations and
beta_k in R^n is a coefficient vector.  Sparsity of the beta_k is
encouraged elsewhere by an l1 penalty; this module holds the parameter
containers and the objective functions every other module evaluates.

All likelihood arithmetic is done in log space with per-row max shifts,
so dimensions up to a few hundred do not underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

CENTERING_TOL = 1e-10
WEIGHT_SUM_TOL = 1e-12
ROW_SUM_TOL = 1e-10

LOG_2PI = math.log(2.0 * math.pi)


class EmptyClusterError(RuntimeError):
    """A cluster carries (numerically) zero responsibility mass."""

    def __init__(self, message: str, component: int | None = None):
        super().__init__(message)
        self.component = component


class NumericalError(RuntimeError):
    """A computation produced non-finite intermediates."""


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SampleSet:
    """Centered data matrix with the centering offset retained.

    ``data`` has one observation per row, shape (n, d); the column means
    are zero to within 1e-10.  ``center_offset`` is the mean that was
    subtracted, so fitted quantities can be mapped back to the original
    coordinates via :meth:`uncenter`.
    """

    data: np.ndarray
    center_offset: np.ndarray

    def __post_init__(self):
        data = _as_float_array(self.data, "data")
        offset = _as_float_array(self.center_offset, "center_offset")
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("data must be a non-empty 2-d array (n, d)")
        if offset.shape != (data.shape[1],):
            raise ValueError("center_offset must have shape (d,)")
        if np.max(np.abs(data.mean(axis=0))) > CENTERING_TOL:
            raise ValueError("data is not centered: column means exceed 1e-10")
        data = data.copy()
        data.setflags(write=False)
        offset = offset.copy()
        offset.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "center_offset", offset)

    @classmethod
    def from_points(cls, points) -> "SampleSet":
        """Center raw observations (rows) and keep the subtracted mean.

        Centering runs twice so the residual column means stay below the
        1e-10 invariant even for large coordinate scales.
        """
        pts = _as_float_array(points, "points")
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("points must be a non-empty 2-d array (n, d)")
        offset = pts.mean(axis=0)
        centered = pts - offset
        resid = centered.mean(axis=0)
        centered -= resid
        return cls(data=centered, center_offset=offset + resid)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def design(self) -> np.ndarray:
        """The d x n matrix whose columns are the (centered) observations."""
        return self.data.T

    def uncenter(self, vectors: np.ndarray) -> np.ndarray:
        """Map centered-coordinate vectors back to original coordinates."""
        return np.asarray(vectors, dtype=float) + self.center_offset

    def total_variance(self) -> float:
        """Mean squared norm of the centered observations."""
        return float(np.mean(np.sum(self.data**2, axis=1)))


def default_variance_floor(Y: SampleSet) -> float:
    """Smallest admissible per-component variance for this dataset.

    Unpenalized mixture likelihoods are unbounded at degenerate
    variances; a floor of 1e-4 of the per-coordinate sample variance
    keeps every iterate away from that failure mode.
    """
    floor = 1e-4 * Y.total_variance() / Y.d
    return max(floor, 1e-300)


@dataclass(frozen=True)
class MixtureParams:
    """Full parameter vector (weights, betas, variances).

    Means are never stored: ``mu_k = Y beta_k`` is realized on demand by
    :meth:`means`.  ``betas`` has shape (K, n), one coefficient row per
    component.
    """

    weights: np.ndarray
    betas: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = _as_float_array(self.weights, "weights")
        b = _as_float_array(self.betas, "betas")
        v = _as_float_array(self.variances, "variances")
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty vector")
        K = w.size
        if b.ndim != 2 or b.shape[0] != K:
            raise ValueError("betas must have shape (K, n)")
        if v.shape != (K,):
            raise ValueError("variances must have shape (K,)")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("weights must sum to 1 within 1e-12")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        for name, arr in (("weights", w), ("betas", b), ("variances", v)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def K(self) -> int:
        return self.weights.size

    @property
    def n(self) -> int:
        return self.betas.shape[1]

    def means(self, Y: SampleSet) -> np.ndarray:
        """Realized component means, shape (K, d)."""
        return self.betas @ Y.data

    def l1_norms(self) -> np.ndarray:
        """Per-component l1 norm of the coefficient rows."""
        return np.sum(np.abs(self.betas), axis=1)

    def permuted(self, perm) -> "MixtureParams":
        """Relabel components by ``perm`` (new index -> old index)."""
        idx = np.asarray(perm, dtype=int)
        return MixtureParams(
            weights=self.weights[idx],
            betas=self.betas[idx],
            variances=self.variances[idx],
        )


@dataclass(frozen=True)
class Hyperparams:
    """Fitting configuration shared by the sparse and baseline drivers.

    ``lam`` is the l1 penalty weight; ``None`` selects the per-cluster
    default heuristic (see :func:`sparsemix.sparse_em.penalty_weight`).
    ``variance_floor=None`` derives the floor from the data via
    :func:`default_variance_floor`.  ``relax`` in (0, 1] averages each
    new beta/variance block with the previous iterate (1 = no
    averaging).
    """

    lam: float | None = None
    max_cycles: int = 200
    tol: float = 1e-8
    variance_floor: float | None = None
    restarts: int = 5
    seed: int = 0
    relax: float = 1.0

    def __post_init__(self):
        if self.lam is not None and not (self.lam >= 0):
            raise ValueError("lam must be >= 0")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be >= 1")
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if self.variance_floor is not None and not (self.variance_floor > 0):
            raise ValueError("variance_floor must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not (0.0 < self.relax <= 1.0):
            raise ValueError("relax must lie in (0, 1]")

    def resolve_floor(self, Y: SampleSet) -> float:
        return self.variance_floor if self.variance_floor is not None else default_variance_floor(Y)


def check_responsibilities(tau: np.ndarray) -> np.ndarray:
    """Validate an (n, K) responsibility matrix and return it as float."""
    t = np.asarray(tau, dtype=float)
    if t.ndim != 2:
        raise ValueError("responsibilities must be a 2-d array (n, K)")
    if not np.all(np.isfinite(t)):
        raise ValueError("responsibilities contain non-finite entries")
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("responsibilities must lie in [0, 1]")
    if np.max(np.abs(t.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
        raise ValueError("responsibility rows must sum to 1 within 1e-10")
    return t


# ---------------------------------------------------------------------------
# Objective functions
# ---------------------------------------------------------------------------

def component_log_density(y, beta, sigma2: float, Y: SampleSet) -> float:
    """Log of one spherical Gaussian component at ``y`` with mean Y beta.

    Returns -(d/2) log(2 pi sigma2) - ||y - Y beta||^2 / (2 sigma2).
    """
    yv = _as_float_array(y, "y")
    bv = _as_float_array(beta, "beta")
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise ValueError("sigma2 must be positive and finite")
    if yv.shape != (Y.d,) or bv.shape != (Y.n,):
        raise ValueError("y must have shape (d,), beta shape (n,)")
    resid = yv - bv @ Y.data
    return float(-0.5 * Y.d * (LOG_2PI + math.log(sigma2)) - resid @ resid / (2.0 * sigma2))


def spherical_log_density_matrix(X: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Per-point, per-component spherical Gaussian log densities.

    ``X`` is (n, d), ``means`` is (K, d), ``variances`` is (K,).  Returns
    an (n, K) matrix.  Shared by the self-regression model (means
    realized from betas) and the baseline estimator (explicit means).
    """
    d = X.shape[1]
    diff = X[:, None, :] - means[None, :, :]
    sq = np.einsum("nkd,nkd->nk", diff, diff)
    return -0.5 * (d * (LOG_2PI + np.log(variances))[None, :] + sq / variances[None, :])


def log_density_matrix(params: MixtureParams, Y: SampleSet) -> np.ndarray:
    """(n, K) matrix of component log densities at the realized means."""
    return spherical_log_density_matrix(Y.data, params.means(Y), params.variances)


def _log_weights(weights: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(weights)


def log_responsibilities_from_densities(log_dens: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row-normalized log posteriors from log densities and weights."""
    logp = log_dens + _log_weights(weights)[None, :]
    return logp - logsumexp(logp, axis=1, keepdims=True)


def log_responsibilities(params: MixtureParams, Y: SampleSet) -> np.ndarray:
    return log_responsibilities_from_densities(log_density_matrix(params, Y), params.weights)


def self_regression_log_likelihood(params: MixtureParams, Y: SampleSet) -> float:
    """Mixture log likelihood with means realized as Y beta_k."""
    logp = log_density_matrix(params, Y) + _log_weights(params.weights)[None, :]
    return float(np.sum(logsumexp(logp, axis=1)))


def penalized_objective(params: MixtureParams, Y: SampleSet, lam: float) -> float:
    """Log likelihood minus ``lam`` times the summed l1 norms of the betas."""
    if not (lam >= 0):
        raise ValueError("lam must be >= 0")
    return self_regression_log_likelihood(params, Y) - lam * float(params.l1_norms().sum())


def q_function(params: MixtureParams, tau: np.ndarray, Y: SampleSet) -> float:
    """EM surrogate objective in proximal form.

    Expected complete-data log likelihood under ``tau`` plus the entropy
    of ``tau``:

        sum_{i,k} tau_ik [log pi_k + log N_ik]  -  sum_{i,k} tau_ik log tau_ik

    The entropy term is constant in the parameters, so block maximizers
    are unchanged, and it makes the exact decomposition

        q_function(theta, tau(theta_bar)) + kullback_penalty(theta, theta_bar)
            = self_regression_log_likelihood(theta)

    hold identically.  Conventions: 0 * log 0 = 0; if some pi_k = 0 while
    tau_ik > 0 the function returns -inf (a sentinel, not an exception).
    """
    t = np.asarray(tau, dtype=float)
    logp = log_density_matrix(params, Y) + _log_weights(params.weights)[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        complete = np.where(t > 0, t * logp, 0.0)
        entropy = np.where(t > 0, t * np.log(t), 0.0)
    return float(np.sum(complete) - np.sum(entropy))


def kullback_penalty(theta: MixtureParams, theta_bar: MixtureParams, Y: SampleSet) -> float:
    """KL-type divergence between the responsibilities of two parameter sets.

    sum_{i,k} t_ik(theta_bar) log( t_ik(theta_bar) / t_ik(theta) ); always
    >= 0, zero when the responsibility matrices coincide, +inf when
    t_ik(theta) = 0 somewhere t_ik(theta_bar) > 0.
    """
    log_t = log_responsibilities(theta, Y)
    log_tb = log_responsibilities(theta_bar, Y)
    tb = np.exp(log_tb)
    with np.errstate(invalid="ignore"):
        terms = np.where(tb > 0, tb * (log_tb - log_t), 0.0)
    return float(np.sum(terms))
