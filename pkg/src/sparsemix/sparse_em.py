"""Space-alternating EM driver for the l1-penalized self-regression mixture.

One full cycle refreshes the responsibilities before every partial step
and updates exactly one parameter block per step, in the order

    weights, beta_1 .. beta_K, sigma_1 .. sigma_K.

Each partial step maximizes the EM surrogate over its block (the beta
step through the weighted lasso), so the penalized objective never
decreases along the trace when the penalty weight is held fixed.
Clusters that lose all responsibility mass are re-seeded at the least
committed data point; a cluster that needs more than three re-seeds
aborts the fit as non-converged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .lasso import (
    WeightedLassoProblem,
    _stationarity_violation,
    default_tolerance,
    kkt_residual,
    solve_weighted_lasso,
)
from .model import (
    EmptyClusterError,
    Hyperparams,
    MixtureParams,
    NumericalError,
    SampleSet,
    log_density_matrix,
    log_responsibilities_from_densities,
    self_regression_log_likelihood,
)

EMPTY_FRACTION = 1e-8   # s_k below this times n counts as an empty cluster
MAX_RESEEDS = 3
DEGENERATE_WEIGHT = 1e-12
MAX_PENALTY_FRACTION = 0.5      # ratchet guard, see penalty_weight
LINE_PENALTY_FRACTION = 0.2     # tighter guard for 1-d data, see penalty_weight


@dataclass(frozen=True)
class CycleSchedule:
    """Order of partial steps within one cycle.

    Entries are ("weights", -1), ("beta", k) or ("sigma", k); a valid
    cycle holds the weights step once and each beta/sigma block exactly
    once, 1 + 2K steps in total.
    """

    order: tuple[tuple[str, int], ...]

    def __post_init__(self):
        kinds = {}
        for tag in self.order:
            if not (isinstance(tag, tuple) and len(tag) == 2):
                raise ValueError(f"malformed schedule entry {tag!r}")
            kinds.setdefault(tag[0], []).append(tag[1])
        if kinds.get("weights") != [-1]:
            raise ValueError("schedule must contain the weights step exactly once")
        ks = sorted(kinds.get("beta", []))
        if ks != sorted(kinds.get("sigma", [])) or ks != list(range(len(ks))) or not ks:
            raise ValueError("schedule must contain beta(k) and sigma(k) once per component")

    @property
    def K(self) -> int:
        return (len(self.order) - 1) // 2

    @classmethod
    def default(cls, K: int) -> "CycleSchedule":
        order = [("weights", -1)]
        order += [("beta", k) for k in range(K)]
        order += [("sigma", k) for k in range(K)]
        return cls(order=tuple(order))


@dataclass
class FitReport:
    """Outcome of one driver invocation (best restart)."""

    params: MixtureParams
    objective_trace: np.ndarray
    beta_kkt_residuals: np.ndarray
    cycles_run: int
    converged: bool
    assignments: np.ndarray
    restart_index: int
    reseed_events: list
    diagnostic: str | None = None


def penalty_weight(hp: Hyperparams, Y: SampleSet, sigma2: float, total_weight: float, target: np.ndarray) -> float:
    """Effective l1 weight for one component's mean update.

    A fixed ``hp.lam`` wins.  The default keys the weight to the noise
    level of the subproblem gradient: the weighted cluster mean carries
    noise of standard deviation sigma / sqrt(s) per coordinate, so the
    gradient coordinate (s / sigma^2) D_j^t m fluctuates with scale
    sqrt(s) ||D_j|| / sigma; the usual sqrt(2 log n) union bound over the
    n coordinates then prunes pure-noise coefficients while leaving
    genuinely aligned data points active, uniformly across dilations.

    The weight is clamped relative to the critical value
    (s / sigma^2) ||D^t m||_inf beyond which the whole block zeroes out.
    Weights near the critical value shrink the fitted mean by a constant
    factor per pass, and while a component's variance estimate is still
    inflated by between-cluster spread this compounds into a drift of
    the mean onto the origin.  For d >= 2 that drift is self-healing:
    the origin is typically unclaimed territory, so a dominated
    component starves and the driver re-seeds it somewhere useful.  On a
    line the origin lies between the groups and keeps claiming points,
    so the drift is a trap and the clamp must be much tighter.
    """
    if hp.lam is not None:
        return hp.lam
    col_max = math.sqrt(float(np.max(np.sum(Y.data**2, axis=1))))
    noise = math.sqrt(2.0 * math.log(Y.n) * total_weight) * col_max / math.sqrt(sigma2)
    critical = (total_weight / sigma2) * float(np.max(np.abs(Y.data @ target), initial=0.0))
    fraction = LINE_PENALTY_FRACTION if Y.d == 1 else MAX_PENALTY_FRACTION
    return min(noise, fraction * critical)


def effective_lams(params: MixtureParams, tau: np.ndarray, Y: SampleSet, hp: Hyperparams) -> np.ndarray:
    """Per-component penalty weights at the current parameters."""
    if hp.lam is not None:
        return np.full(params.K, float(hp.lam))
    out = np.empty(params.K)
    for k in range(params.K):
        s = float(tau[:, k].sum())
        if s <= EMPTY_FRACTION * Y.n:
            out[k] = 0.0
            continue
        m = (tau[:, k] @ Y.data) / s
        out[k] = penalty_weight(hp, Y, float(params.variances[k]), s, m)
    return out


def penalized_value(params: MixtureParams, Y: SampleSet, lams: np.ndarray) -> float:
    """Log likelihood minus the per-component weighted l1 penalties."""
    return self_regression_log_likelihood(params, Y) - float(lams @ params.l1_norms())


# ---------------------------------------------------------------------------
# Partial steps
# ---------------------------------------------------------------------------

def e_step(params: MixtureParams, Y: SampleSet) -> np.ndarray:
    """Posterior component memberships, one normalized row per point."""
    log_tau = log_responsibilities_from_densities(log_density_matrix(params, Y), params.weights)
    tau = np.exp(log_tau)
    if not np.all(np.isfinite(tau)):
        raise NumericalError("responsibilities contain non-finite entries")
    return tau


def update_weights(tau: np.ndarray) -> np.ndarray:
    """Component weights as mean responsibility mass per column."""
    return tau.sum(axis=0) / tau.shape[0]


def update_beta(k: int, params: MixtureParams, tau: np.ndarray, Y: SampleSet, hp: Hyperparams) -> np.ndarray:
    """Weighted-lasso update of one coefficient block, warm-started."""
    s = float(tau[:, k].sum())
    if s <= EMPTY_FRACTION * Y.n:
        raise EmptyClusterError(f"component {k} has responsibility mass {s:.3e}", component=k)
    m = (tau[:, k] @ Y.data) / s
    lam = penalty_weight(hp, Y, float(params.variances[k]), s, m)
    problem = WeightedLassoProblem(
        design=Y.design, target=m, total_weight=s, sigma2=float(params.variances[k]), lam=lam
    )
    # the inner solve must outresolve the outer stopping rule, or the
    # truncation error turns into a perpetual per-cycle objective creep
    tol = default_tolerance(problem) * min(1.0, hp.tol / 1e-8)
    return solve_weighted_lasso(problem, beta_init=params.betas[k], tol=tol).beta


def update_sigma(k: int, params: MixtureParams, tau: np.ndarray, Y: SampleSet, hp: Hyperparams) -> float:
    """Floored responsibility-weighted mean squared deviation per coordinate."""
    s = float(tau[:, k].sum())
    if s <= EMPTY_FRACTION * Y.n:
        raise EmptyClusterError(f"component {k} has responsibility mass {s:.3e}", component=k)
    resid = Y.data - params.means(Y)[k][None, :]
    sq = float(tau[:, k] @ np.sum(resid**2, axis=1))
    return max(hp.resolve_floor(Y), sq / (Y.d * s))


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def restart_seed_seq(seed, restart_index: int) -> np.random.SeedSequence:
    """Child stream for one restart, derived without mutating ``seed``.

    ``SeedSequence.spawn`` advances internal state, so two drivers handed
    the same sequence would otherwise see different children depending on
    call order; reconstructing the child by spawn key keeps fits pure
    functions of (seed, restart).
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(entropy=seed.entropy, spawn_key=seed.spawn_key + (restart_index,))
    return np.random.SeedSequence(entropy=seed, spawn_key=(restart_index,))


def choose_init_indices(rng: np.random.Generator, n: int, K: int) -> np.ndarray:
    """K distinct data indices; shared by the sparse and baseline drivers."""
    return rng.choice(n, size=K, replace=False)

def default_sigma2(Y: SampleSet, K: int, floor: float) -> float:
    return max(floor, Y.total_variance() / (Y.d * K))


def indicator_init(Y: SampleSet, K: int, floor: float, rng: np.random.Generator) -> MixtureParams:
    """Sparse warm start: each beta_k indicates one random data point."""
    idx = choose_init_indices(rng, Y.n, K)
    betas = np.zeros((K, Y.n))
    betas[np.arange(K), idx] = 1.0
    return MixtureParams(
        weights=np.full(K, 1.0 / K),
        betas=betas,
        variances=np.full(K, default_sigma2(Y, K, floor)),
    )


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def _reseed(params: MixtureParams, tau: np.ndarray, k: int, Y: SampleSet, sigma2_default: float) -> MixtureParams:
    """Move component k onto the least committed data point.

    The weight also gets a bump: a component whose weight underflowed to
    zero would otherwise stay invisible to the next E-step no matter
    where its mean moved.
    """
    j = int(np.argmin(tau.max(axis=1)))
    betas = params.betas.copy()
    betas[k] = 0.0
    betas[k, j] = 1.0
    variances = params.variances.copy()
    variances[k] = sigma2_default
    weights = params.weights.copy()
    weights[k] = max(weights[k], 1.0 / (2 * params.K))
    weights /= weights.sum()
    return MixtureParams(weights=weights, betas=betas, variances=variances)


def _fit_once(
    Y: SampleSet,
    params: MixtureParams,
    hp: Hyperparams,
    schedule: CycleSchedule,
    restart_index: int,
) -> FitReport:
    floor = hp.resolve_floor(Y)
    sigma2_init = default_sigma2(Y, params.K, floor)
    trace: list[float] = []
    reseed_events: list = []
    reseed_counts = np.zeros(params.K, dtype=int)
    diagnostic = None
    converged = False
    cycles_run = 0
    aborted = False

    for cycle in range(hp.max_cycles):
        for step_idx, (kind, k) in enumerate(schedule.order):
            tau = e_step(params, Y)
            try:
                if kind == "weights":
                    params = replace(params, weights=update_weights(tau))
                elif kind == "beta":
                    new = update_beta(k, params, tau, Y, hp)
                    if hp.relax < 1.0:
                        new = hp.relax * new + (1.0 - hp.relax) * params.betas[k]
                    betas = params.betas.copy()
                    betas[k] = new
                    params = replace(params, betas=betas)
                else:
                    new = update_sigma(k, params, tau, Y, hp)
                    if hp.relax < 1.0:
                        new = hp.relax * new + (1.0 - hp.relax) * float(params.variances[k])
                    variances = params.variances.copy()
                    variances[k] = new
                    params = replace(params, variances=variances)
            except EmptyClusterError:
                reseed_counts[k] += 1
                reseed_events.append((cycle, step_idx, k))
                if reseed_counts[k] > MAX_RESEEDS:
                    diagnostic = f"component {k} stayed empty after {MAX_RESEEDS} re-seeds"
                    aborted = True
                else:
                    params = _reseed(params, tau, k, Y, sigma2_init)
            lams = effective_lams(params, tau, Y, hp)
            trace.append(penalized_value(params, Y, lams))
            if aborted:
                break
        if aborted:
            break
        obj = trace[-1]
        if cycle >= 1:
            prev = trace[-1 - len(schedule.order)]
            if abs(obj - prev) <= hp.tol * (1.0 + abs(obj)):
                converged = True
                cycles_run = cycle + 1
                break
        cycles_run = cycle + 1

    tau = e_step(params, Y)
    assignments = np.argmax(tau, axis=1)
    return FitReport(
        params=params,
        objective_trace=np.asarray(trace),
        beta_kkt_residuals=_subproblem_residuals(params, tau, Y, hp),
        cycles_run=cycles_run,
        converged=converged and not aborted,
        assignments=assignments,
        restart_index=restart_index,
        reseed_events=reseed_events,
        diagnostic=diagnostic,
    )


def _subproblem_residuals(params: MixtureParams, tau: np.ndarray, Y: SampleSet, hp: Hyperparams) -> np.ndarray:
    """Lasso stationarity residual of each beta block at the final tau."""
    out = np.full(params.K, np.nan)
    for k in range(params.K):
        s = float(tau[:, k].sum())
        if s <= EMPTY_FRACTION * Y.n:
            continue
        m = (tau[:, k] @ Y.data) / s
        lam = penalty_weight(hp, Y, float(params.variances[k]), s, m)
        problem = WeightedLassoProblem(
            design=Y.design, target=m, total_weight=s, sigma2=float(params.variances[k]), lam=lam
        )
        out[k] = kkt_residual(problem, params.betas[k])
    return out


def run(
    Y: SampleSet,
    K: int,
    hp: Hyperparams,
    init: MixtureParams | None = None,
    seed=None,
    schedule: CycleSchedule | None = None,
) -> FitReport:
    """Fit a K-component model; returns the best restart by final objective.

    With ``init`` given, a single fit runs from that parameter vector and
    the restart budget is ignored.  ``seed`` overrides ``hp.seed`` and
    may be an int or a ``numpy.random.SeedSequence``; restart r draws its
    initialization from an independent child stream, so fits are
    reproducible bit for bit.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if Y.n < K:
        raise ValueError("need at least K data points")
    if schedule is None:
        schedule = CycleSchedule.default(K)
    if schedule.K != K:
        raise ValueError("schedule does not match K")

    if init is not None:
        if init.K != K or init.betas.shape[1] != Y.n:
            raise ValueError("init has inconsistent shape")
        return _fit_once(Y, init, hp, schedule, restart_index=0)

    if seed is None:
        seed = hp.seed
    floor = hp.resolve_floor(Y)
    best = None
    for r in range(hp.restarts):
        params0 = indicator_init(Y, K, floor, np.random.default_rng(restart_seed_seq(seed, r)))
        report = _fit_once(Y, params0, hp, schedule, restart_index=r)
        if best is None or report.objective_trace[-1] > best.objective_trace[-1]:
            best = report
    return best


# ---------------------------------------------------------------------------
# Stationarity certification
# ---------------------------------------------------------------------------

def beta_gradient(params: MixtureParams, Y: SampleSet, k: int) -> np.ndarray:
    """Gradient of the unpenalized log likelihood in the beta_k block."""
    tau = e_step(params, Y)
    s = float(tau[:, k].sum())
    mu_k = params.means(Y)[k]
    weighted_resid = Y.data.T @ tau[:, k] - s * mu_k
    return (Y.data @ weighted_resid) / float(params.variances[k])


def stationarity_report(report: FitReport, Y: SampleSet, hp: Hyperparams):
    """First-order certificate for each beta block of a finished fit.

    Returns ``(residuals, scales)``, both shape (K,).  residuals[k] is
    the distance from 0 to the beta_k gradient of the penalized log
    likelihood (subdifferential of the l1 term included); scales[k] is a
    crude upper bound on the gradient magnitude, suitable for relative
    comparisons.  Blocks whose fitted weight is numerically zero sit at
    an active boundary constraint where this certificate does not apply;
    they are skipped and reported as NaN.
    """
    params = report.params
    tau = e_step(params, Y)
    col_max = math.sqrt(float(np.max(np.sum(Y.data**2, axis=1))))
    mu = params.means(Y)
    residuals = np.full(params.K, np.nan)
    scales = np.full(params.K, np.nan)
    for k in range(params.K):
        if params.weights[k] < DEGENERATE_WEIGHT:
            continue
        s = float(tau[:, k].sum())
        m = (tau[:, k] @ Y.data) / s if s > 0 else np.zeros(Y.d)
        lam = penalty_weight(hp, Y, float(params.variances[k]), s, m)
        grad = beta_gradient(params, Y, k)
        residuals[k] = _stationarity_violation(-grad, params.betas[k], lam)
        resid_mass = float(tau[:, k] @ np.linalg.norm(Y.data - mu[k][None, :], axis=1))
        scales[k] = col_max * resid_mass / float(params.variances[k]) + lam
    return residuals, scales
