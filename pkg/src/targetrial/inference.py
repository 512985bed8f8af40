"""Best-vs-second-best hypothesis test and type-I error calibration.

At the end of a trial the estimated best and second-best arms are compared
through the posterior probability

    pi = P(|mu_best - target| < |mu_second - target|)

(univariate; the multivariate version compares standardised distances and is
estimated by seeded posterior Monte Carlo).  The null is rejected when pi
exceeds a cut-off probability eta.

Cut-offs are calibrated by simulation over a set of null scenarios in which
all arms are equidistant from their targets:

* individual:  eta^(s) is the empirical (1-alpha) quantile of pi over M null
  trials, taken as the ceil((1-alpha)*M)-th order statistic (conservative);
* strong rule: eta = max_s eta^(s), so no scenario in the set exceeds alpha;
* average rule: the smallest simulated pi value at which the (weighted) mean
  exceedance rate across scenarios drops to alpha, found by bisection over
  the pooled samples (with equal weights this is exactly the pooled
  (1-alpha) quantile).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .engine import (BatchResult, Scenario, TrialConfig, TrialOutcome,
                     simulate_batch)
from .stats import ArmState, folded_superiority_batch, posterior

PLAUSIBILITY_SD_MULTIPLE = 10.0


class CalibrationInfeasibleError(ValueError):
    """Requested average type-I level outside the attainable range."""

    def __init__(self, alpha: float, lo: float, hi: float):
        super().__init__(
            f"average type-I level {alpha} not attainable; achievable range "
            f"is [{lo:.6f}, {hi:.6f}] for this pi sample"
        )
        self.attainable = (lo, hi)


@dataclass(frozen=True)
class NullScenarioSet:
    """Null scenarios (all arms equidistant from target), optional weights."""

    scenarios: tuple
    weights: np.ndarray | None = None

    def __post_init__(self):
        if len(self.scenarios) == 0:
            raise ValueError("null scenario set must be non-empty")
        for i, s in enumerate(self.scenarios):
            if not s.is_null():
                raise ValueError(f"scenario {i} violates the null: arms not equidistant")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            object.__setattr__(self, "weights", w)
            if w.shape != (len(self.scenarios),) or np.any(w < 0):
                raise ValueError("weights must be non-negative, one per scenario")
            if abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("weights must sum to 1")
        self._plausibility_warning()

    def _plausibility_warning(self):
        for i, s in enumerate(self.scenarios):
            if s.dim == 1:
                dist = np.abs(s.means - s.targets)
                limit = PLAUSIBILITY_SD_MULTIPLE * float(s.sigmas.max())
                if float(dist.max()) > limit * (1.0 + 1e-12) + 1e-12:
                    warnings.warn(
                        f"null scenario {i}: |mu - target| = {dist.max():.3g} exceeds "
                        f"{PLAUSIBILITY_SD_MULTIPLE:g} times the largest sd ({limit:.3g}); "
                        "such nulls may be outside the trial's plausible range",
                        stacklevel=3,
                    )

    def __len__(self) -> int:
        return len(self.scenarios)


@dataclass(frozen=True)
class CutoffCalibration:
    """Per-scenario cut-offs and the resolved threshold."""

    rule: str                      # "strong" | "average"
    alpha: float
    eta: float
    per_scenario: np.ndarray       # individual eta^(s)
    n_replicas: int
    seed: int
    weights: np.ndarray | None = None


def superiority_statistic(outcome: TrialOutcome, targets, mc_draws: int = 100_000,
                          mc_seed: int = 0) -> float:
    """Posterior superiority statistic of an outcome's selected pair.

    Univariate outcomes use the exact folded-normal probability; multivariate
    outcomes estimate P(dist(best) < dist(second)) from ``mc_draws`` seeded
    posterior samples of each arm (the standardised distance is a sum of
    folded normals with no closed form).
    """
    targets = np.asarray(targets, dtype=float)
    a_best = outcome.arms[outcome.best]
    a_second = outcome.arms[outcome.second]
    if isinstance(a_best, ArmState):
        pb, ps = posterior(a_best), posterior(a_second)
        return float(folded_superiority_batch(
            pb.mean, pb.variance, ps.mean, ps.variance,
            targets[outcome.best], targets[outcome.second],
        ))
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(mc_seed))))
    z = gen.standard_normal((int(mc_draws), 2, a_best.mean.shape[0]))

    def dist_draws(arm, zz):
        chol = np.linalg.cholesky(arm.cov)
        shock = zz @ (chol.T / math.sqrt(arm.count))
        return (np.abs(arm.mean + shock - arm.target) / np.sqrt(np.diag(arm.cov))).sum(axis=1)

    return float(np.mean(dist_draws(a_best, z[:, 0, :]) < dist_draws(a_second, z[:, 1, :])))


def _order_statistic_eta(pi: np.ndarray, alpha: float) -> float:
    """ceil((1-alpha) * M)-th order statistic (1-indexed, ascending)."""
    m = pi.shape[0]
    k = int(math.ceil((1.0 - alpha) * m))
    k = min(max(k, 1), m)
    return float(np.sort(pi)[k - 1])


def calibrate_individual(scenario: Scenario, config: TrialConfig, alpha: float,
                         n_replicas: int, workers: int = 1) -> float:
    """Cut-off eta^(s) with P(pi > eta^(s) | H0^(s)) = alpha, by simulation."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if not scenario.is_null():
        raise ValueError("calibration scenario must satisfy the null")
    batch = simulate_batch(scenario, config, n_replicas, workers=workers)
    return _order_statistic_eta(batch.pi, alpha)


def _average_rule_eta(pi_matrix: list[np.ndarray], alpha: float,
                      weights: np.ndarray | None) -> float:
    """Smallest simulated pi at which the weighted mean exceedance <= alpha.

    The exceedance rate is a step function of eta that only jumps at sample
    values, so the bisection runs over the pooled sorted samples; it is
    monotone because each scenario's rate is nonincreasing in eta.
    """
    s = len(pi_matrix)
    w = np.full(s, 1.0 / s) if weights is None else weights

    def rate(eta: float) -> float:
        return float(sum(wi * np.mean(p > eta) for wi, p in zip(w, pi_matrix)))

    # attainable range over eta in (0, 1): any pi mass exactly at 1.0 is
    # rejected at every admissible threshold
    lo_rate = float(sum(wi * np.mean(p >= 1.0) for wi, p in zip(w, pi_matrix)))
    hi_rate = float(sum(wi * np.mean(p > 0.0) for wi, p in zip(w, pi_matrix)))
    if alpha < lo_rate or alpha > hi_rate:
        raise CalibrationInfeasibleError(alpha, lo_rate, hi_rate)
    pooled = np.unique(np.concatenate(pi_matrix))
    pooled = pooled[pooled < 1.0]
    lo, hi = -1, pooled.size - 1        # rate(pooled[hi]) <= alpha < rate(pooled[lo])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rate(pooled[mid]) <= alpha:
            hi = mid
        else:
            lo = mid
    return float(pooled[hi])


def calibrate(rule: str, nulls: NullScenarioSet, config: TrialConfig, alpha: float,
              n_replicas: int, workers: int = 1) -> CutoffCalibration:
    """Resolve the cut-off over a null scenario set by the strong or average rule.

    One matrix of pi samples (scenario x replica) is simulated once and reused
    by both per-scenario quantiles and the average-rule search.  Scenario ``s``
    uses master seed ``config.seed + s`` so the set extends reproducibly.
    """
    if rule not in ("strong", "average"):
        raise ValueError("rule must be 'strong' or 'average'")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    pi_rows = []
    for s_idx, scen in enumerate(nulls.scenarios):
        cfg = TrialConfig(n_patients=config.n_patients, policy=config.policy,
                          seed=config.seed + s_idx, mv_pi_draws=config.mv_pi_draws)
        batch = simulate_batch(scen, cfg, n_replicas, workers=workers)
        pi_rows.append(batch.pi)
    per_scenario = np.array([_order_statistic_eta(p, alpha) for p in pi_rows])
    if rule == "strong":
        eta = float(per_scenario.max())
    else:
        eta = _average_rule_eta(pi_rows, alpha, nulls.weights)
    return CutoffCalibration(rule=rule, alpha=alpha, eta=eta,
                             per_scenario=per_scenario, n_replicas=n_replicas,
                             seed=config.seed, weights=nulls.weights)


def type_i_rate(scenario: Scenario, config: TrialConfig, eta: float,
                n_replicas: int, workers: int = 1) -> float:
    """Fraction of null replicas whose superiority statistic exceeds eta."""
    if not scenario.is_null():
        raise ValueError("type-I rate is defined for null scenarios")
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must be in (0, 1)")
    batch = simulate_batch(scenario, config, n_replicas, workers=workers)
    return float(np.mean(batch.pi > eta))


# ---------------------------------------------------------------------------
# null scenario grids
# ---------------------------------------------------------------------------

def quadratic_offsets(c_max: float, points: int) -> np.ndarray:
    """Offsets 0..c_max spaced quadratically: square an even grid of sqrt(c)."""
    if c_max <= 0 or points < 2:
        raise ValueError("need c_max > 0 and at least 2 points")
    return (math.sqrt(c_max) * np.arange(points) / (points - 1)) ** 2


def null_grid_univariate(sigmas, target: float, c_max: float = 40.0,
                         points: int = 10, variance_known: bool = True) -> NullScenarioSet:
    """Common-offset nulls mu_j = target + c with c on a quadratic grid.

    Offsets cluster near zero, where response-adaptive designs inflate or
    deflate the type-I error the most; rates stabilise as c grows.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    scens = tuple(
        Scenario.univariate(np.full(sigmas.shape, target + c), sigmas, target,
                            variance_known=variance_known)
        for c in quadratic_offsets(c_max, points)
    )
    return NullScenarioSet(scenarios=scens)


def null_grid_sigma_cross(c_values, sigma_values, n_arms: int, target: float = 0.0,
                          variance_known: bool = False) -> NullScenarioSet:
    """Cartesian product of common offsets with per-arm sd patterns.

    Every assignment of ``sigma_values`` to the ``n_arms`` arms is crossed
    with every offset c, for unknown-variance calibration studies.
    """
    import itertools

    c_values = np.asarray(c_values, dtype=float)
    scens = []
    for c in c_values:
        for pattern in itertools.product(sigma_values, repeat=n_arms):
            scens.append(Scenario.univariate(
                np.full(n_arms, target + c), np.array(pattern, dtype=float),
                target, variance_known=variance_known))
    return NullScenarioSet(scenarios=tuple(scens))


def null_grid_bivariate(c1_values, c2_values, cov, targets, n_arms: int = 4) -> NullScenarioSet:
    """Common-offset bivariate nulls mu_j = targets + (c1, c2)."""
    cov = np.asarray(cov, dtype=float)
    targets = np.asarray(targets, dtype=float)
    scens = []
    for c1 in np.asarray(c1_values, dtype=float):
        for c2 in np.asarray(c2_values, dtype=float):
            mu = np.tile(targets + np.array([c1, c2]), (n_arms, 1))
            scens.append(Scenario.multivariate(mu, cov, np.tile(targets, (n_arms, 1))))
    return NullScenarioSet(scenarios=tuple(scens))
