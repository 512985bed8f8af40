"""Trial simulation engine and Monte Carlo operating characteristics.

One simulated trial draws responses from a ground-truth :class:`Scenario`,
allocates patients with a :class:`~targetrial.policies.PolicySpec` (burn-in
then adaptive rule), selects the estimated best and second-best arm by
proximity of the final means to the targets, and computes the posterior
superiority statistic pi between them.

Replication is organised so that replica ``m`` of master seed ``s`` is a pure
function of ``(s, m)``: trials are processed in fixed-size blocks of replicas,
each block vectorised across replicas, and blocks may run in parallel worker
processes without changing a single bit of the output.
``simulate_trial(scenario, config)`` is exactly replica 0 of
``simulate_batch`` with the same seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .policies import PolicySpec, burn_in_arm, pick_with_ties, policy_scores, _ts_pick_row
from .stats import ArmState, folded_superiority_batch

CHUNK = 256          # replicas per vectorised block; fixed so that worker
                     # count and scheduling can never influence results
SIGMA_FLOOR = 1e-12  # plug-in sd floor, keeps degenerate arms finite


@dataclass(frozen=True)
class Scenario:
    """Ground truth of one simulated trial configuration.

    Univariate: ``means``/``sigmas``/``targets`` are (K,). Multivariate:
    ``means``/``targets`` are (K, q) and ``covs`` (K, q, q).  When
    ``variance_known`` is false (univariate only) the design estimates each
    arm's variance from its own responses; the true ``sigmas`` still drive
    response generation.
    """

    means: np.ndarray
    targets: np.ndarray
    sigmas: np.ndarray | None = None
    covs: np.ndarray | None = None
    variance_known: bool = True

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "targets", targets)
        if means.shape != targets.shape:
            raise ValueError("means and targets must have the same shape")
        if means.ndim == 1:
            if self.sigmas is None:
                raise ValueError("univariate scenario needs per-arm sigmas")
            sig = np.asarray(self.sigmas, dtype=float)
            object.__setattr__(self, "sigmas", sig)
            if sig.shape != means.shape or np.any(sig <= 0):
                raise ValueError("sigmas must be positive, one per arm")
        elif means.ndim == 2:
            if self.covs is None:
                raise ValueError("multivariate scenario needs per-arm covariances")
            covs = np.asarray(self.covs, dtype=float)
            if covs.ndim == 2:
                covs = np.broadcast_to(covs, (means.shape[0],) + covs.shape).copy()
            object.__setattr__(self, "covs", covs)
            if covs.shape != (means.shape[0], means.shape[1], means.shape[1]):
                raise ValueError("covs must be (K, q, q)")
            if not self.variance_known:
                raise ValueError("unknown-variance mode is univariate only")
            for j, c in enumerate(covs):
                if not np.allclose(c, c.T, rtol=1e-10, atol=1e-12):
                    raise ValueError(f"covariance of arm {j} is not symmetric")
                np.linalg.cholesky(c)  # raises if not positive definite
        else:
            raise ValueError("means must be (K,) or (K, q)")
        if self.n_arms < 2:
            raise ValueError("a trial needs at least 2 arms")

    @classmethod
    def univariate(cls, means, sigmas, target=0.0, variance_known=True) -> "Scenario":
        means = np.asarray(means, dtype=float)
        targets = np.broadcast_to(np.asarray(target, dtype=float), means.shape).copy()
        return cls(means=means, targets=targets, sigmas=np.asarray(sigmas, dtype=float),
                   variance_known=variance_known)

    @classmethod
    def multivariate(cls, means, cov, targets) -> "Scenario":
        means = np.asarray(means, dtype=float)
        targets = np.broadcast_to(np.asarray(targets, dtype=float), means.shape).copy()
        return cls(means=means, targets=targets, covs=np.asarray(cov, dtype=float))

    @property
    def n_arms(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return 1 if self.means.ndim == 1 else self.means.shape[1]

    def true_distances(self) -> np.ndarray:
        """Per-arm distance of the true means from the targets.

        Univariate: |mu_j - target_j|.  Multivariate: the standardised
        distance  sum_l |mu_j^(l) - target_j^(l)| / sqrt(cov_j[l, l]).
        """
        if self.dim == 1:
            return np.abs(self.means - self.targets)
        sdd = np.sqrt(np.stack([np.diag(c) for c in self.covs]))
        return (np.abs(self.means - self.targets) / sdd).sum(axis=1)

    def is_null(self, atol: float = 1e-9) -> bool:
        """True when all arms are equidistant from their targets."""
        d = self.true_distances()
        return bool(np.all(np.abs(d - d[0]) <= atol))


@dataclass(frozen=True)
class TrialConfig:
    """Total sample size, allocation policy and master seed of one trial."""

    n_patients: int
    policy: PolicySpec
    seed: int
    mv_pi_draws: int = 100_000

    def __post_init__(self):
        if self.n_patients < 1:
            raise ValueError("n_patients must be positive")
        if self.mv_pi_draws < 1000:
            raise ValueError("mv_pi_draws too small for a usable estimate")

    def validate_for(self, scenario: Scenario):
        k = scenario.n_arms
        if self.n_patients < k * self.policy.burn_in:
            raise ValueError(
                f"N={self.n_patients} cannot cover burn-in {self.policy.burn_in} on {k} arms"
            )
        if not scenario.variance_known and self.policy.burn_in < 2:
            raise ValueError("unknown variances require burn-in >= 2 per arm")
        if scenario.dim > 1 and self.policy.kind not in ("fr", "cb", "we_mv"):
            raise ValueError(f"policy {self.policy.kind!r} is univariate-only")


@dataclass(frozen=True)
class MultiArmState:
    """Final state of one arm with vector endpoint and known covariance."""

    count: int
    mean: np.ndarray
    cov: np.ndarray
    target: np.ndarray


@dataclass(frozen=True)
class TrialOutcome:
    """Everything one trial produced."""

    allocations: np.ndarray            # (N,) 0-based arm per patient
    arms: tuple                        # per-arm ArmState / MultiArmState
    best: int
    second: int
    pi: float
    counts: np.ndarray                 # (K,) patients per arm

    def __post_init__(self):
        if self.best == self.second:
            raise ValueError("best and second-best must differ")
        if int(self.counts.sum()) != self.allocations.shape[0]:
            raise ValueError("arm counts do not sum to N")


@dataclass(frozen=True)
class BatchResult:
    """Per-replica results of a Monte Carlo batch (replicas along axis 0)."""

    counts: np.ndarray        # (M, K)
    best: np.ndarray          # (M,)
    second: np.ndarray        # (M,)
    pi: np.ndarray            # (M,) posterior superiority statistic
    final_means: np.ndarray   # (M, K) or (M, K, q)

    @property
    def n_replicas(self) -> int:
        return self.best.shape[0]


@dataclass(frozen=True)
class OperatingCharacteristics:
    """Aggregated design performance over replicated trials.

    Percentages are on [0, 100]; powers and the rejection rate on [0, 1].
    ``power_conditional`` is None when no replica identified both best arms
    (undefined, deliberately distinct from 0).
    """

    pb_pct: float
    pb_se: float
    cs1_pct: float
    cs12_pct: float
    rejection_rate: float | None
    power_conditional: float | None
    power_two_components: float | None
    n_replicas: int
    eta: float | None

    def row(self) -> dict:
        return {
            "PB": self.pb_pct, "PB_se": self.pb_se, "CS1": self.cs1_pct,
            "CS12": self.cs12_pct, "power_cond": self.power_conditional,
            "power_tc": self.power_two_components, "reject_rate": self.rejection_rate,
            "replicas": self.n_replicas, "eta": self.eta,
        }


# ---------------------------------------------------------------------------
# vectorised batch core
# ---------------------------------------------------------------------------

def _welford_push(counts, means, m2, rows, arm, x):
    """In-place single-pass update, same arithmetic as stats.update_arm."""
    c = counts[rows, arm] + 1.0
    counts[rows, arm] = c
    delta = x - means[rows, arm]
    mean_new = means[rows, arm] + delta / c
    means[rows, arm] = mean_new
    if m2 is not None:
        m2[rows, arm] = m2[rows, arm] + delta * (x - mean_new)


def _run_chunk(scenario: Scenario, config: TrialConfig, lo: int, hi: int,
               compute_pi: bool = True, record_alloc: bool = False):
    """Simulate replicas [lo, hi) in lock-step; returns per-replica arrays."""
    spec = config.policy
    k = scenario.n_arms
    q = scenario.dim
    n = config.n_patients
    c_rep = hi - lo
    rows = np.arange(c_rep)

    z = np.empty((c_rep, n, q))
    u_alloc = np.empty((c_rep, n))
    for i, m in enumerate(range(lo, hi)):
        z[i], u_alloc[i] = rngmod.trial_streams(config.seed, m, n, q)

    counts = np.zeros((c_rep, k))
    univariate = q == 1
    if univariate:
        means = np.zeros((c_rep, k))
        m2 = np.zeros((c_rep, k))
        true_mu = scenario.means
        true_sig = scenario.sigmas
    else:
        means = np.zeros((c_rep, k, q))
        m2 = None
        true_mu = scenario.means
        chol = np.stack([np.linalg.cholesky(c) for c in scenario.covs])  # (K, q, q)
        cov_diag = np.stack([np.diag(c) for c in scenario.covs])          # (K, q)
        inv_cov = np.stack([np.linalg.inv(c) for c in scenario.covs])     # solved once
    targets = scenario.targets

    alloc = np.empty((c_rep, n), dtype=np.int16) if record_alloc else None
    burn_end = k * spec.burn_in

    for t in range(1, n + 1):
        if t <= burn_end:
            arm = np.full(c_rep, burn_in_arm(t, k))
        elif spec.kind == "fr":
            arm = np.minimum((u_alloc[:, t - 1] * k).astype(np.int64), k - 1)
        elif spec.kind == "ts":
            arm = np.empty(c_rep, dtype=np.int64)
            post_sd = _design_sigmas(scenario, counts, m2) / np.sqrt(counts)
            for i in range(c_rep):
                gen = rngmod.policy_stream(config.seed, lo + i, t)
                arm[i] = _ts_pick_row(means[i], post_sd[i], targets, spec, t, n,
                                      float(u_alloc[i, t - 1]), gen)
        elif spec.kind == "we_mv" or (spec.kind == "cb" and not univariate):
            if spec.kind == "cb":
                sdd = np.sqrt(cov_diag)  # (K, q)
                scores = -(np.abs(means - targets) / sdd).sum(axis=2)
            else:
                diff = targets - means                                   # (C, K, q)
                quad = np.einsum("ckq,kqr,ckr->ck", diff, inv_cov, diff)
                w = counts**spec.kappa
                r = w / (w + counts)
                scores = 0.5 * q * r - 0.5 * quad * counts * r * r
            arm = pick_with_ties(scores, u_alloc[:, t - 1], largest=True)
        else:
            sig = _design_sigmas(scenario, counts, m2)
            scores = policy_scores(spec, counts, means, sig, targets)
            arm = pick_with_ties(scores, u_alloc[:, t - 1], largest=True)

        if univariate:
            x = true_mu[arm] + true_sig[arm] * z[:, t - 1, 0]
            _welford_push(counts, means, m2, rows, arm, x)
        else:
            shock = np.einsum("cqr,cr->cq", chol[arm], z[:, t - 1, :])
            x = true_mu[arm] + shock
            c_new = counts[rows, arm] + 1.0
            counts[rows, arm] = c_new
            delta = x - means[rows, arm]
            means[rows, arm] = means[rows, arm] + delta / c_new[:, None]
        if record_alloc:
            alloc[:, t - 1] = arm

    # --- final selection ------------------------------------------------
    if univariate:
        dist = np.abs(means - targets)
    else:
        dist = (np.abs(means - targets) / np.sqrt(cov_diag)).sum(axis=2)

    sel_u = np.empty((c_rep, 2))
    sel_gens = []
    for i, m in enumerate(range(lo, hi)):
        gen = rngmod.selection_stream(config.seed, m)
        sel_u[i] = gen.random(2)
        sel_gens.append(gen)
    best = pick_with_ties(dist, sel_u[:, 0], largest=False)
    dist_masked = dist.copy()
    dist_masked[rows, best] = np.inf
    second = pick_with_ties(dist_masked, sel_u[:, 1], largest=False)

    pi = np.full(c_rep, np.nan)
    if compute_pi:
        if univariate:
            sig = _design_sigmas(scenario, counts, m2)
            var = np.broadcast_to(sig * sig, counts.shape) / counts
            pi = folded_superiority_batch(
                means[rows, best], var[rows, best],
                means[rows, second], var[rows, second],
                targets[best], targets[second],
            )
        else:
            sdd = np.sqrt(cov_diag)
            for i in range(c_rep):
                b, s = best[i], second[i]
                zz = sel_gens[i].standard_normal((config.mv_pi_draws, 2, q))
                shock_b = zz[:, 0, :] @ (chol[b].T / math.sqrt(counts[i, b]))
                shock_s = zz[:, 1, :] @ (chol[s].T / math.sqrt(counts[i, s]))
                d_b = (np.abs(means[i, b] + shock_b - targets[b]) / sdd[b]).sum(axis=1)
                d_s = (np.abs(means[i, s] + shock_s - targets[s]) / sdd[s]).sum(axis=1)
                pi[i] = np.mean(d_b < d_s)

    out = {
        "counts": counts, "best": best, "second": second, "pi": pi,
        "means": means, "m2": m2, "alloc": alloc,
    }
    return out


def _design_sigmas(scenario: Scenario, counts, m2):
    """Response sds as seen by the design: known values or plug-in estimates."""
    if scenario.variance_known:
        return scenario.sigmas
    return np.sqrt(np.maximum(m2 / np.maximum(counts - 1.0, 1.0), SIGMA_FLOOR**2))


def _chunk_task(args):
    scenario, config, lo, hi, compute_pi = args
    return lo, _run_chunk(scenario, config, lo, hi, compute_pi=compute_pi)


def simulate_batch(scenario: Scenario, config: TrialConfig, n_replicas: int,
                   workers: int = 1, compute_pi: bool = True) -> BatchResult:
    """Run ``n_replicas`` independent trials; bit-identical for any ``workers``.

    Replicas are partitioned into fixed blocks of :data:`CHUNK`; each block is
    a deterministic function of (scenario, config, block range), so parallel
    and serial execution agree exactly.
    """
    config.validate_for(scenario)
    m = int(n_replicas)
    if m < 1:
        raise ValueError("n_replicas must be >= 1")
    k = scenario.n_arms
    bounds = [(lo, min(lo + CHUNK, m)) for lo in range(0, m, CHUNK)]

    counts = np.empty((m, k))
    best = np.empty(m, dtype=np.int64)
    second = np.empty(m, dtype=np.int64)
    pi = np.empty(m)
    mean_shape = (m, k) if scenario.dim == 1 else (m, k, scenario.dim)
    final_means = np.empty(mean_shape)

    def store(lo, res):
        hi = lo + res["best"].shape[0]
        counts[lo:hi] = res["counts"]
        best[lo:hi] = res["best"]
        second[lo:hi] = res["second"]
        pi[lo:hi] = res["pi"]
        final_means[lo:hi] = res["means"]

    if workers > 1 and len(bounds) > 1:
        tasks = [(scenario, config, lo, hi, compute_pi) for lo, hi in bounds]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for lo, res in pool.map(_chunk_task, tasks):
                store(lo, res)
    else:
        for lo, hi in bounds:
            store(lo, _run_chunk(scenario, config, lo, hi, compute_pi=compute_pi))

    return BatchResult(counts=counts, best=best, second=second, pi=pi,
                       final_means=final_means)


def simulate_trial(scenario: Scenario, config: TrialConfig, replica: int = 0) -> TrialOutcome:
    """One fully deterministic trial (replica ``replica`` of ``config.seed``)."""
    config.validate_for(scenario)
    res = _run_chunk(scenario, config, replica, replica + 1,
                     compute_pi=True, record_alloc=True)
    counts = res["counts"][0]
    if scenario.dim == 1:
        arms = tuple(
            ArmState(count=int(counts[j]), mean=float(res["means"][0, j]),
                     m2=float(res["m2"][0, j]),
                     sigma_known=float(scenario.sigmas[j]) if scenario.variance_known else None,
                     target=float(scenario.targets[j]))
            for j in range(scenario.n_arms)
        )
    else:
        arms = tuple(
            MultiArmState(count=int(counts[j]), mean=res["means"][0, j].copy(),
                          cov=scenario.covs[j].copy(), target=scenario.targets[j].copy())
            for j in range(scenario.n_arms)
        )
    return TrialOutcome(
        allocations=res["alloc"][0].copy(), arms=arms,
        best=int(res["best"][0]), second=int(res["second"][0]),
        pi=float(res["pi"][0]), counts=counts.copy(),
    )


def select_best(arms, targets, rng: np.random.Generator) -> tuple[int, int]:
    """Estimated best and second-best arm by distance of means to targets.

    Univariate states rank by |mean - target|; multivariate states by the
    standardised distance.  Exact ties are resolved uniformly at random.
    """
    targets = np.asarray(targets, dtype=float)
    if isinstance(arms[0], ArmState):
        means = np.array([a.mean for a in arms])
        dist = np.abs(means - targets)
    else:
        dist = np.array([
            float((np.abs(a.mean - a.target) / np.sqrt(np.diag(a.cov))).sum())
            for a in arms
        ])
    u = rng.random(2)
    best = int(pick_with_ties(dist[None, :], u[:1], largest=False)[0])
    masked = dist.copy()
    masked[best] = np.inf
    second = int(pick_with_ties(masked[None, :], u[1:], largest=False)[0])
    return best, second


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def aggregate(batch: BatchResult, scenario: Scenario,
              eta: float | None) -> OperatingCharacteristics:
    """Operating characteristics of a batch against the scenario's truth.

    Patient benefit is the average fraction of patients treated on the truly
    best arm; correct selection compares the replica's (best, second) pair
    against the true distance ranking (any ordering of exactly tied truth is
    counted correct).
    """
    m = batch.n_replicas
    n = batch.counts[0].sum()
    d_true = scenario.true_distances()
    d_sorted = np.sort(d_true)
    best_mask = d_true == d_sorted[0]

    pb_frac = batch.counts[:, best_mask].sum(axis=1) / n
    pb_pct = 100.0 * float(pb_frac.mean())
    pb_se = 100.0 * float(pb_frac.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0

    correct1 = d_true[batch.best] == d_sorted[0]
    # With k truly-tied best arms d_sorted[1] equals d_sorted[0], so any tied
    # ordering of the pair counts as correct.
    correct_pair = correct1 & (d_true[batch.second] == d_sorted[1])

    cs1 = 100.0 * float(correct1.mean())
    cs12 = 100.0 * float(correct_pair.mean())

    rejection_rate = power_cond = power_tc = None
    if eta is not None:
        if not 0.0 < eta < 1.0:
            raise ValueError("eta must be in (0, 1)")
        reject = batch.pi > eta
        rejection_rate = float(reject.mean())
        power_tc = float((reject & correct_pair).mean())
        n_corr = int(correct_pair.sum())
        power_cond = float(reject[correct_pair].mean()) if n_corr > 0 else None

    return OperatingCharacteristics(
        pb_pct=pb_pct, pb_se=pb_se, cs1_pct=cs1, cs12_pct=cs12,
        rejection_rate=rejection_rate, power_conditional=power_cond,
        power_two_components=power_tc, n_replicas=m, eta=eta,
    )


def replicate(scenario: Scenario, config: TrialConfig, n_replicas: int,
              eta: float | None, workers: int = 1) -> OperatingCharacteristics:
    """Monte Carlo operating characteristics of a design on one scenario."""
    batch = simulate_batch(scenario, config, n_replicas, workers=workers)
    return aggregate(batch, scenario, eta)
