"""Allocation policies: map the current trial state to the next arm.

Every trial starts with a burn-in phase in which each of the K arms receives
B patients in deterministic round-robin order (arm ``(t-1) mod K`` for patient
``t``).  From patient ``K*B + 1`` on, the configured rule takes over:

* ``fr``      fixed randomisation, each arm with probability 1/K;
* ``cb``      current belief, arm whose posterior mean is closest to its target;
* ``ts``      Thompson-style, arm maximising (or sampling from) the adjusted
              posterior probability of being the best, exponent ``t / (2N)``;
* ``sgi``     symmetric Gittins rule, argmin of |mean - target| minus the
              tabulated learning bonus ``sigma * gbar(n, d)``;
* ``tgi``     targeted Gittins rule, argmin of the distance between the
              one-sided Gittins index and the target;
* ``we_sym`` / ``we_asym`` / ``we_mv``  information-gain rules, argmax of the
              corresponding weighted-entropy gain.

Deterministic rules break exact score ties uniformly at random from the
trial's seeded stream, which avoids any bias toward low arm indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gain
from .stats import ArmState

TS_MIN_DRAWS = 100


class GittinsTableError(ValueError):
    """Missing or malformed Gittins index table."""


@dataclass(frozen=True)
class GittinsTable:
    """Standardised Gittins index values ``gbar(n, d)`` for one discount d.

    ``ns`` must be strictly increasing and ``values`` nonincreasing (the value
    of learning decays with the sample size).  Queries interpolate linearly in
    1/n between tabulated points and extrapolate as constants beyond the ends.
    """

    discount: float
    ns: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ns = np.asarray(self.ns, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "ns", ns)
        object.__setattr__(self, "values", values)
        if ns.ndim != 1 or ns.shape != values.shape or ns.size == 0:
            raise GittinsTableError("table needs matching, non-empty n and value columns")
        if np.any(np.diff(ns) <= 0):
            raise GittinsTableError("sample sizes must be strictly increasing")
        if np.any(np.diff(values) > 1e-12):
            raise GittinsTableError("index values must be nonincreasing in n")
        if not 0.0 < self.discount < 1.0:
            raise GittinsTableError(f"discount must be in (0, 1), got {self.discount}")

    @classmethod
    def from_file(cls, path) -> "GittinsTable":
        """Parse a plain-text table: header line ``d=<value>``, then ``n gbar`` pairs."""
        lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        if not lines or not lines[0].replace(" ", "").startswith("d="):
            raise GittinsTableError(f"{path}: expected header line 'd=<value>'")
        discount = float(lines[0].split("=", 1)[1])
        ns, values = [], []
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 2:
                raise GittinsTableError(f"{path}: expected 'n gbar' pairs, got {ln!r}")
            ns.append(float(parts[0]))
            values.append(float(parts[1]))
        return cls(discount=discount, ns=np.array(ns), values=np.array(values))

    @classmethod
    def zero_stub(cls, discount: float = 0.99, max_n: int = 1000) -> "GittinsTable":
        """All-zero learning bonus: SGI and TGI collapse to current belief."""
        return cls(discount=discount, ns=np.array([1.0, float(max_n)]),
                   values=np.zeros(2))

    def lookup(self, n):
        """gbar at sample size(s) n: linear in 1/n inside the table, constant outside."""
        n = np.asarray(n, dtype=float)
        inv = 1.0 / np.maximum(n, 1.0)
        inv_tab = 1.0 / self.ns[::-1]        # ascending in 1/n
        val_tab = self.values[::-1]
        out = np.interp(inv, inv_tab, val_tab)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class PolicySpec:
    """Allocation rule plus burn-in size.

    Use the factory constructors (``PolicySpec.we_sym(...)`` etc.) rather than
    filling unrelated fields by hand.
    """

    kind: str
    burn_in: int = 1
    p: float = 2.0
    kappa: float = 1.0
    a: float = 1.0
    b: float = 1.0
    draws: int = 1000
    mode: str = "argmax"
    discount: float = 0.99
    gittins: GittinsTable | None = None
    allow_low_kappa: bool = False

    _KINDS = ("fr", "cb", "ts", "sgi", "tgi", "we_sym", "we_asym", "we_mv")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.burn_in < 1:
            raise ValueError("burn-in must be >= 1")
        if self.kind in ("we_sym", "we_asym", "we_mv"):
            gain._check_kappa(self.kappa, self.allow_low_kappa)
        if self.kind == "we_asym" and (self.a <= 0 or self.b <= 0):
            raise ValueError("asymmetry parameters must be positive")
        if self.kind == "ts":
            if self.draws < TS_MIN_DRAWS:
                raise ValueError(f"ts draws must be >= {TS_MIN_DRAWS} (estimator too noisy)")
            if self.mode not in ("argmax", "sample"):
                raise ValueError("ts mode must be 'argmax' or 'sample'")
        if self.kind in ("sgi", "tgi"):
            if self.gittins is None:
                raise GittinsTableError(f"{self.kind} requires a Gittins table")
            if abs(self.gittins.discount - self.discount) > 1e-12:
                raise GittinsTableError(
                    f"table discount {self.gittins.discount} does not match requested {self.discount}"
                )

    # -- factories ----------------------------------------------------------
    @classmethod
    def fr(cls, burn_in: int = 1) -> "PolicySpec":
        return cls(kind="fr", burn_in=burn_in)

    @classmethod
    def cb(cls, burn_in: int = 1) -> "PolicySpec":
        return cls(kind="cb", burn_in=burn_in)

    @classmethod
    def ts(cls, draws: int = 1000, mode: str = "argmax", burn_in: int = 1) -> "PolicySpec":
        return cls(kind="ts", draws=draws, mode=mode, burn_in=burn_in)

    @classmethod
    def sgi(cls, table: GittinsTable, discount: float = 0.99, burn_in: int = 1) -> "PolicySpec":
        return cls(kind="sgi", gittins=table, discount=discount, burn_in=burn_in)

    @classmethod
    def tgi(cls, table: GittinsTable, discount: float = 0.99, burn_in: int = 1) -> "PolicySpec":
        return cls(kind="tgi", gittins=table, discount=discount, burn_in=burn_in)

    @classmethod
    def we_sym(cls, p: float, kappa: float, burn_in: int = 1, **kw) -> "PolicySpec":
        return cls(kind="we_sym", p=p, kappa=kappa, burn_in=burn_in, **kw)

    @classmethod
    def we_asym(cls, a: float, b: float, kappa: float = 1.0, burn_in: int = 1, **kw) -> "PolicySpec":
        return cls(kind="we_asym", a=a, b=b, kappa=kappa, burn_in=burn_in, **kw)

    @classmethod
    def we_mv(cls, kappa: float, burn_in: int = 1, **kw) -> "PolicySpec":
        return cls(kind="we_mv", kappa=kappa, burn_in=burn_in, **kw)

    @property
    def label(self) -> str:
        if self.kind == "we_sym":
            return f"WE({self.p:g},{self.kappa:g})"
        if self.kind == "we_asym":
            return f"WE[a={self.a:g},b={self.b:g},k={self.kappa:g}]"
        if self.kind == "we_mv":
            return f"WE({self.kappa:g})"
        return self.kind.upper()

    @property
    def needs_posterior(self) -> bool:
        return self.kind != "fr"


def burn_in_arm(t: int, n_arms: int) -> int:
    """Round-robin burn-in: patient t (1-based) goes to arm ``(t-1) mod K``."""
    return (t - 1) % n_arms


def pick_with_ties(scores: np.ndarray, u: np.ndarray, largest: bool = True) -> np.ndarray:
    """Row-wise arg-best of ``scores`` (C, K); exact ties broken by ``u`` (C,).

    The tied arm with rank ``floor(u * #ties)`` is chosen, so the break is
    uniform given u ~ U[0, 1).
    """
    ext = scores.max(axis=1, keepdims=True) if largest else scores.min(axis=1, keepdims=True)
    tied = scores == ext
    n_tied = tied.sum(axis=1)
    pick = np.minimum((u * n_tied).astype(np.int64), n_tied - 1)
    rank = np.cumsum(tied, axis=1)
    return np.argmax(tied & (rank == (pick + 1)[:, None]), axis=1)


def _ts_pick_row(means, sds, targets, spec: PolicySpec, t: int, n_patients: int,
                 u: float, gen: np.random.Generator) -> int:
    """Thompson decision for one replica at patient t."""
    c = t / (2.0 * n_patients)
    probs = ts_best_probabilities_from_moments(means, sds, targets, spec.draws, gen, c=c)
    if spec.mode == "argmax":
        scores = probs[None, :]
        return int(pick_with_ties(scores, np.array([u]), largest=True)[0])
    cum = np.cumsum(probs)
    return int(np.searchsorted(cum, u * cum[-1], side="right").clip(0, probs.size - 1))


def ts_best_probabilities_from_moments(means, sds, targets, draws: int,
                                       gen: np.random.Generator, c: float = 1.0) -> np.ndarray:
    """Adjusted posterior probabilities of being the best arm.

    Estimates P(j = argmin_l |mu_l - target_l|) from ``draws`` joint posterior
    samples, then returns the normalised power transform p_j^c (zero stays
    zero).  The argmax is invariant to c; only the ``sample`` mode feels it.
    """
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    k = means.shape[0]
    if k == 1:
        return np.array([1.0])
    if draws < TS_MIN_DRAWS:
        raise ValueError(f"draws must be >= {TS_MIN_DRAWS}")
    sample = means + sds * gen.standard_normal((int(draws), k))
    winner = np.argmin(np.abs(sample - targets), axis=1)
    phat = np.bincount(winner, minlength=k) / float(draws)
    powed = np.where(phat > 0.0, phat**c, 0.0)
    total = powed.sum()
    if total == 0.0:  # unreachable with draws >= 1; kept as a guard
        return np.full(k, 1.0 / k)
    return powed / total


def ts_best_probabilities(arms, targets, draws: int, rng: np.random.Generator,
                          c: float = 1.0) -> np.ndarray:
    """Spec of :func:`ts_best_probabilities_from_moments` over ``ArmState``s."""
    from .stats import posterior

    posts = [posterior(a) for a in arms]
    means = np.array([p.mean for p in posts])
    sds = np.array([p.sd for p in posts])
    return ts_best_probabilities_from_moments(means, sds, np.asarray(targets, dtype=float),
                                              draws, rng, c=c)


def policy_scores(spec: PolicySpec, counts, means, sigmas, targets) -> np.ndarray:
    """Adaptive-phase decision scores, shape (C, K); higher is better.

    ``counts``/``means`` are (C, K) state arrays, ``sigmas`` the (C, K) or (K,)
    response sds the design works with (known values or plug-in estimates),
    ``targets`` the (K,) clinical values.  Distance-based rules return negated
    distances so a single argmax applies everywhere.  ``fr``/``ts`` and the
    multivariate gain are handled by the callers, not here.
    """
    counts = np.asarray(counts, dtype=float)
    means = np.asarray(means, dtype=float)
    if spec.kind == "we_sym":
        params = gain.SymmetricGainParams(spec.p, spec.kappa, allow_low_kappa=True)
        return gain.symmetric_gain(means, sigmas, counts, targets, params)
    if spec.kind == "we_asym":
        params = gain.AsymmetricGainParams(spec.a, spec.b, spec.kappa, allow_low_kappa=True)
        return gain.asymmetric_gain(means, sigmas, counts, targets, params)
    if spec.kind == "cb":
        return -np.abs(means - targets)
    if spec.kind == "sgi":
        bonus = sigmas * spec.gittins.lookup(counts)
        return -(np.abs(means - targets) - bonus)
    if spec.kind == "tgi":
        bonus = sigmas * spec.gittins.lookup(counts)
        plus = np.abs(means + bonus - targets)
        minus = np.abs(means - bonus - targets)
        return -np.where(means <= targets, plus, minus)
    raise ValueError(f"no closed-form scores for policy kind {spec.kind!r}")


def next_arm(spec: PolicySpec, arms, t: int, n_patients: int,
             rng: np.random.Generator | None = None, *,
             tiebreak_u: float | None = None,
             ts_stream: np.random.Generator | None = None) -> int:
    """Arm (0-based) for patient ``t`` of ``n_patients``, given current state.

    During burn-in (t <= K*B) the round-robin scheduler decides; afterwards the
    rule of ``spec`` applies to the arm posteriors.  Exactly one uniform is
    consumed for tie-breaking (``fr`` and ``ts``-sample use it as their
    randomisation source): from ``tiebreak_u`` when given, else from ``rng``.
    ``ts`` draws its posterior samples from ``ts_stream`` (default ``rng``).
    The trial engine and live sessions route their positional per-patient
    uniforms through these keyword arguments, so their decisions coincide with
    this function exactly.
    """
    k = len(arms)
    if not 1 <= t <= n_patients:
        raise ValueError(f"patient index t={t} outside 1..{n_patients}")
    if t <= k * spec.burn_in:
        return burn_in_arm(t, k)
    u = float(rng.random()) if tiebreak_u is None else float(tiebreak_u)
    if spec.kind == "fr":
        return min(int(u * k), k - 1)

    from .stats import posterior

    if isinstance(arms[0], ArmState):
        posts = [posterior(a) for a in arms]
        means = np.array([p.mean for p in posts])
        counts = np.array([float(a.count) for a in arms])
        targets = np.array([a.target for a in arms])
        if arms[0].sigma_known is not None:
            sigmas = np.array([a.sigma_known for a in arms])
        else:
            from .stats import sample_variance

            sigmas = np.sqrt(np.maximum([sample_variance(a) for a in arms], 1e-24))
        if spec.kind == "ts":
            sds = np.array([p.sd for p in posts])
            gen = ts_stream if ts_stream is not None else rng
            return _ts_pick_row(means, sds, targets, spec, t, n_patients, u, gen)
        scores = policy_scores(spec, counts[None, :], means[None, :], sigmas, targets)
        return int(pick_with_ties(scores, np.array([u]), largest=True)[0])

    # multivariate states (engine.MultiArmState)
    if spec.kind not in ("we_mv", "cb", "ts"):
        raise ValueError(f"policy {spec.kind!r} is univariate-only")
    counts = np.array([float(a.count) for a in arms])
    means = np.stack([np.asarray(a.mean, dtype=float) for a in arms])      # (K, q)
    targets = np.stack([np.asarray(a.target, dtype=float) for a in arms])  # (K, q)
    covs = np.stack([np.asarray(a.cov, dtype=float) for a in arms])        # (K, q, q)
    if spec.kind == "ts":
        raise NotImplementedError("multivariate Thompson sampling is not provided")
    if spec.kind == "cb":
        sdd = np.sqrt(np.stack([np.diag(c) for c in covs]))
        scores = -(np.abs(means - targets) / sdd).sum(axis=1)
    else:
        scores = np.array([
            gain.multivariate_gain(gain.MultivariateGainInputs(
                xbar=means[j], cov=covs[j], target=targets[j],
                n=int(counts[j]), kappa=spec.kappa, allow_low_kappa=True))
            for j in range(k)
        ])
    return int(pick_with_ties(scores[None, :], np.array([u]), largest=True)[0])
