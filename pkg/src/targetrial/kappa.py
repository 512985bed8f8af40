"""Robust selection of the exploration penalty kappa over scenario ensembles.

The tuning parameter kappa trades patient benefit against statistical power.
Its robust value is chosen by simulating a grid of kappa values over an
ensemble of plausible alternative scenarios and optimising one of two
objectives:

* patient benefit: minimise the mean squared shortfall of each scenario's
  PB from the scenario's best-over-kappa PB (ties toward smaller kappa);
* power floor: the smallest kappa whose probability (across scenarios) of
  retaining at least ``floor_frac`` of the fixed-randomisation power is at
  least ``xi``; when no kappa qualifies, fall back to the kappa maximising
  that probability (flagged).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import Scenario, TrialConfig, aggregate, simulate_batch
from .inference import NullScenarioSet, calibrate
from .policies import PolicySpec


@dataclass(frozen=True)
class KappaGrid:
    """Ascending kappa values; defaults to 0.5 .. 1.5 in steps of 0.05."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size == 0 or np.any(np.diff(v) <= 0):
            raise ValueError("kappa grid must be non-empty and strictly ascending")

    @classmethod
    def default(cls) -> "KappaGrid":
        return cls(np.round(np.arange(0.5, 1.5001, 0.05), 10))

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class ScenarioEnsemble:
    """Sampled alternative scenarios plus the spec that generated them."""

    scenarios: tuple
    seed: int | None = None
    spec: dict | None = None

    def __len__(self) -> int:
        return len(self.scenarios)


def sample_ensemble(n_arms: int, size: int, seed: int, mu_bounds=(-4.0, 4.0),
                    sigmas=None, sigma_bounds=None, target: float = 0.0,
                    variance_known: bool | None = None) -> ScenarioEnsemble:
    """Draw iid scenarios with means uniform on ``mu_bounds``.

    Arm sds are either the fixed vector ``sigmas`` (known-variance studies) or
    drawn uniformly from ``sigma_bounds`` per arm (unknown-variance studies,
    where the design also estimates them unless ``variance_known`` overrides).
    """
    if (sigmas is None) == (sigma_bounds is None):
        raise ValueError("pass exactly one of sigmas / sigma_bounds")
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    lo, hi = mu_bounds
    scens = []
    for _ in range(int(size)):
        mu = gen.uniform(lo, hi, n_arms)
        if sigmas is not None:
            sig = np.asarray(sigmas, dtype=float)
            known = True if variance_known is None else variance_known
        else:
            sig = gen.uniform(sigma_bounds[0], sigma_bounds[1], n_arms)
            known = False if variance_known is None else variance_known
        scens.append(Scenario.univariate(mu, sig, target, variance_known=known))
    return ScenarioEnsemble(
        scenarios=tuple(scens), seed=seed,
        spec={"n_arms": n_arms, "size": size, "mu_bounds": tuple(mu_bounds),
              "sigmas": None if sigmas is None else list(np.asarray(sigmas, float)),
              "sigma_bounds": None if sigma_bounds is None else tuple(sigma_bounds),
              "target": target},
    )


@dataclass(frozen=True)
class MetricGrid:
    """Metric values u[scenario, kappa] plus the FR baseline column."""

    metric: str
    kappa: KappaGrid
    u: np.ndarray           # (S, n_kappa)
    u_fr: np.ndarray        # (S,)
    etas: np.ndarray | None = None   # per-kappa cut-offs when metric is a power
    eta_fr: float | None = None


def _design_for(template: TrialConfig, policy: PolicySpec) -> TrialConfig:
    return TrialConfig(n_patients=template.n_patients, policy=policy,
                       seed=template.seed, mv_pi_draws=template.mv_pi_draws)


def _cell_task(args):
    scen_idx, col, scenario, config, n_replicas, eta, metric = args
    batch = simulate_batch(scenario, config, n_replicas,
                           compute_pi=metric != "pb")
    oc = aggregate(batch, scenario, eta)
    if metric == "pb":
        val = oc.pb_pct
    elif metric == "power_tc":
        val = oc.power_two_components
    elif metric == "power_cond":
        val = oc.power_conditional if oc.power_conditional is not None else 0.0
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return scen_idx, col, val


def evaluate_metric(ensemble: ScenarioEnsemble, grid: KappaGrid, p: float,
                    metric: str, template: TrialConfig, n_replicas: int,
                    burn_in: int = 5, workers: int = 1,
                    nulls: NullScenarioSet | None = None, alpha: float = 0.05,
                    calibration_replicas: int | None = None) -> MetricGrid:
    """u[s][kappa] for the WE(p, kappa) designs, plus the FR baseline column.

    Power metrics require design-specific cut-offs: each WE(p, kappa) design
    (and FR) is first calibrated on ``nulls`` by the average rule at level
    ``alpha``.  Cells are embarrassingly parallel; results do not depend on
    the worker count.
    """
    if metric not in ("pb", "power_tc", "power_cond"):
        raise ValueError(f"unknown metric {metric!r}")
    s_count = len(ensemble)
    designs = [PolicySpec.we_sym(p, k, burn_in=burn_in) for k in grid.values]
    fr = PolicySpec.fr(burn_in=burn_in)

    etas: list[float | None] = [None] * len(designs)
    eta_fr: float | None = None
    if metric != "pb":
        if nulls is None:
            raise ValueError("power metrics need a null scenario set for calibration")
        m_cal = calibration_replicas or n_replicas
        for i, d in enumerate(designs):
            etas[i] = calibrate("average", nulls, _design_for(template, d),
                                alpha, m_cal, workers=workers).eta
        eta_fr = calibrate("average", nulls, _design_for(template, fr),
                           alpha, m_cal, workers=workers).eta

    tasks = []
    for s_idx, scen in enumerate(ensemble.scenarios):
        for col, d in enumerate(designs):
            tasks.append((s_idx, col, scen, _design_for(template, d),
                          n_replicas, etas[col], metric))
        tasks.append((s_idx, -1, scen, _design_for(template, fr),
                      n_replicas, eta_fr, metric))

    u = np.empty((s_count, len(grid)))
    u_fr = np.empty(s_count)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for s_idx, col, val in pool.map(_cell_task, tasks, chunksize=8):
                if col == -1:
                    u_fr[s_idx] = val
                else:
                    u[s_idx, col] = val
    else:
        for task in tasks:
            s_idx, col, val = _cell_task(task)
            if col == -1:
                u_fr[s_idx] = val
            else:
                u[s_idx, col] = val

    return MetricGrid(metric=metric, kappa=grid, u=u, u_fr=u_fr,
                      etas=None if metric == "pb" else np.array(etas, dtype=float),
                      eta_fr=eta_fr)


def g1_values(u: np.ndarray) -> np.ndarray:
    """Mean squared shortfall of each kappa column from the row-wise maximum."""
    shortfall = u - u.max(axis=1, keepdims=True)
    return np.mean(shortfall**2, axis=0)


def select_kappa_pb(grid_result: MetricGrid) -> tuple[float, np.ndarray]:
    """Patient-benefit-optimal kappa: argmin of g1, ties toward smaller kappa."""
    g1 = g1_values(grid_result.u)
    idx = int(np.argmin(g1))  # argmin returns the first (smallest kappa) tie
    return float(grid_result.kappa.values[idx]), g1


def attainment_probabilities(u: np.ndarray, u_fr: np.ndarray,
                             floor_frac: float = 0.8) -> np.ndarray:
    """P over scenarios that u(kappa) >= floor_frac * u_FR, per kappa."""
    return np.mean(u >= floor_frac * u_fr[:, None], axis=0)


def select_kappa_power(grid_result: MetricGrid, xi: float = 0.9,
                       floor_frac: float = 0.8) -> tuple[float, np.ndarray, bool]:
    """Smallest kappa whose power-floor attainment probability reaches xi.

    Returns ``(kappa, probabilities, fallback)``; ``fallback`` is True when no
    kappa qualifies and the argmax of the attainment probability is returned
    instead (first index on ties, i.e. the smallest such kappa).
    """
    probs = attainment_probabilities(grid_result.u, grid_result.u_fr, floor_frac)
    qualifying = np.nonzero(probs >= xi)[0]
    if qualifying.size:
        return float(grid_result.kappa.values[qualifying[0]]), probs, False
    return float(grid_result.kappa.values[int(np.argmax(probs))]), probs, True
