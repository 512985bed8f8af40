"""Robust selection of the exploration penalty kappa (smoke scale).

Samples an ensemble of plausible four-arm scenarios, evaluates the patient
benefit of WE(p, kappa) over the kappa grid, and selects the robust optimum
by the squared-shortfall objective; then repeats for the power-floor rule.
"""

from targetrial import (KappaGrid, PolicySpec, TrialConfig, evaluate_metric,
                        null_grid_univariate, sample_ensemble, select_kappa_pb,
                        select_kappa_power)

ensemble = sample_ensemble(n_arms=4, size=50, seed=7, mu_bounds=(-4, 4),
                           sigmas=[2, 2, 2, 4])
grid = KappaGrid.default()
template = TrialConfig(100, PolicySpec.fr(burn_in=5), seed=11)
nulls = null_grid_univariate([2, 2, 2, 4], 0.0, c_max=40.0, points=10)

for p in (1.0, 2.0):
    pb = evaluate_metric(ensemble, grid, p, "pb", template, n_replicas=500,
                         burn_in=5, workers=2)
    k_pb, g1 = select_kappa_pb(pb)
    print(f"p={p:g}: patient-benefit kappa* = {k_pb}")

    power = evaluate_metric(ensemble, grid, p, "power_tc", template,
                            n_replicas=500, burn_in=5, workers=2, nulls=nulls,
                            alpha=0.05, calibration_replicas=500)
    k_pw, probs, fallback = select_kappa_power(power, xi=0.9, floor_frac=0.8)
    note = " (fallback: maximiser of the attainment probability)" if fallback else ""
    print(f"p={p:g}: power-floor kappa*     = {k_pw}{note}")
