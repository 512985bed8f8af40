"""Reproduce a desk-scale slice of the univariate operating characteristics.

Calibrates each design's cut-off on the common-offset null grid (average
type-I control at 5%), then replicates the two reference scenarios and prints
the table rows: patient benefit, correct-selection rates, both powers.
"""

from targetrial import (PolicySpec, Scenario, TrialConfig, calibrate,
                        null_grid_univariate, replicate)

SIGMAS = [2, 2, 2, 4]
REPLICAS = 2000
designs = [
    ("FR", PolicySpec.fr(burn_in=5)),
    ("CB", PolicySpec.cb(burn_in=5)),
    ("WE(1,0.55)", PolicySpec.we_sym(1, 0.55, burn_in=5)),
    ("WE(2,1.1)", PolicySpec.we_sym(2, 1.1, burn_in=5)),
]
scenarios = [
    ("scenario I", Scenario.univariate([1.91, -3.36, -0.37, 3.99], SIGMAS, 0.0)),
    ("scenario II", Scenario.univariate([1.13, -3.48, -3.57, 0.34], SIGMAS, 0.0)),
]

nulls = null_grid_univariate(SIGMAS, 0.0, c_max=40.0, points=10)
etas = {}
for name, policy in designs:
    cfg = TrialConfig(100, policy, seed=1)
    etas[name] = calibrate("average", nulls, cfg, alpha=0.05,
                           n_replicas=REPLICAS, workers=2).eta
    print(f"calibrated eta[{name}] = {etas[name]:.4f}")

for scen_name, scenario in scenarios:
    print(f"\n{scen_name}")
    print(f"{'design':<12}{'PB':>8}{'(se)':>8}{'CS1%':>8}{'CS12%':>8}"
          f"{'condPow':>9}{'tcPow':>8}")
    for name, policy in designs:
        oc = replicate(scenario, TrialConfig(100, policy, seed=2),
                       REPLICAS, eta=etas[name], workers=2)
        print(f"{name:<12}{oc.pb_pct:>8.2f}{oc.pb_se:>8.2f}{oc.cs1_pct:>8.2f}"
              f"{oc.cs12_pct:>8.2f}{oc.power_conditional:>9.3f}"
              f"{oc.power_two_components:>8.3f}")
