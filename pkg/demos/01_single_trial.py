"""Walk through one simulated adaptive trial, patient by patient.

Four arms, known sds (2, 2, 2, 4), clinical target 0, burn-in 5 per arm,
information-gain allocation WE(1, 0.55). Shows the allocation path, the final
arm states and the best-vs-second-best superiority statistic.
"""

import numpy as np

from targetrial import PolicySpec, Scenario, TrialConfig, simulate_trial

scenario = Scenario.univariate(
    means=[1.91, -3.36, -0.37, 3.99], sigmas=[2, 2, 2, 4], target=0.0)
config = TrialConfig(n_patients=100,
                     policy=PolicySpec.we_sym(p=1, kappa=0.55, burn_in=5),
                     seed=20260810)

out = simulate_trial(scenario, config)

print("allocation sequence (patients 1..100):")
print(np.array2string(out.allocations + 1, max_line_width=80))
print("\nper-arm totals:", out.counts.astype(int).tolist())
print("final means:   ", [round(a.mean, 3) for a in out.arms])
print(f"\nestimated best arm: {out.best + 1}, second best: {out.second + 1}")
print(f"posterior P(best closer to target than second) = {out.pi:.4f}")
print("reject at eta=0.95?" , out.pi > 0.95)
