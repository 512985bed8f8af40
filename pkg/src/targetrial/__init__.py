"""Response-adaptive multi-arm trials targeting a clinical value.

Arms are ranked by how close their mean response lies to a pre-specified
target; allocation is driven by a weighted-entropy information gain whose
tuning parameter ``kappa`` trades patient benefit against statistical power.
The package simulates trials, calibrates the best-vs-second-best superiority
test, selects ``kappa`` robustly over scenario ensembles, and conducts live
trials through an event-logged session engine with an HTTP front.
"""

from .engine import (OperatingCharacteristics, Scenario, TrialConfig, TrialOutcome,
                     aggregate, replicate, select_best, simulate_batch, simulate_trial)
from .gain import (AsymmetricGainParams, MultivariateGainInputs, NoOptimalBError,
                   SymmetricGainParams, asymmetric_gain, correlation_argmax,
                   multivariate_gain, optimal_b, symmetric_gain)
from .inference import (CutoffCalibration, NullScenarioSet, calibrate,
                        calibrate_individual, null_grid_bivariate,
                        null_grid_sigma_cross, null_grid_univariate,
                        superiority_statistic, type_i_rate)
from .kappa import (KappaGrid, ScenarioEnsemble, evaluate_metric, sample_ensemble,
                    select_kappa_pb, select_kappa_power)
from .policies import (GittinsTable, PolicySpec, next_arm, ts_best_probabilities)
from .sessions import LiveSession, SessionConfig, SessionStore
from .stats import (ArmState, GaussianPosterior, TruncatedMoments,
                    folded_superiority_prob, posterior, truncated_normal_moments,
                    update_arm)

__version__ = "0.1.0"

__all__ = [
    "ArmState", "AsymmetricGainParams", "CutoffCalibration", "GaussianPosterior",
    "GittinsTable", "KappaGrid", "LiveSession", "MultivariateGainInputs",
    "NoOptimalBError", "NullScenarioSet", "OperatingCharacteristics", "PolicySpec",
    "Scenario", "ScenarioEnsemble", "SessionConfig", "SessionStore",
    "SymmetricGainParams", "TrialConfig", "TrialOutcome", "TruncatedMoments",
    "aggregate", "asymmetric_gain", "calibrate", "calibrate_individual",
    "correlation_argmax", "evaluate_metric", "folded_superiority_prob",
    "multivariate_gain", "next_arm", "null_grid_bivariate", "null_grid_sigma_cross",
    "null_grid_univariate", "optimal_b", "posterior", "replicate", "sample_ensemble",
    "select_best", "select_kappa_pb", "select_kappa_power", "simulate_batch",
    "simulate_trial", "superiority_statistic", "symmetric_gain",
    "truncated_normal_moments", "ts_best_probabilities", "type_i_rate", "update_arm",
]
