"""Estimands and estimators for time-to-event outcomes with intercurrent events.

The package encodes trial data in a discrete-time node structure, rewrites
it under intercurrent-event handling strategies, simulates trials with known
potential outcomes, and estimates regime-specific survival by product-limit,
inverse-probability weighting, sequential g-computation with a targeting
step, Aalen-Johansen cumulative incidence and multiple imputation.
"""
__version__ = "0.1.0"

from .data import (ABSENT, NA, Censoring, CompetingDataset, ConventionConflictError, EstimandSpec, Summary,
                   SubjectRecord, Timeline, TrialDataset, Violation, apply_conventions, at_risk, risk_set,
                   validate_dataset)
from .discretize import DiscretizedRow, EventTimes, discretize_subject, discretize_times, discretize_with_ice
from .strategies import (IceRecord, PlanIncompleteError, RegimeSpec, Strategy, StrategyPlan, apply_strategy,
                         compose_plan, make_regime_while_on_treatment)
from .simulate import (DgpConfig, PotentialOutcomes, SimulatedTrial, classify_principal_strata,
                       monte_carlo_survival, sace_oracle, simulate_potential, simulate_trial)
from .estimation import (EstimateResult, HistorySpec, IdentifiabilityError, SurvivalCurve, aalen_johansen,
                         aalen_johansen_cif, bootstrap_se, contrast, fit_logistic, gcomp_fit,
                         gcomp_with_targeting, ipcw_survival, kaplan_meier, km_estimate, seq_gcomp,
                         targeted_update)
from .mi import (Assumption, MiSpec, PooledEstimate, TentativeDataset, combined_mi, fit_imputation_models,
                 impute_car, make_tentative_cr, make_tentative_j2r, monotone_adjust, restore_original,
                 rubin_pool, run_mi)

__all__ = [
    "ABSENT", "NA", "Censoring", "CompetingDataset", "ConventionConflictError", "EstimandSpec", "Summary",
    "SubjectRecord", "Timeline", "TrialDataset", "Violation", "apply_conventions", "at_risk", "risk_set",
    "validate_dataset", "DiscretizedRow", "EventTimes", "discretize_subject", "discretize_times",
    "discretize_with_ice", "IceRecord", "PlanIncompleteError", "RegimeSpec", "Strategy", "StrategyPlan",
    "apply_strategy", "compose_plan", "make_regime_while_on_treatment", "DgpConfig", "PotentialOutcomes",
    "SimulatedTrial", "classify_principal_strata", "monte_carlo_survival", "sace_oracle", "simulate_potential",
    "simulate_trial", "EstimateResult", "HistorySpec", "IdentifiabilityError", "SurvivalCurve",
    "aalen_johansen", "aalen_johansen_cif", "bootstrap_se", "contrast", "fit_logistic", "gcomp_fit",
    "gcomp_with_targeting", "ipcw_survival", "kaplan_meier", "km_estimate", "seq_gcomp", "targeted_update",
    "Assumption", "MiSpec", "PooledEstimate", "TentativeDataset", "combined_mi", "fit_imputation_models",
    "impute_car", "make_tentative_cr", "make_tentative_j2r", "monotone_adjust", "restore_original",
    "rubin_pool", "run_mi",
]
