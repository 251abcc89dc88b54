"""Estimators of regime-specific survival and cumulative incidence."""
from .design import HistorySpec
from .gcomp import GcompFit, gcomp_fit, gcomp_with_targeting, seq_gcomp, targeted_update
from .inference import BootstrapResult, bootstrap_se, contrast
from .logistic import LogisticFit, SeparationWarning, SingularDesignError, fit_logistic
from .results import EstimateResult, IdentifiabilityError, SurvivalCurve
from .survival import (TruncationWarning, aalen_johansen, aalen_johansen_cif, cumulative_weights,
                       ipcw_survival, kaplan_meier, km_estimate, node_probabilities)

__all__ = [
    "HistorySpec", "GcompFit", "gcomp_fit", "gcomp_with_targeting", "seq_gcomp", "targeted_update",
    "BootstrapResult", "bootstrap_se", "contrast", "LogisticFit", "SeparationWarning",
    "SingularDesignError", "fit_logistic", "EstimateResult", "IdentifiabilityError", "SurvivalCurve",
    "TruncationWarning", "aalen_johansen", "aalen_johansen_cif", "cumulative_weights",
    "ipcw_survival", "kaplan_meier", "km_estimate", "node_probabilities",
]
