"""Space-time peaks-over-threshold analysis of non-stationary extremes.

The pipeline pools daily records from m stations, estimates a common tail
(``tail``), the trend of exceedance frequencies over time and space
(``scedasis``), tests it (``trend_tests``), maps exceedances to a stationary
sample (``homogenize``), fits an anisotropic Huesler-Reiss dependence model
(``dependence``) and turns everything into failure probabilities (``risk``).
"""

__version__ = "0.1.0"

from .decluster import DeclusteredPanel, Declusterer, decluster
from .dependence import (PairEstimate, VariogramFitter, VariogramParams, fit_variogram,
                         hr_pair_L, invert_variogram, pair_tail_dependence,
                         pairwise_dependence, variogram_model)
from .homogenize import HomogenizedSample, Homogenizer, homogenize, homogenize_values
from .ingest import (DataError, ObservationPanel, StationRecord, load_observations,
                     load_stations, select_season)
from .risk import (FailureProbabilityEstimator, FirstOrderApproximationWarning,
                   iid_failure_prob, joint_failure_prob, marginal_failure_prob)
from .scedasis import ScedasisEstimate, ScedasisEstimator, estimate_C, estimate_c
from .synth import SynthSpec, simulate_panel
from .tail import DegenerateSampleError, TailEstimator, TailFit, fit_tail
from .trend_tests import TrendTester, TrendTestResult, run_tests

__all__ = [
    "DataError", "DeclusteredPanel", "Declusterer", "DegenerateSampleError",
    "FailureProbabilityEstimator", "FirstOrderApproximationWarning", "HomogenizedSample",
    "Homogenizer", "ObservationPanel", "PairEstimate", "ScedasisEstimate", "ScedasisEstimator",
    "StationRecord", "SynthSpec", "TailEstimator", "TailFit", "TrendTestResult", "TrendTester",
    "VariogramFitter", "VariogramParams", "decluster", "estimate_C", "estimate_c",
    "fit_tail", "fit_variogram", "homogenize", "homogenize_values", "hr_pair_L",
    "iid_failure_prob", "invert_variogram", "joint_failure_prob", "load_observations",
    "load_stations", "marginal_failure_prob", "pair_tail_dependence", "pairwise_dependence",
    "run_tests", "select_season", "simulate_panel", "variogram_model",
]
