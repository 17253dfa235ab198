"""Online quantile learners with group-conditional coverage, plus auditors
that measure coverage, external and swap regret on finished transcripts."""
from .auditors import (THEOREMS, check_theorem_bounds, coverage, external_regret,
                       group_conditional_regret, group_coverage, multivalid_coverage,
                       smoothness_estimate, swap_regret, threshold_calibrated_coverage)
from .core import (Grid, GroupSpec, Round, SmoothnessProfile, Transcript, pinball_loss,
                   pinball_subgradient, read_transcript_csv, write_transcript_csv)
from .exceptions import ConfigError, DataError, DimensionError, NumericalError
from .learners import (AdaptiveConformalInference, FTRLCoverage, GroupConditionalACI,
                       ScriptedPredictor, SwapRegretQuantile)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConformalInference", "ConfigError", "DataError", "DimensionError",
    "FTRLCoverage", "Grid", "GroupConditionalACI", "GroupSpec", "NumericalError",
    "Round", "ScriptedPredictor", "SmoothnessProfile", "SwapRegretQuantile", "THEOREMS",
    "Transcript", "check_theorem_bounds", "coverage", "external_regret",
    "group_conditional_regret", "group_coverage", "multivalid_coverage",
    "pinball_loss", "pinball_subgradient", "read_transcript_csv", "smoothness_estimate",
    "swap_regret", "threshold_calibrated_coverage", "write_transcript_csv",
]
