"""Prediction error and model search for data drawn from two related sources."""

from .dataio import (DataError, StandardizedData, TwoSetData, build_geyser, load_csv,
                     partition_diabetes, standardize)
from .linmodel import (BACKWARD, FORWARD, ErrorBreakdown, ModelPair, VarianceEstimates,
                       fw_fit, pe_grcm, pe_rcm)
from .hyperg import HyperGFit, estimate_variances, hyperg_fit

__version__ = "0.1.0"

__all__ = [
    "DataError", "StandardizedData", "TwoSetData", "build_geyser", "load_csv",
    "partition_diabetes", "standardize", "BACKWARD", "FORWARD", "ErrorBreakdown",
    "ModelPair", "VarianceEstimates", "fw_fit", "pe_grcm", "pe_rcm", "HyperGFit",
    "estimate_variances", "hyperg_fit", "__version__",
]
