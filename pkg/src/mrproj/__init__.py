"""
Local least-squares regression on dyadic cells with Daubechies scaling
functions, spectral thresholding of the local Gram matrices and pointwise
Lepski selection of the resolution level.
"""
from .adapt import AdaptiveEstimate, ResolutionGrid, adaptive_estimate, lepski_select, resolution_grid
from .exceptions import BasisConstructionError, ConfigurationError, FitError, PreconditionError
from .lattice import CellIndex, DesignSample, occupancy
from .regress import CellFitTable, EstimatorConfig, ThresholdPolicy, estimate, fit_level, local_fit
from .scaling import ScalingBasis, build_basis, design_matrix, eval_phi
from .unknown_support import MalteseEstimator, find_anchor, maltese_estimate, split

__version__ = "0.1.0"

__all__ = [
    "AdaptiveEstimate",
    "BasisConstructionError",
    "CellFitTable",
    "CellIndex",
    "ConfigurationError",
    "DesignSample",
    "EstimatorConfig",
    "FitError",
    "MalteseEstimator",
    "PreconditionError",
    "ResolutionGrid",
    "ScalingBasis",
    "ThresholdPolicy",
    "adaptive_estimate",
    "build_basis",
    "design_matrix",
    "estimate",
    "eval_phi",
    "find_anchor",
    "fit_level",
    "lepski_select",
    "local_fit",
    "maltese_estimate",
    "occupancy",
    "resolution_grid",
    "split",
]
