"""Bivariate ordered discrete response models with lattice and non-lattice thresholds."""

__version__ = "0.1.0"

from .dgp import design, simulate
from .estimation import EstimationResult, FitConfig, fit_lattice, fit_nonlattice
from .gaussian import bvn_cdf
from .likelihood import Dataset, ModelParams, cell_prob, cell_prob_matrix, loglik, score
from .mrc import MrcConfig, fit_mrc
from .structure import ResponseSpec, ThresholdStructure, detect_hierarchy, is_coherent

__all__ = [
    "Dataset", "EstimationResult", "FitConfig", "ModelParams", "MrcConfig", "ResponseSpec",
    "ThresholdStructure", "bvn_cdf", "cell_prob", "cell_prob_matrix", "design", "detect_hierarchy",
    "fit_lattice", "fit_mrc", "fit_nonlattice", "is_coherent", "loglik", "score", "simulate",
]
