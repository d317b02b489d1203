"""Greedy Monte-Carlo search for l0-constrained sparse linear regression."""

__version__ = "0.1.0"

from .cv import LooReport, loo_cv_error, loo_system, selection_counts
from .datagen import EnsembleParams, PlantedInstance, gen_planted, random_support
from .dataio import load_csv, load_instance, save_instance, standardize
from .experiments import (
    input_mse,
    noisy_mse_curve,
    nconv_scaling,
    phase_sweep,
    success_experiment,
    success_rate,
)
from .linalg import (
    FactorState,
    Instance,
    LeastSquaresFit,
    SparseWeight,
    commit_pair_flip,
    energy,
    energy_after_pair_flip,
    factor_init,
    fit_least_squares,
)
from .search import (
    GmcConfig,
    GmcResult,
    Termination,
    exhaustive_local_search,
    gmc,
    mc_pair_flip,
    multi_restart,
    run_one_mcs,
)
