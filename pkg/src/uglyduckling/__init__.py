"""Spine estimation in spinal-structured Galton-Watson trees."""

from .divergence import (
    ProblemSpec,
    SolverConfig,
    SolverError,
    SolverReport,
    criterion_K,
    divergence_D,
    kkt_residual,
    script_V,
    solve_V,
)
from .estimate import estimate, f_hat, mu_hat, mu_star, nu_hat, ugly_duckling
from .prob import Counts, Distribution, TransformFn, bhattacharyya, bias, kl, mean, special_law
from .spine import SpineReport, Status, identify
from .tree import ObservedTree, Tree, observe, simulate_gw, simulate_sst

__version__ = "0.1.0"
