"""Reduced collocation methods (least-squares and empirical) for parametrized PDEs
on Chebyshev grids, with analytical parameter-dependent preconditioners."""
from .archive import load_model, save_model
from .estimator import BurgersReducedCollocationSolver, ReducedCollocationSolver
from .exceptions import (ArchiveError, ArchiveIntegrityError, ArchiveVersionError, ConvergenceError, DomainError,
                         GreedyAbort, LinearDependenceError, RankDeficiencyError, RedCollocError,
                         SingularMatrixError)
from .greedy import (EstimatorMode, ExactSigma, GreedyHistory, ReducedBasis, mgs, train_ercm, train_ercm_burgers,
                     train_lsrcm)
from .numerics import Grid1D, Grid2D, cheb_diff_matrix, cheb_points, clenshaw_curtis_weights
from .problem import ParameterDomain, build_burgers1d, build_diffusion2d, build_problem, training_grid
from .reduced import precompute, precompute_burgers, reconstruct, solve_batch, solve_online
from .truth import NewtonConfig, solve_truth, solve_truth_burgers

__version__ = "0.1.0"
