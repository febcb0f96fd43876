"""Manifold Gaussian process regression with ALC active learning.

A small MLP maps inputs to a latent space where a stationary GP is fitted;
the network and GP hyperparameters are trained jointly on the negative log
marginal likelihood with L-BFGS. New design points are chosen from a
variance-screened candidate pool by the ALC (integrated variance reduction)
criterion.
"""

from .active_learning import (AlConfig, Dataset, PoolState, RunRecord, alc_score, alc_scores,
                              rmse, run_loop, select_batch, variance_screen)
from .benchmarks import Problem, get_problem, make_problem_data
from .designs import DesignSpec, lhd_sample, uniform_grid
from .errors import (DivergenceError, DomainError, FitFailureError, IllConditionedError,
                     InvalidKernelError, InvalidSpecError, OracleError, ShapeError,
                     UnsupportedGridError)
from .gp_core import GpState, build_state, nlml, predict, predict_batch, profile_tau2
from .harness import ExperimentConfig, aggregate, run_experiment
from .kernels import KernelSpec, corr, corr_matrix, corr_vector
from .lbfgs import OptimConfig, minimize
from .manifold_map import MlpArch, MlpParams, backward, forward
from .mgp_model import (FittedMgp, MgpParams, fit, fit_best, init_mgp_params, joint_grad,
                        joint_nlml, load_checkpoint, predict_mgp, save_checkpoint)

__version__ = "0.1.0"
