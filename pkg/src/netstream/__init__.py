"""netstream: real-time tracking of sparse partial-correlation networks
from multivariate time series.

Core pieces: streaming covariance estimation with sliding-window, EWMA, or
adaptive-forgetting weighting; an ADMM solver for the sparse + temporally
homogeneous precision objective; an offline joint solver for burn-in and
benchmarking; a piecewise-stationary VAR benchmark generator; and edge-
recovery scoring.
"""

from .covariance import (AdaptiveForgetting, FixedForgetting, ForgettingState,
                         Observation, SingularCovarianceError, SlidingWindow,
                         StateUpdateError, inverse_refresh, likelihood_gradient,
                         log_likelihood, update, update_adaptive, update_fixed,
                         update_sliding)
from .metrics import GroundTruth, MetricSeries, prf, score_run, trace_distance
from .offline import (BurnInResult, KernelConfig, aic, burn_in,
                      kernel_covariances, select_kernel_width, solve_joint,
                      tune_lambdas)
from .solver import NetworkEstimate, SolverConfig, edge_set, solve, theta_step, \
    z_step, z_step_scalar
from .stream import StreamConfig, StreamingEstimator
from .synth import (DatasetSpec, GroundTruthSegment, SyntheticDataset,
                    gen_barabasi_albert, gen_dataset, gen_var_segment,
                    gen_watts_strogatz, graph_to_precision, read_observations,
                    read_truth, write_dataset)

__version__ = "0.1.0"
