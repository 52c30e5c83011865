"""Coupled-oscillator continuous-depth graph networks.

Node features evolve under Kuramoto phase dynamics
dx_i = omega_i + K sum_j a_ij sin(x_j - x_i) with attention-derived
row-stochastic coupling, alongside the linear diffusion baselines this
generalizes. Includes fixed-step and adaptive ODE solvers,
synchronization/over-smoothing diagnostics, and a discretize-then-optimize
training pipeline with hand-verified exact gradients.
"""

from .coupling import (AttentionParams, compute_attention, row_stochastic_check,
                       uniform_coupling)
from .diagnostics import (SyncReport, detect_oversmoothing, fit_decay_rate,
                          frequency_sync_residual, order_parameter,
                          order_parameter_all, pairwise_distance_stats,
                          sync_report)
from .dynamics import (DynamicsSpec, energy, energy_gradient_residual, make_rhs,
                       rhs_grand_linear, rhs_grand_modified, rhs_identical,
                       rhs_kuramoto, rhs_kuramoto_local_order, sin_coupling)
from .graphs import (BundleError, Graph, SplitSpec, build_graph,
                     generate_synthetic, largest_connected_component,
                     load_bundle, make_split, save_bundle)
from .model import (LossReport, ModelParams, UnrollTape, backward, cross_entropy,
                    cross_entropy_grad, encode, forward, gradient_bound_check,
                    init_params, load_checkpoint, save_checkpoint, toy_loss_grad,
                    toy_unroll, vanishing_gradient_probe)
from .solvers import (IntegrationError, SolverConfig, Trajectory,
                      integrate_dopri5, integrate_fixed, step_euler, step_rk4)
from .training import (RunResult, TrainConfig, TrainingDivergedError,
                       evaluate_accuracy, run_seeded, train_node_classifier)

__version__ = "0.1.0"
