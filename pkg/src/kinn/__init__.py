"""kinn: a KKT-informed neural surrogate for parametric convex setpoint projection.

The package trains a small MLP to map problem parameters directly to primal
points and multipliers, penalizing violations of the optimality conditions
instead of fitting labeled solutions, and ships an exact projection oracle
for verification and benchmarking.
"""

from .aggregator import LossJacobian, aggregate_mean, aggregate_upgrad, nnls_solve
from .evaluation import build_validation_set, evaluate, metrics
from .linalg import Rng
from .loss import LossVector, batch_loss, loss_seeds, loss_terms
from .network import Architecture, NetworkParams, backward, forward, init_params
from .oracle import OracleSolution, batch_project, project
from .problem import (
    GeneratorParams,
    ProblemInstance,
    build_instance,
    build_instance_batch,
    eval_constraints,
    tau_rho,
)
from .trainer import (
    TrainConfig,
    load_checkpoint,
    run_training,
    sample_batch,
    save_checkpoint,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "GeneratorParams",
    "LossJacobian",
    "LossVector",
    "NetworkParams",
    "OracleSolution",
    "ProblemInstance",
    "Rng",
    "TrainConfig",
    "aggregate_mean",
    "aggregate_upgrad",
    "backward",
    "batch_loss",
    "batch_project",
    "build_instance",
    "build_instance_batch",
    "build_validation_set",
    "eval_constraints",
    "evaluate",
    "forward",
    "init_params",
    "load_checkpoint",
    "loss_seeds",
    "loss_terms",
    "metrics",
    "nnls_solve",
    "project",
    "run_training",
    "sample_batch",
    "save_checkpoint",
    "tau_rho",
    "train_step",
]
