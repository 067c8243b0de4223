"""Policy gradients as weighted cross-entropy, with exact oracles and a trading game."""
from .kernels import BACKEND
from .numerics import (
    CategoricalDistribution,
    ParamSet,
    entropy,
    grad_mse,
    grad_weighted_logprob,
    init_params,
    log_prob,
    mlp_forward,
    sgd_step,
    softmax,
)
from .pgcore import (
    Schedule,
    Trajectory,
    TrajectoryBatch,
    a2c_objective,
    baseline_weights,
    discounted_returns,
    entropy_regularized,
    lr_at,
    reinforce_objective,
)

__version__ = "0.1.0"
