from .bp import BPConfig, BPResult, Messages, lbp_marginals, map_assignment
from .exact import ExactResult, exact_gradient, exact_inference, exact_log_likelihood, log_partition
from .learning import (GradientResult, LearnConfig, LearnResult, Prediction, gradient, group_rule,
                       learn, predict)
from .graph import (Factor, FactorGraph, FactorKind, NumericalError, Parameters, joint_log_prob,
                    log_potential)

__all__ = [
    "GradientResult", "LearnConfig", "LearnResult", "Prediction", "gradient", "group_rule", "learn", "predict",
    "BPConfig", "BPResult", "Messages", "lbp_marginals", "map_assignment",
    "ExactResult", "exact_gradient", "exact_inference", "exact_log_likelihood", "log_partition",
    "Factor", "FactorGraph", "FactorKind", "NumericalError", "Parameters", "joint_log_prob", "log_potential",
]
