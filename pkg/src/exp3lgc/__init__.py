"""Adversarial linear contextual bandits with graph-structured side observations."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .algorithms import ALGORITHMS, Exp3LGCIX, Exp3LGCU
from .config import ExperimentConfig, parse_config
from .environment import bernoulli_scaled, custom_discrete
from .graph import FeedbackGraph, independence_number
from .simulator import AlgorithmSpec, run_experiment, run_trial

__all__ = ["ALGORITHMS", "AlgorithmSpec", "BACKEND", "Exp3LGCIX", "Exp3LGCU", "ExperimentConfig",
           "FeedbackGraph", "bernoulli_scaled", "custom_discrete", "independence_number",
           "parse_config", "run_experiment", "run_trial"]
