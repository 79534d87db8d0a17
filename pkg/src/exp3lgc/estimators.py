"""Importance-weighted loss-vector estimators and their running sums.

Both estimators take the oracle's fresh context, never the context the
decision was made on; the keyword names make that explicit at call sites.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class EstimatedLossVector:
    action: int
    vector: np.ndarray


def _oracle_term(sigma_inv, oracle_context, oracle_loss) -> np.ndarray:
    return np.asarray(sigma_inv, dtype=float) @ np.asarray(oracle_context, dtype=float) * float(oracle_loss)


def estimate_u(observed: bool, q_i: float, sigma_inv, oracle_context, oracle_loss: float,
               action: int = 0) -> EstimatedLossVector:
    """Unbiased estimate ``1{observed} / q_i * Sigma^-1 x~ l~``."""
    if not q_i > 0:
        raise EstimatorError(f"observation probability must be positive, got {q_i}")
    d = np.shape(sigma_inv)[0]
    if not observed:
        return EstimatedLossVector(action, np.zeros(d))
    return EstimatedLossVector(action, _oracle_term(sigma_inv, oracle_context, oracle_loss) / q_i)


def estimate_ix(observed: bool, q_i: float, beta: float, sigma_inv, oracle_context,
                oracle_loss: float, action: int = 0) -> EstimatedLossVector:
    """Implicit-exploration estimate with denominator ``q_i + beta``."""
    if not beta > 0:
        raise EstimatorError(f"implicit exploration rate must be positive, got {beta}")
    if q_i < 0:
        raise EstimatorError(f"observation probability must be nonnegative, got {q_i}")
    d = np.shape(sigma_inv)[0]
    if not observed:
        return EstimatedLossVector(action, np.zeros(d))
    return EstimatedLossVector(action, _oracle_term(sigma_inv, oracle_context, oracle_loss) / (q_i + beta))


class CumulativeEstimate:
    """``K x d`` matrix whose row ``i`` sums every past estimate for action ``i``.

    ``round`` is the round whose estimates are accumulated next (starts at 1).
    """

    def __init__(self, num_actions: int, dimension: int):
        self.matrix = np.zeros((num_actions, dimension))
        self.round = 1

    def scores(self, context) -> np.ndarray:
        """``<context, row_i>`` for every action."""
        return self.matrix @ np.asarray(context, dtype=float)

    def copy(self) -> "CumulativeEstimate":
        new = CumulativeEstimate(*self.matrix.shape)
        new.matrix = self.matrix.copy()
        new.round = self.round
        return new


def accumulate(state: CumulativeEstimate, estimates, t: int) -> CumulativeEstimate:
    """Add round ``t``'s estimates (one per action) to ``state`` in place."""
    if t != state.round:
        raise EstimatorError(f"estimates for round {t} but state expects round {state.round}")
    K = state.matrix.shape[0]
    if len(estimates) != K:
        raise EstimatorError(f"expected {K} estimates, got {len(estimates)}")
    for est in estimates:
        state.matrix[est.action] += est.vector
    state.round += 1
    return state
