"""EXP3-LGC-U and EXP3-LGC-IX policies, parameter schedules and agents.

The ``-star`` variants ignore side observations: the environment feeds
them the edgeless graph, and their schedules use ``alpha = K``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .estimators import CumulativeEstimate, accumulate, estimate_ix, estimate_u
from .graph import FeedbackGraph, ObservationSet, independence_number, observation_probabilities

ALGORITHMS = ("exp3-lgc-u", "exp3-lgc-ix", "exp3-lgc-u-star", "exp3-lgc-ix-star")
MAGNITUDE_SLACK = 1e-9


class AlgorithmError(ValueError):
    pass


class ScheduleError(AlgorithmError):
    pass


class NegativeLossError(AlgorithmError):
    pass


@dataclass(frozen=True)
class UParams:
    eta: float
    gamma: float
    directed: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ScheduleError(f"learning rate must be positive, got {self.eta}")
        if not 0 <= self.gamma < 1:
            raise ScheduleError(f"exploration rate must lie in [0, 1), got {self.gamma}")


@dataclass
class IXParams:
    eta_t: float
    beta_t: float
    q_history: float = 0.0


# -- policies ---------------------------------------------------------------

def _softmax(scores: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(scores)):
        raise AlgorithmError("non-finite policy score")
    w = np.exp(scores - scores.max())
    return w / w.sum()


def policy_u(state: CumulativeEstimate, context, params: UParams) -> np.ndarray:
    """Exponential weights mixed with ``gamma``-uniform exploration."""
    K = state.matrix.shape[0]
    p = _softmax(-params.eta * state.scores(context))
    return (1.0 - params.gamma) * p + params.gamma / K


def policy_ix(state: CumulativeEstimate, context, eta_t: float) -> np.ndarray:
    if not eta_t > 0:
        raise AlgorithmError(f"learning rate must be positive, got {eta_t}")
    return _softmax(-eta_t * state.scores(context))


def sample_action(pi: np.ndarray, u: float) -> int:
    """Inverse-CDF draw; the first index whose cumulative mass exceeds ``u``."""
    c = 0.0
    last = 0
    for i, p in enumerate(pi):
        c += p
        if p > 0:
            last = i
        if u < c:
            return i
    return last


# -- schedules --------------------------------------------------------------

def _alpha_total(alpha_bounds, T: int) -> float:
    if np.ndim(alpha_bounds) == 0:
        a = float(alpha_bounds)
        if a < 1:
            raise ScheduleError(f"alpha bounds must be >= 1, got {a}")
        return a * T
    a = np.asarray(alpha_bounds, dtype=float)
    if a.shape != (T,):
        raise ScheduleError(f"need one alpha bound per round ({T}), got {a.shape[0]}")
    if np.any(a < 1):
        raise ScheduleError("alpha bounds must be >= 1")
    return float(a.sum())


def _check_common(K, sigma, lambda_min, T):
    if K < 2:
        raise ScheduleError("schedules need K >= 2 (log K = 0 gives a zero learning rate)")
    if not (sigma > 0 and lambda_min > 0 and T >= 1):
        raise ScheduleError("sigma, lambda_min and T must be positive")


def schedule_u_undirected(K: int, sigma: float, lambda_min: float, T: int,
                          alpha_bounds: Union[float, Sequence[float]], d: int) -> UParams:
    """Learning rate for undirected graphs with the coupled exploration rate.

    ``eta = sqrt(log K / (2 K sigma^2 T / lambda_min + d * sum(alpha_t)))``
    and ``gamma = eta K sigma^2 / lambda_min``.
    """
    _check_common(K, sigma, lambda_min, T)
    c = K * sigma ** 2 / lambda_min
    total = _alpha_total(alpha_bounds, T)
    eta = math.sqrt(math.log(K) / (2 * c * T + d * total))
    gamma = eta * c
    if gamma >= 1:
        abar = total / T
        t_min = math.ceil(c * c * math.log(K) / (2 * c + d * abar))
        raise ScheduleError(
            f"exploration rate gamma = {gamma:.4g} >= 1; the horizon is too short "
            f"for the coupling (need T > {t_min})")
    return UParams(eta, gamma, directed=False)


def schedule_u_directed(K: int, sigma: float, lambda_min: float, T: int,
                        alpha_bounds: Union[float, Sequence[float]], d: int) -> UParams:
    """``eta = (2 K sigma^2 T / lambda_min + 4 d sum(alpha_t))^(-1/2)``.

    Requires ``log(1/gamma) >= 1``.
    """
    _check_common(K, sigma, lambda_min, T)
    c = K * sigma ** 2 / lambda_min
    total = _alpha_total(alpha_bounds, T)
    eta = (2 * c * T + 4 * d * total) ** -0.5
    gamma = eta * c
    if gamma >= 1 or math.log(1 / gamma) < 1:
        raise ScheduleError(
            f"directed schedule needs log(1/gamma) >= 1 but gamma = {gamma:.4g}; "
            "increase the horizon T")
    return UParams(eta, gamma, directed=True)


def q_bound_u_directed(alpha: float, K: int, gamma: float) -> float:
    """``4 alpha log(4 K^2 / (alpha gamma))``."""
    return 4 * alpha * math.log(4 * K * K / (alpha * gamma))


def schedule_ix(t: int, K: int, d: int, q_running_sum: float) -> tuple[float, float]:
    """``(eta_t, beta_t)`` from the running sum of past Q values."""
    if t < 1 or q_running_sum < 0:
        raise ScheduleError("need t >= 1 and a nonnegative running sum")
    beta = math.sqrt(math.log(K) / (K + q_running_sum))
    return beta / math.sqrt(d), beta


def q_value_ix(alpha: float, K: int, beta_t: float) -> float:
    """``2 alpha log(1 + (ceil(K^2 / beta) + K) / alpha) + 2``."""
    if not beta_t > 0:
        raise ScheduleError(f"beta must be positive, got {beta_t}")
    return 2 * alpha * math.log1p((math.ceil(K * K / beta_t) + K) / alpha) + 2


# -- agents -----------------------------------------------------------------

class _Agent:
    name = "abstract"

    def __init__(self, num_actions: int, sigma_inv, uses_side_observations: bool = True):
        self.sigma_inv = np.asarray(sigma_inv, dtype=float)
        self.num_actions = int(num_actions)
        self.dimension = self.sigma_inv.shape[0]
        self.uses_side_observations = uses_side_observations
        self.state = CumulativeEstimate(self.num_actions, self.dimension)
        self._pending = None
        self.last_q = None

    def feedback_graph(self, graph: FeedbackGraph) -> FeedbackGraph:
        """The graph this agent actually learns from."""
        return graph if self.uses_side_observations else graph.without_edges()

    def policy(self, context) -> np.ndarray:
        raise NotImplementedError

    def step(self, context, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        if self._pending is not None:
            raise AlgorithmError("step called twice without update")
        context = np.asarray(context, dtype=float)
        pi = self.policy(context)
        action = sample_action(pi, rng.random())
        self._pending = (context, pi, action)
        return action, pi

    def update(self, graph: FeedbackGraph, observed: ObservationSet, oracle, observed_losses=None):
        if self._pending is None:
            raise AlgorithmError("update called before step")
        context, pi, action = self._pending
        if observed.action != action:
            raise AlgorithmError("observation set does not belong to the played action")
        q = observation_probabilities(graph, pi)
        self._estimate_and_accumulate(graph, context, pi, q, observed, oracle, observed_losses)
        self.last_q = q
        self._pending = None


class Exp3LGCU(_Agent):
    """EXP3-LGC-U with fixed ``(eta, gamma)``.

    ``check_magnitude`` asserts ``|eta <x, theta_hat>| <= 1`` every round,
    which holds whenever ``gamma = eta K sigma^2 / lambda_min``.
    """

    name = "exp3-lgc-u"

    def __init__(self, num_actions, sigma_inv, params: UParams,
                 uses_side_observations: bool = True, check_magnitude: bool = False):
        super().__init__(num_actions, sigma_inv, uses_side_observations)
        self.params = params
        self.check_magnitude = check_magnitude
        if not uses_side_observations:
            self.name = "exp3-lgc-u-star"

    def policy(self, context):
        return policy_u(self.state, context, self.params)

    def _estimate_and_accumulate(self, graph, context, pi, q, observed, oracle, observed_losses):
        ests = [estimate_u(i in observed, q[i], self.sigma_inv, oracle_context=oracle.context,
                           oracle_loss=oracle.losses.get(i, 0.0), action=i)
                for i in range(self.num_actions)]
        if self.check_magnitude:
            for e in ests:
                if abs(self.params.eta * (context @ e.vector)) > 1 + MAGNITUDE_SLACK:
                    raise AlgorithmError(
                        f"|eta <x, theta_hat>| > 1 for action {e.action}; "
                        "gamma is not coupled to eta")
        accumulate(self.state, ests, self.state.round)


class Exp3LGCIX(_Agent):
    """EXP3-LGC-IX with the adaptive ``(eta_t, beta_t)`` schedule.

    ``alpha_bounds="exact"`` feeds the disclosed graph's independence number
    into each round's Q value; a number uses that fixed bound instead.
    """

    name = "exp3-lgc-ix"

    def __init__(self, num_actions, sigma_inv, alpha_bounds: Union[str, float] = "exact",
                 uses_side_observations: bool = True):
        super().__init__(num_actions, sigma_inv, uses_side_observations)
        if num_actions < 2:
            raise ScheduleError("EXP3-LGC-IX needs K >= 2")
        self.alpha_bounds = alpha_bounds
        self.params = IXParams(*schedule_ix(1, num_actions, self.dimension, 0.0))
        self._alpha_cache = {}
        if not uses_side_observations:
            self.name = "exp3-lgc-ix-star"

    def alpha_for(self, graph: FeedbackGraph) -> float:
        if not self.uses_side_observations:
            return float(self.num_actions)
        if self.alpha_bounds != "exact":
            return float(self.alpha_bounds)
        a = self._alpha_cache.get(graph.key)
        if a is None:
            a = self._alpha_cache[graph.key] = float(independence_number(graph))
        return a

    def policy(self, context):
        return policy_ix(self.state, context, self.params.eta_t)

    def _estimate_and_accumulate(self, graph, context, pi, q, observed, oracle, observed_losses):
        losses = dict(oracle.losses)
        for src in (losses, observed_losses or {}):
            for i, v in src.items():
                if v < 0:
                    raise NegativeLossError(
                        f"EXP3-LGC-IX needs nonnegative losses; action {i} has loss {v:.6g}")
        beta = self.params.beta_t
        ests = [estimate_ix(i in observed, q[i], beta, self.sigma_inv,
                            oracle_context=oracle.context, oracle_loss=losses.get(i, 0.0), action=i)
                for i in range(self.num_actions)]
        accumulate(self.state, ests, self.state.round)
        p = self.params
        p.q_history += q_value_ix(self.alpha_for(graph), self.num_actions, beta)
        p.eta_t, p.beta_t = schedule_ix(self.state.round, self.num_actions, self.dimension,
                                        p.q_history)
