"""Exact small-scale checks of the estimators and graph inequalities.

The enumeration oracles below rebuild observation sets, observation
probabilities, context supports and independence numbers from the raw
edge list with plain loops, so they share no graph or distribution code
with the units they audit. Expectations are computed by exhaustive
enumeration over (played action, oracle context), not by sampling.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .algorithms import q_bound_u_directed, q_value_ix, schedule_ix
from .environment import ContextDistribution, bernoulli_scaled
from .estimators import estimate_ix, estimate_u
from .graph import FeedbackGraph, independence_number_exact, independence_number_greedy_bound, \
    observation_probabilities

MAX_SUPPORT = 64
MAX_ORACLE_K = 10
MAX_AUDIT_K = 12
SLACK = 1e-10


class VerificationError(ValueError):
    pass


# -- first-principles helpers ----------------------------------------------

def _edge_list(graph: FeedbackGraph) -> list:
    return sorted(graph.edges)


def _observed_by(edges, K: int, played: int) -> set:
    s = {played}
    for i, j in edges:
        if i == played:
            s.add(j)
    return s


def _reveal_probability(edges, K: int, pi, i: int) -> float:
    total = 0.0
    for j in range(K):
        if i in _observed_by(edges, K, j):
            total += pi[j]
    return total


def _support(dist: ContextDistribution):
    if dist.kind == "custom_discrete":
        return [(np.array(x), float(w)) for x, w in zip(dist.support, dist.probs) if w > 0]
    d, p = dist.dimension, dist.p
    out = []
    for bits in itertools.product((0, 1), repeat=d):
        w = 1.0
        for b in bits:
            w *= p if b else 1.0 - p
        out.append((np.array(bits, dtype=float) / math.sqrt(d), w))
    return out


def brute_force_alpha(graph: FeedbackGraph) -> int:
    """Largest vertex subset with no edge (either direction) inside it."""
    K = graph.num_actions
    edges = _edge_list(graph)
    for size in range(K, 0, -1):
        for subset in itertools.combinations(range(K), size):
            chosen = set(subset)
            if not any(i in chosen and j in chosen for i, j in edges):
                return size
    return 0


# -- estimator expectation --------------------------------------------------

def exact_estimator_expectation(pi, graph: FeedbackGraph, dist: ContextDistribution, theta,
                                mode: str = "u", beta: Optional[float] = None) -> np.ndarray:
    """``E[theta_hat_i]`` for every action, by full enumeration.

    Sums the library estimator's output over every played action (weighted
    by ``pi``) and every oracle context in the support (weighted by its
    probability). ``mode`` is ``"u"`` or ``"ix"`` (which needs ``beta``).
    """
    K = graph.num_actions
    pi = np.asarray(pi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    support = _support(dist)
    if len(support) > MAX_SUPPORT:
        raise VerificationError(f"support of size {len(support)} exceeds {MAX_SUPPORT}")
    if K > MAX_ORACLE_K:
        raise VerificationError(f"K={K} exceeds {MAX_ORACLE_K}")
    if mode == "ix" and beta is None:
        raise VerificationError("ix mode needs beta")
    q = observation_probabilities(graph, pi)
    sigma_inv = dist.second_moment_inverse
    edges = _edge_list(graph)
    expected = np.zeros((K, dist.dimension))
    for played in range(K):
        if pi[played] == 0:
            continue
        seen = _observed_by(edges, K, played)
        for x, w in support:
            for i in range(K):
                loss = float(x @ theta[i])
                if mode == "u":
                    est = estimate_u(i in seen, q[i], sigma_inv, oracle_context=x, oracle_loss=loss)
                else:
                    est = estimate_ix(i in seen, q[i], beta, sigma_inv, oracle_context=x,
                                      oracle_loss=loss)
                expected[i] += pi[played] * w * est.vector
    return expected


def ix_identity_sides(pi, graph: FeedbackGraph, dist: ContextDistribution, theta, beta: float, x):
    """Both sides of the implicit-exploration identity at decision context ``x``.

    Returns ``(lhs, rhs, unbiased)`` where ``lhs = sum_i pi_i <x, E theta_hat_i>``,
    ``rhs = sum_i pi_i q_i / (q_i + beta) <x, theta_i>`` and ``unbiased`` is
    ``sum_i pi_i <x, theta_i>``.
    """
    K = graph.num_actions
    pi = np.asarray(pi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    expected = exact_estimator_expectation(pi, graph, dist, theta, "ix", beta)
    edges = _edge_list(graph)
    lhs = sum(pi[i] * float(x @ expected[i]) for i in range(K))
    rhs = 0.0
    unbiased = 0.0
    for i in range(K):
        qi = _reveal_probability(edges, K, pi, i)
        li = float(x @ theta[i])
        rhs += pi[i] * qi / (qi + beta) * li
        unbiased += pi[i] * li
    return lhs, rhs, unbiased


# -- graph sum audits -------------------------------------------------------

@dataclass(frozen=True)
class LemmaAudit:
    lhs: float
    rhs_bound: float
    passed: bool


def lemma_sum_audit(graph: FeedbackGraph, pi, variant: str, parameter: Optional[float] = None) -> LemmaAudit:
    """Check one of the three graph sum inequalities on ``(graph, pi)``.

    ``undirected``: ``sum pi_i / q_i <= alpha``.
    ``directed_with_eps`` (``parameter`` = eps, needs ``min pi >= eps``):
    ``sum pi_i / q_i <= 4 alpha log(4K / (alpha eps))``.
    ``ix_with_c`` (``parameter`` = c > 0):
    ``sum pi_i / (c + q_i) <= 2 alpha log(1 + (ceil(K^2/c) + K) / alpha) + 2``.
    """
    K = graph.num_actions
    if K > MAX_AUDIT_K:
        raise VerificationError(f"K={K} exceeds {MAX_AUDIT_K}")
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (K,) or np.any(pi < 0) or abs(pi.sum() - 1) > 1e-10:
        raise VerificationError("pi must be a distribution over the K actions")
    edges = _edge_list(graph)
    alpha = brute_force_alpha(graph)
    q = [_reveal_probability(edges, K, pi, i) for i in range(K)]

    if variant == "undirected":
        if not graph.undirected:
            raise VerificationError("undirected variant needs an undirected graph")
        lhs = sum(pi[i] / q[i] for i in range(K) if pi[i] > 0)
        rhs = float(alpha)
    elif variant == "directed_with_eps":
        eps = parameter
        if eps is None or not 0 < eps < 0.5:
            raise VerificationError("eps must lie in (0, 1/2)")
        if pi.min() < eps:
            raise VerificationError("min pi must be at least eps")
        lhs = sum(pi[i] / q[i] for i in range(K))
        rhs = 4 * alpha * math.log(4 * K / (alpha * eps))
    elif variant == "ix_with_c":
        c = parameter
        if c is None or not c > 0:
            raise VerificationError("c must be positive")
        lhs = sum(pi[i] / (c + q[i]) for i in range(K))
        rhs = 2 * alpha * math.log(1 + (math.ceil(K * K / c) + K) / alpha) + 2
    else:
        raise VerificationError(f"unknown inequality variant {variant!r}")
    return LemmaAudit(lhs, rhs, lhs <= rhs + SLACK)


# -- regret bounds ----------------------------------------------------------

def _alphas(alphas, T):
    if np.ndim(alphas) == 0:
        return np.full(T, float(alphas))
    a = np.asarray(alphas, dtype=float)
    if a.shape != (T,):
        raise VerificationError(f"need {T} alpha values, got {a.shape}")
    return a


def ix_q_sequence(K: int, d: int, alphas: Sequence[float]) -> np.ndarray:
    """Q values produced by the adaptive IX schedule for the given alphas."""
    out = np.empty(len(alphas))
    total = 0.0
    for t, a in enumerate(alphas, start=1):
        _, beta = schedule_ix(t, K, d, total)
        out[t - 1] = q_value_ix(a, K, beta)
        total += out[t - 1]
    return out


def regret_bound_value(variant: str, *, K: int, d: int, T: int, alphas: Union[float, Sequence[float]],
                       sigma: float = 1.0, lambda_min: float = 1.0, eta: Optional[float] = None,
                       gamma: Optional[float] = None) -> float:
    """Numeric value of a regret upper bound.

    ``thm1_undirected`` / ``thm1_directed``:
    ``log K / eta + 2 eta K sigma^2 T / lambda_min + eta d sum(Q_t)`` with
    ``Q_t = alpha_t`` or ``4 alpha_t log(4K^2 / (alpha_t gamma))``;
    ``gamma`` defaults to the coupled ``eta K sigma^2 / lambda_min``.
    ``thm2``: ``2 (1 + sqrt d) sqrt((K + sum Q_t) log K)`` with the Q values
    of the adaptive schedule.
    """
    a = _alphas(alphas, T)
    if variant in ("thm1_undirected", "thm1_directed"):
        if eta is None or not eta > 0:
            raise VerificationError("thm1 bounds need a positive eta")
        c = K * sigma ** 2 / lambda_min
        if variant == "thm1_undirected":
            Q = a
        else:
            g = eta * c if gamma is None else gamma
            Q = np.array([q_bound_u_directed(x, K, g) for x in a])
        return math.log(K) / eta + 2 * eta * c * T + eta * d * float(Q.sum())
    if variant == "thm2":
        Q = ix_q_sequence(K, d, a)
        return 2 * (1 + math.sqrt(d)) * math.sqrt((K + float(Q.sum())) * math.log(K))
    raise VerificationError(f"unknown bound variant {variant!r}")


# -- randomized audit suite -------------------------------------------------

def random_graph(rng: np.random.Generator, K: int, directed: bool) -> FeedbackGraph:
    p = rng.uniform(0.0, 1.0)
    u = rng.random((K, K))
    return FeedbackGraph.from_uniforms(u, p, directed)


def random_simplex(rng: np.random.Generator, K: int, floor: float = 0.0) -> np.ndarray:
    w = rng.dirichlet(np.full(K, rng.uniform(0.3, 3.0)))
    return floor + (1 - K * floor) * w


def _random_small_problem(rng, nonnegative: bool):
    K = int(rng.integers(1, MAX_ORACLE_K + 1))
    d = int(rng.integers(1, 4))
    dist = bernoulli_scaled(d, float(rng.uniform(0.15, 0.85)))
    graph = random_graph(rng, K, directed=bool(rng.integers(2)))
    pi = random_simplex(rng, K)
    theta = rng.uniform(0 if nonnegative else -1, 1, size=(K, d))
    theta /= np.maximum(1.0, np.linalg.norm(theta, axis=1))[:, None]
    return K, dist, graph, pi, theta


def audit_unbiased(n: int = 100, seed: int = 0) -> float:
    """Largest componentwise deviation of ``E[theta_hat]`` from ``theta``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        K, dist, graph, pi, theta = _random_small_problem(rng, nonnegative=False)
        expected = exact_estimator_expectation(pi, graph, dist, theta, "u")
        worst = max(worst, float(np.max(np.abs(expected - theta))))
    return worst


def audit_optimistic(n: int = 100, seed: int = 1) -> tuple[float, float]:
    """``(max identity error, max optimism excess)`` over random nonnegative instances."""
    rng = np.random.default_rng(seed)
    err, excess = 0.0, -math.inf
    for _ in range(n):
        K, dist, graph, pi, theta = _random_small_problem(rng, nonnegative=True)
        beta = float(rng.uniform(0.01, 1.0))
        for x, _w in _support(dist):
            lhs, rhs, unbiased = ix_identity_sides(pi, graph, dist, theta, beta, x)
            err = max(err, abs(lhs - rhs))
            excess = max(excess, lhs - unbiased)
    return err, excess


def audit_lemmas(n: int = 200, seed: int = 2) -> dict:
    """Violation counts per inequality variant over random instances."""
    rng = np.random.default_rng(seed)
    violations = {"undirected": 0, "directed_with_eps": 0, "ix_with_c": 0}
    for _ in range(n):
        K = int(rng.integers(1, MAX_AUDIT_K + 1))
        g = random_graph(rng, K, directed=False)
        if not lemma_sum_audit(g, random_simplex(rng, K), "undirected").passed:
            violations["undirected"] += 1

        K = int(rng.integers(1, MAX_AUDIT_K + 1))
        g = random_graph(rng, K, directed=True)
        eps = float(rng.uniform(0.01, 0.99)) * min(0.5, 1.0 / K)
        pi = random_simplex(rng, K, floor=eps)
        if not lemma_sum_audit(g, pi, "directed_with_eps", eps).passed:
            violations["directed_with_eps"] += 1

        K = int(rng.integers(1, MAX_AUDIT_K + 1))
        g = random_graph(rng, K, directed=bool(rng.integers(2)))
        c = float(np.exp(rng.uniform(np.log(1e-3), np.log(10.0))))
        if not lemma_sum_audit(g, random_simplex(rng, K), "ix_with_c", c).passed:
            violations["ix_with_c"] += 1
    return violations


def audit_independence(n: int = 500, seed: int = 3) -> dict:
    rng = np.random.default_rng(seed)
    clique = FeedbackGraph.complete_plus_isolated(9, 1)
    greedy_failures = 0
    exact_mismatches = 0
    for _ in range(n):
        K = int(rng.integers(1, MAX_AUDIT_K + 1))
        g = random_graph(rng, K, directed=bool(rng.integers(2)))
        exact = independence_number_exact(g)
        if exact != brute_force_alpha(g):
            exact_mismatches += 1
        if independence_number_greedy_bound(g) < exact:
            greedy_failures += 1
    return {
        "clique_graph": independence_number_exact(clique),
        "complete": [independence_number_exact(FeedbackGraph.complete(k)) for k in range(1, 13)],
        "edgeless": [independence_number_exact(FeedbackGraph.edgeless(k)) for k in range(1, 13)],
        "greedy_failures": greedy_failures,
        "exact_mismatches": exact_mismatches,
    }


@dataclass
class AuditResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> AuditResult:
    t = time.perf_counter()
    ok, detail = fn()
    return AuditResult(name, ok, detail, time.perf_counter() - t)


def run_audit_suite(seed: int = 0) -> list[AuditResult]:
    """Every exact audit, each reported as one pass/fail row."""

    def unbiased():
        err = audit_unbiased(100, seed)
        return err <= SLACK, f"max |E[theta_hat] - theta| = {err:.2e}"

    def optimistic():
        err, excess = audit_optimistic(100, seed + 1)
        return err <= SLACK and excess <= SLACK, f"identity err {err:.2e}, optimism excess {excess:.2e}"

    def lemmas():
        v = audit_lemmas(200, seed + 2)
        clique = lemma_sum_audit(FeedbackGraph.complete_plus_isolated(9, 1), np.full(10, 0.1),
                                "undirected")
        equality = abs(clique.lhs - 2.0) <= SLACK and clique.rhs_bound == 2.0
        return sum(v.values()) == 0 and equality, f"violations {v}, clique graph lhs {clique.lhs:.12f}"

    def independence():
        r = audit_independence(500, seed + 3)
        ok = (r["clique_graph"] == 2 and r["complete"] == [1] * 12
              and r["edgeless"] == list(range(1, 13))
              and r["greedy_failures"] == 0 and r["exact_mismatches"] == 0)
        return ok, (f"clique graph alpha {r['clique_graph']}, greedy failures {r['greedy_failures']}, "
                    f"exact mismatches {r['exact_mismatches']}")

    return [
        _timed("unbiased estimator (U)", unbiased),
        _timed("optimistic estimator identity (IX)", optimistic),
        _timed("graph sum inequalities", lemmas),
        _timed("independence number", independence),
    ]
