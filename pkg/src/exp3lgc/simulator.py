"""Per-round protocol, trial traces and multi-trial experiments.

Two engines produce the same traces from the same seed:

* ``protocol`` steps :func:`run_round` with an agent object; it handles
  adaptive adversaries and is the readable reference.
* ``kernel`` precomputes the environment's random draws in blocks and runs
  the compiled (or fallback) kernel; oblivious adversaries only.

Every trial draws from four purpose-tagged streams (context, oracle
context, action, graph), so algorithms sharing a seed face identical
environments.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _backend
from .algorithms import (ALGORITHMS, Exp3LGCIX, Exp3LGCU, UParams, schedule_u_directed,
                         schedule_u_undirected)
from .environment import (Adversary, ContextDistribution, TrialStreams, oracle_draw,
                          sample_context, stream)
from .evaluation import BenchmarkPolicy, RegretCurve, aggregate, build_benchmark, regret_curve
from .graph import FeedbackGraph, RandomGraphSpec, independence_number, observation_set

log = logging.getLogger(__name__)

BLOCK = 2048


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class AlgorithmSpec:
    """Algorithm selector plus optional parameter overrides."""
    name: str
    eta: Optional[float] = None
    gamma: Optional[float] = None
    alpha_bounds: Union[str, float] = "exact"
    label: Optional[str] = None

    def __post_init__(self):
        if self.name not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.name!r}; expected one of {ALGORITHMS}")

    @property
    def key(self) -> str:
        """Name used in result tables; the selector unless a label is set."""
        return self.label or self.name

    @property
    def is_ix(self) -> bool:
        return self.name.startswith("exp3-lgc-ix")

    @property
    def uses_side_observations(self) -> bool:
        return not self.name.endswith("-star")


@dataclass
class Problem:
    dist: ContextDistribution
    adversary: Adversary
    config_hash: str = ""

    @property
    def K(self) -> int:
        return self.adversary.num_actions

    @property
    def d(self) -> int:
        return self.adversary.dimension

    @property
    def T(self) -> int:
        return self.adversary.horizon


def _as_problem(config) -> Problem:
    return config.build() if hasattr(config, "build") else config


def _as_spec(algorithm) -> AlgorithmSpec:
    return algorithm if isinstance(algorithm, AlgorithmSpec) else AlgorithmSpec(algorithm)


# -- parameter resolution ---------------------------------------------------

def alpha_sequence(problem: Problem, seed: int):
    """Independence numbers the environment's graphs will have (scalar if fixed)."""
    g = problem.adversary.graph_source
    if isinstance(g, FeedbackGraph):
        return float(independence_number(g))
    rng = stream(seed, "graph")
    if not g.per_round:
        return float(independence_number(g.draw(rng)))
    return np.array([independence_number(g.draw(rng)) for _ in range(problem.T)], dtype=float)


def resolve_u_params(problem: Problem, spec: AlgorithmSpec, seed: int = 0) -> tuple[UParams, bool]:
    """Learning and exploration rates for EXP3-LGC-U, and whether they are coupled."""
    dist = problem.dist
    c = problem.K * dist.norm_bound ** 2 / dist.smallest_eigenvalue
    if spec.eta is not None or spec.gamma is not None:
        eta = spec.eta if spec.eta is not None else spec.gamma / c
        gamma = spec.gamma if spec.gamma is not None else eta * c
        return UParams(eta, gamma, problem.adversary.directed), math.isclose(gamma, eta * c, rel_tol=1e-12)
    if not spec.uses_side_observations:
        alphas = float(problem.K)
    elif spec.alpha_bounds != "exact":
        alphas = float(spec.alpha_bounds)
    else:
        alphas = alpha_sequence(problem, seed)
    sched = schedule_u_directed if problem.adversary.directed else schedule_u_undirected
    return sched(problem.K, dist.norm_bound, dist.smallest_eigenvalue, problem.T, alphas, problem.d), True


def make_agent(problem: Problem, algorithm, seed: int = 0):
    spec = _as_spec(algorithm)
    sigma_inv = problem.dist.second_moment_inverse
    if spec.is_ix:
        return Exp3LGCIX(problem.K, sigma_inv, spec.alpha_bounds, spec.uses_side_observations)
    params, coupled = resolve_u_params(problem, spec, seed)
    return Exp3LGCU(problem.K, sigma_inv, params, spec.uses_side_observations,
                    check_magnitude=coupled)


# -- records and traces -----------------------------------------------------

@dataclass
class RoundRecord:
    round: int
    context: np.ndarray
    policy: np.ndarray
    action: int
    realized_loss: float
    observation_set: tuple
    oracle_context: np.ndarray
    oracle_losses: dict
    q: np.ndarray
    graph_hash: str

    def to_json(self) -> dict:
        """JSON-ready dict; action indices are 1-based."""
        return {
            "round": self.round,
            "context": self.context.tolist(),
            "policy": self.policy.tolist(),
            "action": self.action + 1,
            "realized_loss": self.realized_loss,
            "observation_set": [i + 1 for i in self.observation_set],
            "oracle_context": self.oracle_context.tolist(),
            "oracle_losses": {str(i + 1): v for i, v in sorted(self.oracle_losses.items())},
            "q": self.q.tolist(),
            "graph_hash": self.graph_hash,
        }


@dataclass
class Trace:
    """Columnar record of one trial (rounds ``1..T``).

    ``loss_table[t-1, i]`` is action ``i``'s loss at the realized context;
    it is kept so regret can be evaluated without replaying the adversary.
    The per-round detail arrays are ``None`` for summary traces.
    """
    config_hash: str
    seed: int
    algorithm: str
    contexts: np.ndarray
    actions: np.ndarray
    loss_table: np.ndarray
    policies: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    observed: Optional[np.ndarray] = None
    oracle_contexts: Optional[np.ndarray] = None
    oracle_table: Optional[np.ndarray] = None
    rates: Optional[np.ndarray] = None
    graph_hashes: Optional[list] = None
    q_sum: float = 0.0

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def realized_losses(self) -> np.ndarray:
        return self.loss_table[np.arange(len(self.actions)), self.actions]

    @property
    def cumulative_loss(self) -> np.ndarray:
        return np.cumsum(self.realized_losses)

    @property
    def full(self) -> bool:
        return self.policies is not None

    def record(self, t: int) -> RoundRecord:
        if not self.full:
            raise SimulationError("summary trace has no per-round detail")
        b = t - 1
        obs = tuple(int(i) for i in np.flatnonzero(self.observed[b]))
        return RoundRecord(
            round=t,
            context=self.contexts[b],
            policy=self.policies[b],
            action=int(self.actions[b]),
            realized_loss=float(self.loss_table[b, self.actions[b]]),
            observation_set=obs,
            oracle_context=self.oracle_contexts[b],
            oracle_losses={i: float(self.oracle_table[b, i]) for i in obs},
            q=self.q[b],
            graph_hash=self.graph_hashes[b],
        )

    def __iter__(self):
        return (self.record(t) for t in range(1, len(self) + 1))

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.contexts, self.actions, self.loss_table, self.policies, self.q,
                    self.observed, self.oracle_contexts, self.oracle_table):
            if arr is not None:
                h.update(np.ascontiguousarray(arr).tobytes())
        if self.graph_hashes is not None:
            h.update("".join(self.graph_hashes).encode())
        return h.hexdigest()

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self:
                fh.write(json.dumps(rec.to_json()) + "\n")


def _empty_trace(problem, spec, seed, T, full) -> Trace:
    K, d = problem.K, problem.d
    tr = Trace(problem.config_hash, seed, spec.name, np.empty((T, d)), np.empty(T, dtype=np.int64),
               np.empty((T, K)))
    if full:
        tr.policies = np.empty((T, K))
        tr.q = np.empty((T, K))
        tr.observed = np.empty((T, K), dtype=bool)
        tr.oracle_contexts = np.empty((T, d))
        tr.oracle_table = np.full((T, K), np.nan)
        tr.rates = np.empty((T, 2))
        tr.graph_hashes = []
    return tr


# -- protocol engine --------------------------------------------------------

def run_round(agent, adversary: Adversary, dist: ContextDistribution, t: int,
              rng: TrialStreams, history=None) -> RoundRecord:
    """Play round ``t`` and advance ``agent`` by exactly one round.

    The adversary commits its graph and loss vectors before the context is
    drawn; the graph reaches the agent only in its update.
    """
    try:
        graph, thetas = adversary.commit(t, history, rng)
        x = sample_context(dist, rng.context)
        action, pi = agent.step(x, rng.action)
        graph = agent.feedback_graph(graph)
        observed = observation_set(graph, action)
        seen = {i: float(x @ thetas[i]) for i in observed}
        oracle = oracle_draw(dist, adversary, t, observed, rng.oracle, thetas=thetas)
        agent.update(graph, observed, oracle, seen)
    except SimulationError:
        raise
    except Exception as exc:
        raise SimulationError(f"round {t}: {exc}") from exc
    return RoundRecord(t, x, pi, action, seen[action], tuple(sorted(observed.members)),
                       oracle.context, oracle.losses, agent.last_q, graph.digest())


def _run_protocol(problem, spec, seed, full) -> Trace:
    agent = make_agent(problem, spec, seed)
    adversary = problem.adversary
    streams = TrialStreams(seed)
    T = problem.T
    tr = _empty_trace(problem, spec, seed, T, full)
    history = []
    for t in range(1, T + 1):
        rec = run_round(agent, adversary, problem.dist, t, streams, history)
        if not adversary.oblivious:
            history.append(rec)
        b = t - 1
        tr.contexts[b] = rec.context
        tr.actions[b] = rec.action
        thetas = adversary.losses(t) if adversary.oblivious else None
        if thetas is not None:
            tr.loss_table[b] = thetas @ rec.context
        else:
            tr.loss_table[b] = np.nan
            tr.loss_table[b, rec.action] = rec.realized_loss
        if full:
            tr.policies[b] = rec.policy
            tr.q[b] = rec.q
            tr.observed[b] = False
            tr.observed[b, list(rec.observation_set)] = True
            tr.oracle_contexts[b] = rec.oracle_context
            for i, v in rec.oracle_losses.items():
                tr.oracle_table[b, i] = v
            if spec.is_ix:
                tr.rates[b] = np.nan
            else:
                tr.rates[b] = (agent.params.eta, agent.params.gamma)
            tr.graph_hashes.append(rec.graph_hash)
    if spec.is_ix:
        tr.q_sum = agent.params.q_history
    return tr


# -- kernel engine ----------------------------------------------------------

def _run_kernel(problem, spec, seed, full, backend) -> Trace:
    name, kernel = _backend.get_kernel(backend)
    adversary = problem.adversary
    dist = problem.dist
    K, d, T = problem.K, problem.d, problem.T
    streams = TrialStreams(seed)
    sigma_inv = np.ascontiguousarray(dist.second_moment_inverse)
    if spec.is_ix:
        algo, eta, gamma, check = 1, 0.0, 0.0, False
    else:
        params, check = resolve_u_params(problem, spec, seed)
        algo, eta, gamma = 0, params.eta, params.gamma

    alpha_cache = {}

    def alpha_of(g):
        if not spec.uses_side_observations:
            return float(K)
        if spec.alpha_bounds != "exact":
            return float(spec.alpha_bounds)
        a = alpha_cache.get(g.key)
        if a is None:
            a = alpha_cache[g.key] = float(independence_number(g))
        return a

    cum = np.zeros((K, d))
    qsum = np.zeros(1)
    tr = _empty_trace(problem, spec, seed, T, full)
    source = adversary.graph_source
    per_round = isinstance(source, RandomGraphSpec) and source.per_round
    edgeless = FeedbackGraph.edgeless(K)

    B = BLOCK
    o_action = np.empty(B, dtype=np.int64)
    o_pi, o_q, o_table, o_oracle = (np.empty((B, K)) for _ in range(4))
    o_obs = np.empty((B, K), dtype=np.uint8)
    o_rates = np.empty((B, 2))

    for t0 in range(1, T + 1, B):
        n = min(B, T + 1 - t0)
        X = dist.sample(streams.context, n)
        U = streams.action.random(n)
        Xo = dist.sample(streams.oracle, n)
        if per_round:
            graphs = [adversary.graph(t, streams) for t in range(t0, t0 + n)]
        else:
            graphs = [adversary.graph(t0, streams)]
        if not spec.uses_side_observations:
            graphs = [edgeless] * len(graphs)
        if per_round:
            adj = np.stack([g.adjacency() for g in graphs])
            alpha = np.array([alpha_of(g) for g in graphs])
            hashes = [g.digest() for g in graphs]
        else:
            adj = np.broadcast_to(graphs[0].adjacency(), (n, K, K))
            alpha = np.full(n, alpha_of(graphs[0]))
            hashes = [graphs[0].digest()] * n
        theta = np.ascontiguousarray(adversary.losses_block(t0, t0 + n))
        try:
            kernel(algo, cum, qsum, X, Xo, U, adj, alpha, theta, sigma_inv, eta, gamma, check,
                   t0, o_action[:n], o_pi[:n], o_q[:n], o_obs[:n], o_table[:n], o_oracle[:n],
                   o_rates[:n])
        except _backend.KernelError as exc:
            raise SimulationError(f"{spec.name}, seed {seed}: {exc}") from exc
        sl = slice(t0 - 1, t0 - 1 + n)
        tr.contexts[sl] = X
        tr.actions[sl] = o_action[:n]
        tr.loss_table[sl] = o_table[:n]
        if full:
            obs = o_obs[:n].astype(bool)
            tr.policies[sl] = o_pi[:n]
            tr.q[sl] = o_q[:n]
            tr.observed[sl] = obs
            tr.oracle_contexts[sl] = Xo
            tr.oracle_table[sl] = np.where(obs, o_oracle[:n], np.nan)
            tr.rates[sl] = o_rates[:n]
            tr.graph_hashes.extend(hashes)
    tr.q_sum = float(qsum[0])
    return tr


def run_trial(config, seed: int, algorithm=None, *, backend: Optional[str] = None,
              engine: str = "auto", full: bool = True) -> Trace:
    """One trial of one algorithm; a deterministic function of ``(config, seed)``.

    ``algorithm`` defaults to the config's first algorithm. ``engine`` picks
    ``"kernel"`` or ``"protocol"``; ``"auto"`` uses the kernel whenever the
    adversary is oblivious.
    """
    problem = _as_problem(config)
    if algorithm is None:
        algorithm = config.algorithms[0]
    spec = _as_spec(algorithm)
    if engine == "auto":
        engine = "kernel" if problem.adversary.oblivious else "protocol"
    if engine == "kernel":
        if not problem.adversary.oblivious:
            raise SimulationError("the kernel engine needs an oblivious adversary")
        return _run_kernel(problem, spec, seed, full, backend)
    if engine == "protocol":
        return _run_protocol(problem, spec, seed, full)
    raise ValueError(f"unknown engine {engine!r}")


# -- experiments ------------------------------------------------------------

def checkpoint_rounds(T: int, count: Optional[int] = 100, stride: Optional[int] = None) -> np.ndarray:
    """1-based rounds at which curves are reported; always ends at ``T``."""
    if T < 1:
        return np.zeros(0, dtype=np.int64)
    if stride is not None:
        r = np.arange(stride, T + 1, stride)
    else:
        n = min(count or 100, T)
        r = np.unique(np.round(np.arange(1, n + 1) * (T / n)).astype(np.int64))
    if len(r) == 0 or r[-1] != T:
        r = np.append(r, T)
    return r


@dataclass
class AlgorithmResult:
    name: str
    curve: RegretCurve
    final_regrets: np.ndarray
    q_sums: np.ndarray
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    rounds: np.ndarray
    trials: int
    base_seed: int
    backend: str
    algorithms: dict

    def __getitem__(self, name) -> AlgorithmResult:
        return self.algorithms[name]


def run_experiment(config, *, threads: int = 1, backend: Optional[str] = None,
                   checkpoints: Optional[int] = None, stride: Optional[int] = None,
                   trace_sink=None) -> ExperimentResult:
    """Run every configured algorithm for ``config.trials`` paired trials.

    Trial ``k`` uses seed ``base_seed + k`` for every algorithm. Regret
    curves are subsampled at the checkpoint rounds and reduced in trial
    order, so the result does not depend on ``threads``. ``trace_sink``,
    if given, is called with each full trace (slow for long horizons).
    """
    problem = _as_problem(config)
    benchmark = build_benchmark(problem.adversary, problem.T)
    if checkpoints is None and stride is None:
        checkpoints = getattr(config, "checkpoints", 100)
        stride = getattr(config, "stride", None)
    rounds = checkpoint_rounds(problem.T, checkpoints, stride)
    seeds = [config.base_seed + k for k in range(config.trials)]
    backend_name = _backend.get_kernel(backend)[0]
    results = {}
    specs = [_as_spec(s) for s in config.algorithms]
    keys = [s.key for s in specs]
    if len(set(keys)) != len(keys):
        raise SimulationError(f"algorithm labels must be unique, got {keys}")
    for spec in specs:

        def one(seed, spec=spec):
            # every worker builds its own problem: adversaries cache per-trial graphs
            local = _as_problem(config)
            tr = run_trial(local, seed, spec, backend=backend, full=trace_sink is not None)
            if trace_sink is not None:
                trace_sink(spec.key, seed, tr)
            curve = regret_curve(tr, benchmark).values
            log.info("%s seed=%d final regret %.4f", spec.key, seed,
                     curve[-1] if len(curve) else 0.0)
            return curve[rounds - 1], tr.q_sum

        if threads > 1 and trace_sink is None:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(one, seeds))
        else:
            outs = [one(s) for s in seeds]
        curves = [RegretCurve(o[0], rounds=rounds) for o in outs]
        params = {}
        if not spec.is_ix:
            p, _ = resolve_u_params(problem, spec, config.base_seed)
            params = {"eta": p.eta, "gamma": p.gamma, "directed": p.directed}
        results[spec.key] = AlgorithmResult(
            spec.key, aggregate(curves),
            np.array([c.values[-1] if len(c.values) else 0.0 for c in curves]),
            np.array([o[1] for o in outs]), params)
    return ExperimentResult(rounds, config.trials, config.base_seed, backend_name, results)
