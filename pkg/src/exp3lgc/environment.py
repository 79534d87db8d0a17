"""Context distributions, adversaries and the extra-observation oracle.

Rounds are numbered ``t = 1..T`` throughout this module, matching the
angle convention of the synthetic sudden-change adversary (the raw round
index is used as an angle in radians).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .graph import FeedbackGraph, ObservationSet, RandomGraphSpec

SINGULAR_TOL = 1e-12


class EnvironmentSpecError(ValueError):
    pass


class SingularSecondMomentError(EnvironmentSpecError):
    pass


# -- random streams ---------------------------------------------------------

STREAM_TAGS = {"context": 0, "oracle-context": 1, "action": 2, "graph": 3}


def stream(seed: int, tag: str) -> np.random.Generator:
    """Generator for one purpose-tagged sub-stream of a trial seed.

    Each stream is consumed strictly in round order, so the draw at a given
    round is fixed by ``(seed, tag, round)`` regardless of how the caller
    chunks its requests.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, STREAM_TAGS[tag]])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class TrialStreams:
    seed: int
    context: np.random.Generator = field(init=False)
    oracle: np.random.Generator = field(init=False)
    action: np.random.Generator = field(init=False)
    graph: np.random.Generator = field(init=False)
    cache: dict = field(init=False, default_factory=dict)

    def __post_init__(self):
        self.context = stream(self.seed, "context")
        self.oracle = stream(self.seed, "oracle-context")
        self.action = stream(self.seed, "action")
        self.graph = stream(self.seed, "graph")


# -- context distributions --------------------------------------------------

class ContextDistribution:
    """Known i.i.d. context distribution with bounded support.

    Two kinds are supported: ``bernoulli_scaled`` (each coordinate is
    ``1/sqrt(d)`` with probability ``p`` and 0 otherwise, independently) and
    ``custom_discrete`` (finite support with given probabilities).
    """

    def __init__(self, kind: str, dimension: int, *, p: float = 0.5,
                 support=None, probs=None):
        if dimension < 1:
            raise EnvironmentSpecError(f"dimension must be >= 1, got {dimension}")
        self.kind = kind
        self.dimension = int(dimension)
        if kind == "bernoulli_scaled":
            if not 0.0 <= p <= 1.0:
                raise EnvironmentSpecError(f"p must lie in [0, 1], got {p}")
            self.p = float(p)
            self.support = None
            self.probs = None
        elif kind == "custom_discrete":
            support = np.atleast_2d(np.asarray(support, dtype=float))
            probs = np.asarray(probs, dtype=float)
            if support.shape[1] != self.dimension or probs.shape != (support.shape[0],):
                raise EnvironmentSpecError("support must be (n, d) and probs (n,)")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-10:
                raise EnvironmentSpecError("support probabilities must form a distribution")
            self.p = None
            self.support = support
            self.probs = probs
            self._cdf = np.cumsum(probs)
        else:
            raise EnvironmentSpecError(f"unknown context distribution kind {kind!r}")

    def sample(self, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
        """One context (``n=None``) or an ``(n, d)`` block, in stream order."""
        d = self.dimension
        shape = (d,) if n is None else (n, d)
        if self.kind == "bernoulli_scaled":
            return (rng.random(shape) < self.p) * (1.0 / math.sqrt(d))
        u = rng.random() if n is None else rng.random(n)
        idx = np.searchsorted(self._cdf, u, side="right")
        idx = np.minimum(idx, len(self.probs) - 1)
        return self.support[idx].copy()

    def support_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Full support and its probabilities (enumerated for Bernoulli)."""
        if self.kind == "custom_discrete":
            return self.support, self.probs
        d, p = self.dimension, self.p
        pts, w = [], []
        for bits in itertools.product((0, 1), repeat=d):
            k = sum(bits)
            pts.append(np.array(bits, dtype=float) / math.sqrt(d))
            w.append(p ** k * (1 - p) ** (d - k))
        return np.array(pts), np.array(w)

    @cached_property
    def second_moment(self) -> np.ndarray:
        return exact_second_moment(self)

    @cached_property
    def second_moment_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.second_moment)

    @cached_property
    def smallest_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.second_moment)[0])

    @cached_property
    def norm_bound(self) -> float:
        if self.kind == "bernoulli_scaled":
            return 1.0 if self.p > 0 else 0.0
        return float(np.max(np.linalg.norm(self.support[self.probs > 0], axis=1)))

    @property
    def nonnegative(self) -> bool:
        if self.kind == "bernoulli_scaled":
            return True
        return bool(np.all(self.support[self.probs > 0] >= 0))

    def __repr__(self):
        if self.kind == "bernoulli_scaled":
            return f"ContextDistribution(bernoulli_scaled, d={self.dimension}, p={self.p})"
        return f"ContextDistribution(custom_discrete, d={self.dimension}, n={len(self.probs)})"


def bernoulli_scaled(d: int, p: float = 0.5) -> ContextDistribution:
    return ContextDistribution("bernoulli_scaled", d, p=p)


def custom_discrete(support, probs) -> ContextDistribution:
    support = np.atleast_2d(np.asarray(support, dtype=float))
    return ContextDistribution("custom_discrete", support.shape[1], support=support, probs=probs)


def sample_context(dist: ContextDistribution, rng: np.random.Generator) -> np.ndarray:
    return dist.sample(rng)


def exact_second_moment(dist: ContextDistribution) -> np.ndarray:
    """``E[X X^T]`` in closed form; raises if it is not positive definite."""
    d = dist.dimension
    if dist.kind == "bernoulli_scaled":
        p = dist.p
        sigma = np.full((d, d), p * p / d)
        np.fill_diagonal(sigma, p / d)
    else:
        sigma = np.einsum("n,ni,nj->ij", dist.probs, dist.support, dist.support)
    lam = np.linalg.eigvalsh(sigma)[0]
    if lam <= SINGULAR_TOL:
        raise SingularSecondMomentError(
            f"second-moment matrix is singular (smallest eigenvalue {lam:.3g})")
    return sigma


# -- adversaries ------------------------------------------------------------

class Adversary:
    """Chooses the feedback graph and loss vectors of every round.

    Oblivious adversaries implement :meth:`losses` and :meth:`graph`.
    Adaptive ones override :meth:`commit`, which also receives the
    interaction history; only the round-by-round simulator supports those.
    """

    kind = "abstract"
    oblivious = True

    def __init__(self, num_actions: int, dimension: int, horizon: int, graph):
        self.num_actions = int(num_actions)
        self.dimension = int(dimension)
        self.horizon = int(horizon)
        if isinstance(graph, FeedbackGraph) and graph.num_actions != self.num_actions:
            raise EnvironmentSpecError(
                f"graph has {graph.num_actions} nodes but K={self.num_actions}")
        self.graph_source = graph

    def losses(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def losses_block(self, t0: int, t1: int) -> np.ndarray:
        """Loss vectors for rounds ``t0..t1-1`` as an ``(n, K, d)`` array."""
        return np.stack([self.losses(t) for t in range(t0, t1)])

    @property
    def per_round_graphs(self) -> bool:
        return isinstance(self.graph_source, RandomGraphSpec) and self.graph_source.per_round

    @property
    def directed(self) -> bool:
        g = self.graph_source
        return g.directed if isinstance(g, RandomGraphSpec) else not g.undirected

    def graph(self, t: int, streams: Optional[TrialStreams] = None) -> FeedbackGraph:
        """Round-``t`` graph.

        Random graphs are drawn from ``streams.graph``: once per call when
        redrawn every round, otherwise once per trial (cached on ``streams``).
        """
        g = self.graph_source
        if isinstance(g, FeedbackGraph):
            return g
        if streams is None:
            raise EnvironmentSpecError("random feedback graphs need the trial's streams")
        if g.per_round:
            return g.draw(streams.graph)
        cached = streams.cache.get("fixed_graph")
        if cached is None:
            cached = streams.cache["fixed_graph"] = g.draw(streams.graph)
        return cached

    def commit(self, t: int, history, streams: Optional[TrialStreams] = None):
        return self.graph(t, streams), self.losses(t)

    @property
    def nonnegative(self) -> bool:
        raise NotImplementedError


class SuddenChangeAdversary(Adversary):
    """Synthetic losses whose generating formula switches at ``change_point``.

    Every coordinate of the loss vector of (1-based) action ``i`` equals
    ``scales[0] * i * |cos t| / sqrt(d)`` for ``t <= change_point`` and
    ``scales[1] * i * |sin t| / sqrt(d)`` afterwards. ``stationary=True``
    keeps the first formula for all rounds.
    """

    kind = "sudden_change_synthetic"

    def __init__(self, num_actions: int, dimension: int, horizon: int, graph,
                 change_point: Optional[int] = None, scales=(0.1, 0.05),
                 stationary: bool = False, context_norm: float = 1.0):
        super().__init__(num_actions, dimension, horizon, graph)
        self.change_point = horizon // 2 if change_point is None else int(change_point)
        self.scales = (float(scales[0]), float(scales[1]))
        self.stationary = bool(stationary)
        if min(self.scales) < 0:
            raise EnvironmentSpecError("sudden-change scales must be nonnegative")
        # max_i ||theta_i||_2 = scale * K, and |<x, theta>| <= ||theta|| * sigma
        worst = max(self.scales) * self.num_actions * context_norm
        if worst > 1.0 + 1e-12:
            raise EnvironmentSpecError(
                f"loss bound violated: max ||theta|| * sigma = {worst:.4g} > 1")

    def coefficients(self, t) -> np.ndarray:
        """Per-action coordinate value; vectorised over an array of rounds."""
        t = np.asarray(t, dtype=float)
        i = np.arange(1, self.num_actions + 1, dtype=float)
        first = self.scales[0] * np.abs(np.cos(t))
        if self.stationary:
            amp = first
        else:
            amp = np.where(t <= self.change_point, first, self.scales[1] * np.abs(np.sin(t)))
        return amp[..., None] * i / math.sqrt(self.dimension)

    def losses(self, t: int) -> np.ndarray:
        c = self.coefficients(t)
        return np.repeat(c[:, None], self.dimension, axis=1)

    def losses_block(self, t0: int, t1: int) -> np.ndarray:
        c = self.coefficients(np.arange(t0, t1))
        return np.repeat(c[:, :, None], self.dimension, axis=2)

    @property
    def nonnegative(self) -> bool:
        return True


class TableAdversary(Adversary):
    """Oblivious adversary backed by a user-supplied ``(T, K, d)`` table."""

    kind = "custom_oblivious"

    def __init__(self, thetas, graph, context_norm: Optional[float] = None):
        thetas = np.asarray(thetas, dtype=float)
        if thetas.ndim != 3:
            raise EnvironmentSpecError("loss table must have shape (T, K, d)")
        T, K, d = thetas.shape
        super().__init__(K, d, T, graph)
        self.thetas = thetas
        if context_norm is not None and T:
            worst = float(np.max(np.linalg.norm(thetas, axis=2))) * context_norm
            if worst > 1.0 + 1e-12:
                raise EnvironmentSpecError(
                    f"loss bound violated: max ||theta|| * sigma = {worst:.4g} > 1")

    def losses(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.horizon:
            raise EnvironmentSpecError(f"round {t} outside table of length {self.horizon}")
        return self.thetas[t - 1]

    def losses_block(self, t0: int, t1: int) -> np.ndarray:
        return self.thetas[t0 - 1:t1 - 1]

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.thetas >= 0))


def adversary_losses(spec: Adversary, t: int) -> np.ndarray:
    """``(K, d)`` loss vectors of round ``t``."""
    if not 1 <= t <= spec.horizon:
        raise EnvironmentSpecError(f"round {t} outside 1..{spec.horizon}")
    return spec.losses(t)


def adversary_graph(spec: Adversary, t: int, streams: Optional[TrialStreams] = None) -> FeedbackGraph:
    return spec.graph(t, streams)


# -- extra observation oracle ----------------------------------------------

@dataclass(frozen=True)
class OracleDraw:
    context: np.ndarray
    losses: dict

    def loss(self, i: int) -> float:
        return self.losses[i]


def oracle_draw(dist: ContextDistribution, spec: Adversary, t: int, observed: ObservationSet,
                rng: np.random.Generator, thetas: Optional[np.ndarray] = None) -> OracleDraw:
    """Fresh context from ``dist`` plus its losses for every observed action.

    ``rng`` must be the oracle stream, never the one that produced the
    decision context. ``thetas`` overrides the adversary's table with
    already-committed loss vectors (needed for adaptive adversaries).
    """
    x = dist.sample(rng)
    if thetas is None:
        thetas = spec.losses(t)
    return OracleDraw(x, {int(i): float(x @ thetas[i]) for i in observed})
