"""Feedback graphs over the action set.

Actions are 0-based internally. Literal graph descriptions read from
config files use 1-based indices and are converted on the way in.

Every node observes itself; self-loops are never stored and every formula
adds the self term explicitly.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

EXACT_ALPHA_MAX_K = 25
SIMPLEX_TOL = 1e-10


class GraphError(ValueError):
    pass


def _popcount(x: int) -> int:
    return bin(x).count("1")


class FeedbackGraph:
    """Immutable directed observation structure over ``num_actions`` nodes.

    An edge ``(i, j)`` means that playing ``i`` reveals the loss of ``j``.
    With ``undirected=True`` the edge set is symmetrised on construction.

    Out- and in-neighbourhoods are stored as integer bitsets, one per node.
    """

    __slots__ = ("num_actions", "undirected", "_out", "_in", "_digest")

    def __init__(self, num_actions: int, edges: Iterable[tuple[int, int]] = (),
                 undirected: bool = False):
        if int(num_actions) < 1:
            raise GraphError(f"num_actions must be positive, got {num_actions}")
        K = int(num_actions)
        out = [0] * K
        for i, j in edges:
            i, j = int(i), int(j)
            if not (0 <= i < K and 0 <= j < K):
                raise GraphError(f"edge ({i}, {j}) out of range for K={K}")
            if i == j:
                raise GraphError(f"self-loop ({i}, {i}) not allowed")
            out[i] |= 1 << j
            if undirected:
                out[j] |= 1 << i
        inn = [0] * K
        for i in range(K):
            m = out[i]
            while m:
                low = m & -m
                inn[low.bit_length() - 1] |= 1 << i
                m ^= low
        self.num_actions = K
        self.undirected = bool(undirected)
        self._out = tuple(out)
        self._in = tuple(inn)
        self._digest = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def edgeless(cls, K: int) -> "FeedbackGraph":
        return cls(K, (), undirected=True)

    @classmethod
    def complete(cls, K: int) -> "FeedbackGraph":
        return cls(K, ((i, j) for i in range(K) for j in range(i + 1, K)), undirected=True)

    @classmethod
    def complete_plus_isolated(cls, clique: int = 9, isolated: int = 1) -> "FeedbackGraph":
        """Clique on the first ``clique`` nodes plus ``isolated`` singletons."""
        if clique < 1 or isolated < 0:
            raise GraphError("clique must be >= 1 and isolated >= 0")
        edges = ((i, j) for i in range(clique) for j in range(i + 1, clique))
        return cls(clique + isolated, edges, undirected=True)

    @classmethod
    def from_adjacency(cls, adj, undirected: bool = False) -> "FeedbackGraph":
        a = np.asarray(adj)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError("adjacency must be a square matrix")
        if undirected and not np.array_equal(a != 0, (a != 0).T):
            raise GraphError("undirected adjacency must be symmetric")
        ii, jj = np.nonzero(a)
        return cls(a.shape[0], ((i, j) for i, j in zip(ii, jj) if i != j), undirected)

    @classmethod
    def from_uniforms(cls, u: np.ndarray, p: float, directed: bool) -> "FeedbackGraph":
        """Erdos-Renyi graph from a KxK block of uniform draws.

        Directed: ``i -> j`` iff ``u[i, j] < p``. Undirected: the pair
        ``{i, j}`` (i < j) is joined iff ``u[i, j] < p``.
        """
        K = u.shape[0]
        hit = u < p
        if directed:
            edges = [(i, j) for i in range(K) for j in range(K) if i != j and hit[i, j]]
        else:
            edges = [(i, j) for i in range(K) for j in range(i + 1, K) if hit[i, j]]
        return cls(K, edges, undirected=not directed)

    # -- accessors ----------------------------------------------------------

    @property
    def edges(self) -> frozenset:
        return frozenset((i, j) for i in range(self.num_actions) for j in self.out_neighbors(i))

    def out_mask(self, i: int) -> int:
        return self._out[i]

    def in_mask(self, i: int) -> int:
        return self._in[i]

    def out_neighbors(self, i: int) -> list[int]:
        return [j for j in range(self.num_actions) if self._out[i] >> j & 1]

    def in_neighbors(self, i: int) -> list[int]:
        return [j for j in range(self.num_actions) if self._in[i] >> j & 1]

    def adjacency(self) -> np.ndarray:
        """``uint8`` matrix with ``A[i, j] = 1`` iff ``i -> j``."""
        K = self.num_actions
        a = np.zeros((K, K), dtype=np.uint8)
        for i in range(K):
            for j in self.out_neighbors(i):
                a[i, j] = 1
        return a

    def conflict_masks(self) -> tuple[int, ...]:
        """Neighbourhoods ignoring direction (used for independence)."""
        return tuple(o | n for o, n in zip(self._out, self._in))

    def without_edges(self) -> "FeedbackGraph":
        return FeedbackGraph.edgeless(self.num_actions)

    @property
    def key(self) -> tuple:
        return (self.num_actions, self._out)

    def digest(self) -> str:
        if self._digest is None:
            h = hashlib.sha1(repr(self.key).encode()).hexdigest()[:16]
            self._digest = h
        return self._digest

    def __eq__(self, other):
        return isinstance(other, FeedbackGraph) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        kind = "undirected" if self.undirected else "directed"
        return f"FeedbackGraph(K={self.num_actions}, {kind}, edges={len(self.edges)})"


@dataclass(frozen=True)
class ObservationSet:
    action: int
    members: frozenset

    def __contains__(self, j) -> bool:
        return j in self.members

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.members))

    def __len__(self) -> int:
        return len(self.members)


def observation_set(graph: FeedbackGraph, action: int) -> ObservationSet:
    """Actions whose losses are revealed when ``action`` is played."""
    if not 0 <= action < graph.num_actions:
        raise GraphError(f"action {action} out of range for K={graph.num_actions}")
    return ObservationSet(action, frozenset(graph.out_neighbors(action)) | {action})


def check_simplex(pi, K: int, tol: float = SIMPLEX_TOL) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (K,):
        raise GraphError(f"probability vector has shape {pi.shape}, expected ({K},)")
    if np.any(pi < -tol) or abs(pi.sum() - 1.0) > tol:
        raise GraphError("probability vector is not on the simplex")
    return pi


def observation_probabilities(graph: FeedbackGraph, pi) -> np.ndarray:
    """Probability that each action's loss is revealed under ``pi``.

    ``q[i] = pi[i] + sum of pi[j] over in-neighbours j of i``.
    """
    pi = check_simplex(pi, graph.num_actions)
    return pi + graph.adjacency().T.astype(float) @ pi


def _mis_size(cand: int, nbr: tuple[int, ...], current: int, best: list[int]) -> None:
    # Branch and bound on bitsets. best[0] holds the incumbent.
    while True:
        if current + _popcount(cand) <= best[0]:
            return
        if not cand:
            best[0] = current
            return
        # A vertex of degree <= 1 inside cand belongs to some maximum set.
        vmin, dmin, vmax, dmax = -1, 1 << 30, -1, -1
        m = cand
        while m:
            low = m & -m
            v = low.bit_length() - 1
            m ^= low
            deg = _popcount(nbr[v] & cand)
            if deg < dmin:
                vmin, dmin = v, deg
            if deg > dmax:
                vmax, dmax = v, deg
        if dmin <= 1:
            cand &= ~(nbr[vmin] | (1 << vmin))
            current += 1
            continue
        _mis_size(cand & ~(nbr[vmax] | (1 << vmax)), nbr, current + 1, best)
        cand &= ~(1 << vmax)


def independence_number_exact(graph: FeedbackGraph) -> int:
    """Size of a maximum independent set.

    Two nodes conflict when an edge joins them in either direction.
    Limited to ``K <= 25``; use :func:`independence_number_greedy_bound`
    beyond that.
    """
    K = graph.num_actions
    if K > EXACT_ALPHA_MAX_K:
        raise GraphError(
            f"exact independence number limited to K <= {EXACT_ALPHA_MAX_K} (got {K}); "
            "use independence_number_greedy_bound instead")
    best = [0]
    _mis_size((1 << K) - 1, graph.conflict_masks(), 0, best)
    return best[0]


def independence_number_greedy_bound(graph: FeedbackGraph) -> int:
    """Cheap upper bound on the independence number.

    Takes the smaller of two valid bounds: the size of a greedy clique
    partition (an independent set meets each clique at most once) and
    ``K`` minus the size of a greedy maximal matching (a matching
    lower-bounds every vertex cover).
    """
    K = graph.num_actions
    nbr = graph.conflict_masks()
    order = sorted(range(K), key=lambda v: (-_popcount(nbr[v]), v))

    unassigned = (1 << K) - 1
    cliques = 0
    for v in order:
        if not unassigned >> v & 1:
            continue
        clique = 1 << v
        common = nbr[v] & unassigned
        for u in order:
            if common >> u & 1:
                clique |= 1 << u
                common &= nbr[u]
        unassigned &= ~clique
        cliques += 1

    matched = 0
    matching = 0
    for v in order:
        if matched >> v & 1:
            continue
        free = nbr[v] & ~matched
        if free:
            u = (free & -free).bit_length() - 1
            matched |= (1 << v) | (1 << u)
            matching += 1
    return min(cliques, K - matching)


def independence_number(graph: FeedbackGraph) -> int:
    """Exact value when tractable, otherwise the greedy upper bound."""
    if graph.num_actions <= EXACT_ALPHA_MAX_K:
        return independence_number_exact(graph)
    return independence_number_greedy_bound(graph)


@dataclass(frozen=True)
class RandomGraphSpec:
    """Erdos-Renyi feedback graphs drawn from the environment's graph stream."""
    num_actions: int
    p: float
    directed: bool
    per_round: bool

    def draw(self, rng: np.random.Generator) -> FeedbackGraph:
        K = self.num_actions
        return FeedbackGraph.from_uniforms(rng.random((K, K)), self.p, self.directed)


def graph_from_literal(literal: dict, K: int):
    """Build a graph (or random-graph spec) from a config literal.

    Returns a :class:`FeedbackGraph` for deterministic literals and a
    :class:`RandomGraphSpec` for ``erdos_renyi``.
    """
    if not isinstance(literal, dict) or "type" not in literal:
        raise GraphError("graph literal must be an object with a 'type' field")
    kind = literal["type"]
    allowed = {
        "edgeless": {"type"},
        "complete": {"type"},
        "complete_plus_isolated": {"type", "clique", "isolated"},
        "explicit": {"type", "directed", "edges"},
        "erdos_renyi": {"type", "p", "directed", "per_round"},
    }
    if kind not in allowed:
        raise GraphError(f"unknown graph type {kind!r}; expected one of {sorted(allowed)}")
    extra = set(literal) - allowed[kind]
    if extra:
        raise GraphError(f"unknown key(s) {sorted(extra)} in graph literal of type {kind!r}")

    if kind == "edgeless":
        return FeedbackGraph.edgeless(K)
    if kind == "complete":
        return FeedbackGraph.complete(K)
    if kind == "complete_plus_isolated":
        clique = int(literal.get("clique", 9))
        isolated = int(literal.get("isolated", 1))
        if clique + isolated != K:
            raise GraphError(f"clique + isolated = {clique + isolated} does not match K={K}")
        return FeedbackGraph.complete_plus_isolated(clique, isolated)
    if kind == "explicit":
        directed = bool(literal.get("directed", False))
        edges = []
        for e in literal.get("edges", []):
            if len(e) != 2:
                raise GraphError(f"edge {e!r} must be a pair")
            edges.append((int(e[0]) - 1, int(e[1]) - 1))
        return FeedbackGraph(K, edges, undirected=not directed)
    p = float(literal["p"])
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"erdos_renyi p must lie in [0, 1], got {p}")
    return RandomGraphSpec(K, p, bool(literal.get("directed", False)),
                           bool(literal.get("per_round", False)))
