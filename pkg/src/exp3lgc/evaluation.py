"""Benchmark policy, regret curves and cross-trial aggregation.

Regret is measured on the realized contexts of a trace: the running sum
of the gap between the played action's loss and the loss of the best
fixed context-to-action mapping for the whole horizon.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

CSV_HEADER = ("round", "algorithm", "mean_regret", "std_regret", "trials")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkPolicy:
    """Row ``j`` of ``cumulative_theta`` is the sum of action ``j``'s loss vectors."""
    cumulative_theta: np.ndarray

    def decision(self, x) -> np.ndarray:
        """Best action for one context or a block of contexts (lowest index on ties)."""
        scores = np.asarray(x, dtype=float) @ self.cumulative_theta.T
        return np.argmin(scores, axis=-1)


def build_benchmark(adversary, T: int, block: int = 8192) -> BenchmarkPolicy:
    if not getattr(adversary, "oblivious", False):
        raise EvaluationError("the benchmark needs an oblivious adversary")
    total = np.zeros((adversary.num_actions, adversary.dimension))
    for t0 in range(1, T + 1, block):
        t1 = min(T + 1, t0 + block)
        total += adversary.losses_block(t0, t1).sum(axis=0)
    return BenchmarkPolicy(total)


@dataclass
class RegretCurve:
    values: np.ndarray
    rounds: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    trials: int = 1

    def __len__(self):
        return len(self.values)


def regret_curve(trace, benchmark: BenchmarkPolicy) -> RegretCurve:
    """Running sum of ``loss(played) - loss(benchmark)`` on the trace's contexts."""
    T = len(trace.actions)
    if trace.loss_table.shape[0] != T or trace.contexts.shape[0] != T:
        raise EvaluationError("trace arrays have mismatched lengths")
    if trace.loss_table.shape[1] != benchmark.cumulative_theta.shape[0]:
        raise EvaluationError("trace and benchmark disagree on the number of actions")
    r = np.arange(T)
    best = benchmark.decision(trace.contexts) if T else np.zeros(0, dtype=int)
    gaps = trace.loss_table[r, trace.actions] - trace.loss_table[r, best]
    return RegretCurve(np.cumsum(gaps), rounds=r + 1)


def aggregate(curves: Sequence[RegretCurve]) -> RegretCurve:
    """Pointwise mean and sample (n-1) standard deviation; std is 0 for one curve."""
    if not curves:
        raise EvaluationError("cannot aggregate an empty list of curves")
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise EvaluationError(f"curves have different lengths {sorted(lengths)}")
    stack = np.stack([np.asarray(c.values, dtype=float) for c in curves])
    mean = stack.mean(axis=0)
    std = stack.std(axis=0, ddof=1) if len(curves) > 1 else np.zeros_like(mean)
    return RegretCurve(mean, rounds=curves[0].rounds, std=std, trials=len(curves))


def results_rows(result):
    for name, res in result.algorithms.items():
        c = res.curve
        for k, t in enumerate(result.rounds):
            yield int(t), name, float(c.values[k]), float(c.std[k]), c.trials


def write_results_csv(result, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in results_rows(result):
        w.writerow((row[0], row[1], repr(row[2]), repr(row[3]), row[4]))


def results_csv_text(result) -> str:
    buf = io.StringIO()
    write_results_csv(result, buf)
    return buf.getvalue()
