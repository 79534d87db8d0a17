"""Acceptance gate: the nine criteria at their stated tolerances.

Run with ``pytest tests/test_acceptance.py`` (a PASS/FAIL line per criterion
is printed in the terminal summary) or directly as a script.
"""
import functools
import math
import time

import numpy as np
import pytest

from exp3lgc.algorithms import (q_bound_u_directed, q_value_ix, schedule_ix, schedule_u_directed,
                                schedule_u_undirected)
from exp3lgc.config import parse_config
from exp3lgc.evaluation import results_csv_text
from exp3lgc.graph import FeedbackGraph, independence_number_exact
from exp3lgc.simulator import AlgorithmSpec, Problem, resolve_u_params, run_experiment, run_trial
from exp3lgc.verification import (audit_optimistic, audit_unbiased, audit_independence,
                                  audit_lemmas, lemma_sum_audit, regret_bound_value)

REPORT = {}


def record(n, ok, detail):
    REPORT[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


@functools.lru_cache(maxsize=None)
def desk_config():
    cfg = parse_config("paper_fig2").with_overrides(trials=20, horizon=20000)
    assert cfg.build().adversary.change_point == 10000
    return cfg


@functools.lru_cache(maxsize=None)
def desk_run():
    return run_experiment(desk_config())


def criterion_1():
    t = time.perf_counter()
    err = audit_unbiased(100, seed=0)
    dt = time.perf_counter() - t
    return record(1, err <= 1e-10 and dt < 5, f"max deviation {err:.2e}, {dt:.2f}s")


def criterion_2():
    t = time.perf_counter()
    err, excess = audit_optimistic(100, seed=1)
    dt = time.perf_counter() - t
    ok = err <= 1e-10 and excess <= 1e-10 and dt < 5
    return record(2, ok, f"identity error {err:.2e}, optimism excess {excess:.2e}, {dt:.2f}s")


def criterion_3():
    v = audit_lemmas(200, seed=2)
    clique = lemma_sum_audit(FeedbackGraph.complete_plus_isolated(9, 1), np.full(10, 0.1),
                            "undirected")
    eq = abs(clique.lhs - 2) <= 1e-10 and clique.rhs_bound == 2
    return record(3, sum(v.values()) == 0 and eq,
                  f"violations {v}, clique-graph lhs {clique.lhs:.12f} vs alpha {clique.rhs_bound}")


def criterion_4():
    r = audit_independence(500, seed=3)
    ok = (r["clique_graph"] == 2 and r["complete"] == [1] * 12
          and r["edgeless"] == list(range(1, 13)) and r["greedy_failures"] == 0)
    assert independence_number_exact(FeedbackGraph.complete(20)) == 1
    return record(4, ok, f"clique graph alpha {r['clique_graph']}, greedy < exact on "
                         f"{r['greedy_failures']}/500 graphs")


def _margin(res, a, b):
    fa, fb = res[a].final_regrets, res[b].final_regrets
    se = math.sqrt(fa.var(ddof=1) / len(fa) + fb.var(ddof=1) / len(fb))
    return fb.mean() - fa.mean(), se


def criterion_5():
    res = desk_run()
    du, seu = _margin(res, "exp3-lgc-u", "exp3-lgc-u-star")
    di, sei = _margin(res, "exp3-lgc-ix", "exp3-lgc-ix-star")
    ok = len(res.algorithms) == 5 and du >= seu and di >= sei
    return record(5, ok, f"U* - U = {du:.2f} (SE {seu:.2f}), IX* - IX = {di:.2f} (SE {sei:.2f})")


def criterion_6():
    res = desk_run()
    p = desk_config().build()
    u, _ = resolve_u_params(p, AlgorithmSpec("exp3-lgc-u"))
    alpha = independence_number_exact(p.adversary.graph_source)
    common = dict(K=p.K, d=p.d, T=p.T, alphas=alpha)
    bu = regret_bound_value("thm1_undirected", sigma=p.dist.norm_bound,
                            lambda_min=p.dist.smallest_eigenvalue, eta=u.eta, **common)
    bi = regret_bound_value("thm2", **common)
    ru = res["exp3-lgc-u"].curve.values[-1]
    ri = res["exp3-lgc-ix"].curve.values[-1]
    return record(6, ru <= bu and ri <= bi,
                  f"U {ru:.1f} <= {bu:.1f}, IX {ri:.1f} <= {bi:.1f}")


def criterion_7():
    cfg = parse_config("paper_fig2_stationary").with_overrides(trials=20, horizon=20000)
    res = run_experiment(cfg, stride=cfg.T // 2)
    half, full = res["exp3-lgc-u"].curve.values
    ratio = full / half
    return record(7, ratio <= 1.8, f"R(T)/R(T/2) = {full:.1f}/{half:.1f} = {ratio:.4f}")


def criterion_8():
    lam = 0.025
    close = functools.partial(math.isclose, rel_tol=1e-10)
    checks = []
    for (T, a), (eta, gamma) in {(20000, 2): (0.00037470192161318381, 0.14988076864527352),
                                 (100000, 2): (0.00016757179360537533, 0.067028717442150132),
                                 (100000, 10): (0.00015995086373960271, 0.063980345495841083)}.items():
        p = schedule_u_undirected(10, 1.0, lam, T, a, 10)
        checks += [close(p.eta, eta), close(p.gamma, gamma)]
    for (T, a), (eta, gamma) in {(20000, 2): (0.00023836564731139808, 0.095346258924559232),
                                 (100000, 2): (0.00010660035817780522, 0.042640143271122087)}.items():
        p = schedule_u_directed(10, 1.0, lam, T, a, 10)
        checks += [close(p.eta, eta), close(p.gamma, gamma)]
    eta1, beta1 = schedule_ix(1, 10, 10, 0.0)
    checks += [close(beta1, 0.47985259121880812), close(eta1, 0.15174271293851464),
               close(q_value_ix(1, 1, 1.0), 4.1972245773362194),
               close(q_value_ix(2, 10, 0.25), 23.311504675158324),
               close(q_bound_u_directed(1, 1, 4 / math.e), 4.0),
               close(q_bound_u_directed(10, 10, 0.1), 239.65858188431928)]
    return record(8, all(checks), f"{sum(checks)}/{len(checks)} fixtures match")


def criterion_9():
    cfg = desk_config()
    first = results_csv_text(desk_run())
    second = results_csv_text(run_experiment(cfg))
    same_csv = first == second
    base = cfg.build()
    edgeless = Problem(base.dist, type(base.adversary)(
        10, 10, cfg.T, FeedbackGraph.edgeless(10), scales=base.adversary.scales))
    equal = True
    for algo in ("exp3-lgc-u", "exp3-lgc-ix"):
        for seed in (0, 1):
            a = run_trial(base, seed, algo + "-star")
            b = run_trial(edgeless, seed, algo)
            equal &= a.digest() == b.digest()
    return record(9, same_csv and equal,
                  f"CSV byte-identical: {same_csv}, edgeless U/IX == U*/IX* traces: {equal}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{k}" for k in range(1, 10)])
def test_criterion(criterion):
    assert criterion(), REPORT[int(criterion.__name__.split("_")[1])]


if __name__ == "__main__":
    for c in CRITERIA:
        c()
    for k in sorted(REPORT):
        print(REPORT[k])
