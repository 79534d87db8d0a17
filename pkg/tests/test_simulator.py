import dataclasses
import json

import numpy as np
import pytest

from exp3lgc.config import parse_config
from exp3lgc.environment import Adversary, SuddenChangeAdversary, TableAdversary, bernoulli_scaled
from exp3lgc.evaluation import build_benchmark, regret_curve
from exp3lgc.graph import FeedbackGraph, RandomGraphSpec, observation_set
from exp3lgc.simulator import (BLOCK, AlgorithmSpec, Problem, RoundRecord, SimulationError,
                               checkpoint_rounds, run_experiment, run_trial)

ALL = ["exp3-lgc-u", "exp3-lgc-ix", "exp3-lgc-u-star", "exp3-lgc-ix-star"]


def problem(T=1000, graph=None, K=10, d=10, **kw):
    graph = FeedbackGraph.complete_plus_isolated(9, 1) if graph is None else graph
    return Problem(bernoulli_scaled(d, 0.5), SuddenChangeAdversary(K, d, T, graph, **kw))


def assert_same_trace(a, b, exact=True):
    np.testing.assert_array_equal(a.contexts, b.contexts)
    np.testing.assert_array_equal(a.actions, b.actions)
    np.testing.assert_array_equal(a.observed, b.observed)
    if exact:
        np.testing.assert_array_equal(a.policies, b.policies)
        np.testing.assert_array_equal(a.q, b.q)
    else:
        np.testing.assert_allclose(a.policies, b.policies, rtol=0, atol=1e-12)
        np.testing.assert_allclose(a.q, b.q, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.loss_table, b.loss_table, rtol=0, atol=1e-15)


class TestTrial:
    def test_single_action(self):
        p = Problem(bernoulli_scaled(2, 0.5), TableAdversary(np.full((20, 1, 2), 0.1),
                                                             FeedbackGraph.edgeless(1)))
        tr = run_trial(p, 0, AlgorithmSpec("exp3-lgc-u", eta=0.1, gamma=0.0))
        assert not tr.actions.any()
        np.testing.assert_array_equal(tr.policies, 1.0)
        np.testing.assert_array_equal(tr.q, 1.0)

    def test_empty_horizon(self):
        p = Problem(bernoulli_scaled(2, 0.5), TableAdversary(np.zeros((0, 3, 2)),
                                                             FeedbackGraph.edgeless(3)))
        tr = run_trial(p, 0, AlgorithmSpec("exp3-lgc-u", eta=0.1, gamma=0.1))
        assert len(tr) == 0 and list(tr) == []

    def test_edgeless_single_observation(self):
        tr = run_trial(problem(graph=FeedbackGraph.edgeless(10)), 1, "exp3-lgc-ix")
        assert np.all(tr.observed.sum(axis=1) == 1)

    def test_clique_plus_isolated_observation_sizes(self):
        tr = run_trial(problem(), 2, "exp3-lgc-u")
        sizes = tr.observed.sum(axis=1)
        np.testing.assert_array_equal(sizes, np.where(tr.actions < 9, 9, 1))

    def test_same_seed_same_trace(self):
        p = problem()
        assert run_trial(p, 5, "exp3-lgc-u").digest() == run_trial(p, 5, "exp3-lgc-u").digest()

    def test_different_seeds_differ(self):
        p = problem()
        for s in range(5):
            a, b = run_trial(p, s, "exp3-lgc-ix"), run_trial(p, s + 100, "exp3-lgc-ix")
            assert not np.array_equal(a.actions, b.actions)

    def test_trace_invariants(self):
        p = problem(T=1000)
        tr = run_trial(p, 3, "exp3-lgc-u")
        assert len(tr) == 1000
        losses = tr.realized_losses
        assert np.all(np.abs(losses) <= 1)
        np.testing.assert_allclose(tr.cumulative_loss, np.cumsum(losses), atol=1e-9)
        g = FeedbackGraph.complete_plus_isolated(9, 1)
        for rec in list(tr)[:50]:
            assert set(rec.observation_set) == set(observation_set(g, rec.action))
            assert set(rec.oracle_losses) == set(rec.observation_set)
            assert rec.policy.sum() == pytest.approx(1, abs=1e-10)
            assert np.all(rec.policy >= tr.rates[rec.round - 1, 1] / 10 - 1e-15)

    def test_paired_streams(self):
        p = problem()
        traces = [run_trial(p, 11, a) for a in ALL]
        for tr in traces[1:]:
            np.testing.assert_array_equal(tr.contexts, traces[0].contexts)
            np.testing.assert_array_equal(tr.oracle_contexts, traces[0].oracle_contexts)

    @pytest.mark.parametrize("algo", ALL)
    def test_kernel_matches_protocol(self, algo):
        p = problem(T=BLOCK + 150)
        assert_same_trace(run_trial(p, 7, algo, engine="protocol"),
                          run_trial(p, 7, algo, engine="kernel", backend="python"), exact=False)

    @pytest.mark.parametrize("directed", [False, True])
    def test_random_graphs_engines_agree(self, directed):
        spec = RandomGraphSpec(6, 0.4, directed, per_round=True)
        p = Problem(bernoulli_scaled(3, 0.5), SuddenChangeAdversary(6, 3, 200, spec,
                                                                     scales=(0.1, 0.05)))
        algo = AlgorithmSpec("exp3-lgc-u", eta=0.01, gamma=0.05) if directed else "exp3-lgc-ix"
        a = run_trial(p, 4, algo, engine="protocol")
        b = run_trial(p, 4, algo, engine="kernel", backend="python")
        assert_same_trace(a, b, exact=False)
        assert len(set(a.graph_hashes)) > 1
        assert a.graph_hashes == b.graph_hashes

    @pytest.mark.parametrize("algo", ["exp3-lgc-u", "exp3-lgc-ix"])
    def test_ablation_equivalence(self, algo):
        star = run_trial(problem(T=1000), 9, algo + "-star")
        edgeless = run_trial(problem(T=1000, graph=FeedbackGraph.edgeless(10)), 9, algo)
        assert_same_trace(star, edgeless)
        assert star.q_sum == edgeless.q_sum

    def test_jsonl_fields(self, tmp_path):
        tr = run_trial(problem(T=5), 0, "exp3-lgc-ix")
        path = tmp_path / "t.jsonl"
        tr.write_jsonl(path)
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(lines) == 5
        assert list(lines[0]) == [f.name for f in dataclasses.fields(RoundRecord)]
        assert lines[0]["round"] == 1
        assert 1 <= lines[0]["action"] <= 10
        assert lines[0]["action"] in lines[0]["observation_set"]

    def test_runtime_errors_name_the_round(self):
        thetas = np.full((10, 2, 1), 0.1)
        thetas[4] = -0.1
        p = Problem(bernoulli_scaled(1, 1.0), TableAdversary(thetas, FeedbackGraph.complete(2)))
        for engine in ("protocol", "kernel"):
            with pytest.raises(SimulationError, match="round 5"):
                run_trial(p, 0, "exp3-lgc-ix", engine=engine)


class EchoAdversary(Adversary):
    """Adaptive: penalises whatever was played last round."""
    oblivious = False

    def __init__(self):
        super().__init__(3, 1, 30, FeedbackGraph.edgeless(3))

    def commit(self, t, history, streams=None):
        thetas = np.zeros((3, 1))
        if history:
            thetas[history[-1].action] = 0.5
        return self.graph_source, thetas

    @property
    def nonnegative(self):
        return True


def test_adaptive_adversary_uses_protocol():
    p = Problem(bernoulli_scaled(1, 1.0), EchoAdversary())
    tr = run_trial(p, 0, "exp3-lgc-ix")
    assert len(tr) == 30
    assert tr.realized_losses[0] == 0
    with pytest.raises(SimulationError):
        run_trial(p, 0, "exp3-lgc-ix", engine="kernel")


class TestExperiment:
    def test_checkpoints(self):
        np.testing.assert_array_equal(checkpoint_rounds(20000, 100)[:3], [200, 400, 600])
        assert checkpoint_rounds(20000)[-1] == 20000
        assert len(checkpoint_rounds(20000)) == 100
        np.testing.assert_array_equal(checkpoint_rounds(10, stride=4), [4, 8, 10])
        np.testing.assert_array_equal(checkpoint_rounds(5, 100), [1, 2, 3, 4, 5])

    def test_single_trial_matches_trace(self, small_config):
        cfg = small_config.with_overrides(trials=1)
        res = run_experiment(cfg, stride=1)
        p = cfg.build()
        curve = regret_curve(run_trial(p, cfg.base_seed, cfg.algorithms[0]),
                             build_benchmark(p.adversary, p.T))
        np.testing.assert_array_equal(res["exp3-lgc-u"].curve.values, curve.values)
        assert not res["exp3-lgc-u"].curve.std.any()

    def test_threads_do_not_change_results(self, small_config):
        a = run_experiment(small_config, threads=1)
        b = run_experiment(small_config, threads=3)
        for k in a.algorithms:
            np.testing.assert_array_equal(a[k].curve.values, b[k].curve.values)
            np.testing.assert_array_equal(a[k].curve.std, b[k].curve.std)

    def test_five_variants(self, small_config):
        res = run_experiment(small_config)
        assert len(res.algorithms) == 5
        assert res["exp3-lgc-u-alpha-k"].params == res["exp3-lgc-u-star"].params
