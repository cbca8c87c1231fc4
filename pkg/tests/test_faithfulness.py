import math

import numpy as np
import pytest

from seqattrib import (
    ExplainerConfig,
    Mask,
    MetricConfig,
    SaliencyVector,
    ToyModelSpec,
    ToyOracle,
    evaluate_methods,
    necessity,
    perplexity,
    sufficiency,
)
from seqattrib.errors import EvaluationError
from seqattrib.faithfulness import instance_metrics, necessity_for_removed
from seqattrib.toymodel import make_toy_corpus, make_toy_instance, toy_generate, toy_greedy_decode

from conftest import make_instance


class TestPerplexity:
    def test_uniform_bigram(self):
        assert perplexity([-math.log(2), -math.log(2)]) == pytest.approx(2.0)

    def test_certainty(self):
        assert perplexity([0.0, 0.0, 0.0]) == 1.0

    def test_single_token(self):
        assert perplexity([-math.log(4)]) == pytest.approx(4.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            perplexity([])

    def test_positive_rejected(self):
        with pytest.raises(ValueError):
            perplexity([0.1])


class TestSufficiency:
    def test_k100_equals_baseline(self):
        spec = toy_generate(44, d=4, T=2, V=3)
        inst = make_toy_instance(spec, seed=44)
        oracle = ToyOracle(spec=spec)
        s = SaliencyVector(np.array([0.4, -0.1, 0.3, 0.0]), "sum")
        baseline = perplexity(oracle.score_one(inst, Mask.ones(4)))
        assert sufficiency(inst, s, oracle, 100) == baseline

    def test_decisive_feature(self):
        # only feature 0 carries signal: keeping it alone equals keeping all
        W = np.zeros((2, 3, 3))
        W[:, 0, :] = np.random.default_rng(0).uniform(-2, 2, size=(2, 3))
        spec = ToyModelSpec(tuple("abc"), W, np.zeros((2, 3)))
        inst = make_instance(3, toy_greedy_decode(spec))
        oracle = ToyOracle(spec=spec)
        s = SaliencyVector(np.array([1.0, 0.0, 0.0]), "sum")
        only_top = sufficiency(inst, s, oracle, 34)  # ceil(1.02) = 1 feature
        everything = sufficiency(inst, s, oracle, 100)
        assert only_top == pytest.approx(everything, abs=1e-12)


class TestNecessity:
    def test_empty_removal_is_zero(self):
        spec = toy_generate(44, d=4, T=2, V=3)
        inst = make_toy_instance(spec, seed=44)
        assert necessity_for_removed(inst, set(), ToyOracle(spec=spec)) == 0.0

    def test_all_dummies_zero(self):
        spec = ToyModelSpec(("A", "B"), np.zeros((1, 3, 2)), np.zeros((1, 2)))
        inst = make_instance(3, ("A",))
        oracle = ToyOracle(spec=spec)
        s = SaliencyVector(np.array([0.3, 0.2, 0.1]), "sum")
        for k in (10, 50, 100):
            assert necessity(inst, s, oracle, k) == pytest.approx(0.0, abs=1e-12)

    def test_decisive_feature_closed_form(self):
        from seqattrib import toy_score

        W = np.zeros((1, 2, 2))
        W[0, 0] = [1.5, -1.5]  # feature 0 decisive, feature 1 dummy
        spec = ToyModelSpec(("A", "B"), W, np.zeros((1, 2)))
        inst = make_instance(2, ("A",))
        oracle = ToyOracle(spec=spec)
        s = SaliencyVector(np.array([1.0, 0.0]), "sum")
        expected = perplexity(toy_score(spec, [1], ["A"])) - perplexity(
            toy_score(spec, [0, 1], ["A"])
        )
        assert necessity(inst, s, oracle, 50) == pytest.approx(expected, abs=1e-12)


class TestEvaluateMethods:
    def test_attention_only_no_explanation_scores(self):
        spec = toy_generate(50, d=4, T=2, V=3)
        inst = make_toy_instance(spec, seed=50)
        oracle = ToyOracle(spec=spec)
        result = evaluate_methods(
            [inst],
            ["attention"],
            ExplainerConfig(),
            MetricConfig(),
            oracle,
        )
        curve = result.curves[0]
        assert len(curve.points) == len(MetricConfig().k_grid)
        # scores were issued only for the metrics: at most one mask per
        # (K, metric) plus the baseline
        assert oracle.attention_calls == 1
        assert oracle.score_calls <= 2 * len(MetricConfig().k_grid) + 1

    def test_order_independent(self):
        corpus = make_toy_corpus(seed=7, n=4)
        config = ExplainerConfig(n_samples=16, seed=3)
        r1 = evaluate_methods(corpus, ["lime", "attention"], config, MetricConfig(), ToyOracle())
        r2 = evaluate_methods(
            list(reversed(corpus)), ["lime", "attention"], config, MetricConfig(), ToyOracle()
        )
        for c1, c2 in zip(r1.curves, r2.curves):
            assert c1.method == c2.method
            for p1, p2 in zip(c1.points, c2.points):
                assert p1.mean_sufficiency_ppl == pytest.approx(p2.mean_sufficiency_ppl, abs=1e-12)
                assert p1.mean_necessity_delta_ppl == pytest.approx(p2.mean_necessity_delta_ppl, abs=1e-12)

    def test_precomputed_matrices_match_on_the_fly(self):
        from seqattrib import explain

        corpus = make_toy_corpus(seed=9, n=3)
        config = ExplainerConfig(method="shapley_exact", seed=1)
        mc = MetricConfig()
        result = evaluate_methods(corpus, ["shapley_exact"], config, mc, ToyOracle())
        by_id = {}
        for inst in corpus:
            oracle = ToyOracle()
            matrix = explain(inst, oracle, config)
            for k, suff, nec in instance_metrics(inst, matrix, oracle, mc):
                by_id[(inst.metadata["id"], k)] = (suff, nec)
        for row in result.audit:
            suff, nec = by_id[(row.instance_id, row.k)]
            assert row.sufficiency_ppl == pytest.approx(suff, abs=1e-12)
            assert row.necessity_delta_ppl == pytest.approx(nec, abs=1e-12)

    def test_empty_corpus(self):
        with pytest.raises(EvaluationError):
            evaluate_methods([], ["lime"], ExplainerConfig(), MetricConfig(), ToyOracle())

    def test_failing_instances_skipped(self):
        corpus = make_toy_corpus(seed=11, n=2)
        bad = make_instance(3, ("A",))  # no toy metadata: spec lookup fails
        result = evaluate_methods(
            corpus + [bad], ["shapley_exact"], ExplainerConfig(), MetricConfig(), ToyOracle()
        )
        assert result.curves[0].n_instances == 2
        assert len(result.skipped) == 1

    def test_frozen_regression_sufficiency_monotone_for_exact(self):
        # computed once on the bundled corpus and kept as a regression check
        corpus = make_toy_corpus(seed=42, n=20)
        result = evaluate_methods(
            corpus,
            ["shapley_exact"],
            ExplainerConfig(seed=0),
            MetricConfig(),
            ToyOracle(),
        )
        points = {p.k: p.mean_sufficiency_ppl for p in result.curves[0].points}
        assert points[50] <= points[5]


class TestMetricConfig:
    def test_k_zero_rejected(self):
        with pytest.raises(ValueError):
            MetricConfig(k_grid=(0, 10))

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            MetricConfig(k_grid=(10, 5))
