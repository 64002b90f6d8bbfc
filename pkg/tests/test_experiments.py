import pytest

from reportlabeler.corpus import DEFAULT_PRIORS, GeneratorConfig, generate
from reportlabeler.experiments import (
    BenchmarkResult,
    RegimeOutcome,
    benchmark_priors,
    bootstrap_coverage,
    rule_label_dataset,
    run_regime_benchmark,
)
from reportlabeler.features import EncoderConfig
from reportlabeler.schema import Finding, Source
from reportlabeler.training import Regime, TrainConfig


def test_benchmark_priors_only_raise_no_finding():
    priors = benchmark_priors()
    assert priors[Finding.NO_FINDING] == (0.03, 0.0, 0.0)
    for finding, triple in priors.items():
        if finding is not Finding.NO_FINDING:
            assert triple == DEFAULT_PRIORS[finding]


def test_rule_label_dataset_preserves_everything_but_labels():
    truth = generate(GeneratorConfig(seed=1, mismatch_rate=0.0), 40)
    weak = rule_label_dataset(truth)
    assert weak.ids() == truth.ids()
    assert weak.provenance.startswith("rule(")
    for original, relabeled in zip(truth.reports, weak.reports):
        assert relabeled.text == original.text
        assert relabeled.source is Source.RULE
        # on a clean corpus the weak labels coincide with the truth
        assert relabeled.labels == original.labels


def test_rule_label_dataset_diverges_under_mismatch():
    truth = generate(GeneratorConfig(seed=1, mismatch_rate=1.0), 120)
    weak = rule_label_dataset(truth)
    assert any(
        w.labels != t.labels for w, t in zip(weak.reports, truth.reports)
    )


def test_benchmark_result_json_shape():
    result = BenchmarkResult(
        seeds=(0, 1),
        mention_f1={
            "weakly_supervised": RegimeOutcome(per_seed=(0.8, 0.9), median=0.85)
        },
    )
    blob = result.to_json_dict()
    assert blob["seeds"] == [0, 1]
    assert blob["mention_f1"]["weakly_supervised"]["median"] == 0.85


def test_run_regime_benchmark_miniature():
    # a tiny configuration proving the orchestration end to end; the real
    # sizes run in the acceptance suite
    result = run_regime_benchmark(
        seeds=(0,),
        regimes=(Regime.weakly_supervised(), Regime.hybrid(100)),
        weak_pool=60,
        weak_train=50,
        manual_pool=40,
        test_pool=30,
        encoder_config=EncoderConfig(dim=1 << 10, word_orders=(1,), char_orders=()),
        ws_config=TrainConfig(
            learning_rate=3e-3, epochs=1, eval_interval=8, hidden_dim=8
        ),
        hybrid_config=TrainConfig(
            learning_rate=1e-3, epochs=1, eval_interval=8, hidden_dim=8
        ),
    )
    assert result.seeds == (0,)
    assert set(result.mention_f1) == {"weakly_supervised", "hybrid_100"}
    for outcome in result.mention_f1.values():
        assert len(outcome.per_seed) == 1
        assert 0.0 <= outcome.median <= 1.0


def test_bootstrap_coverage_smoke():
    coverage = bootstrap_coverage(p=0.5, n=40, trials=40, n_resamples=60, seed=0)
    assert 0.7 <= coverage <= 1.0
    again = bootstrap_coverage(p=0.5, n=40, trials=40, n_resamples=60, seed=0)
    assert coverage == again
