"""Reproducible experiments: regime comparison and bootstrap coverage.

The regime benchmark emulates the weak/manual data situation with the
synthetic corpus: a large rule-labeled pool whose labels are wrong wherever
the vocabulary-mismatch knob made the rule labeler miss, a small pool with
true labels, and a held-out true-labeled test set.  Under that noise the
expected ordering is hybrid >= weakly supervised and hybrid >= supervised
on a quarter of the manual data.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import (
    DEFAULT_PRIORS,
    GeneratorConfig,
    LabeledDataset,
    generate,
    split_train_validation,
)
from .evaluation import Task, bootstrap_ci, evaluate_three_tasks
from .features import EncoderConfig
from .rules import Lexicon, default_lexicon, label_report
from .schema import Finding, Report, Source
from .textproc import DEFAULT_NORMALIZER, NormalizerConfig
from .training import Checkpoint, Regime, SplitDataset, TrainConfig, train, predict_texts

__all__ = [
    "benchmark_priors",
    "rule_label_dataset",
    "RegimeOutcome",
    "BenchmarkResult",
    "run_regime_benchmark",
    "bootstrap_coverage",
]


def benchmark_priors() -> dict[Finding, tuple[float, float, float]]:
    """Default priors with enough normal reports to make NoFinding learnable.

    At the observed 1/1013 rate a 1,000-report test set holds about one
    normal report, so NoFinding F1 would be pure noise; 3% keeps it rare but
    measurable.
    """
    priors = dict(DEFAULT_PRIORS)
    priors[Finding.NO_FINDING] = (0.03, 0.0, 0.0)
    return priors


def rule_label_dataset(
    dataset: LabeledDataset,
    lexicon: Lexicon | None = None,
    config: NormalizerConfig = DEFAULT_NORMALIZER,
) -> LabeledDataset:
    """Relabel every report with the rule labeler (weak labels)."""
    lexicon = lexicon or default_lexicon()
    relabeled = tuple(
        Report(id=r.id, text=r.text, source=Source.RULE,
               labels=label_report(r.text, lexicon, config))
        for r in dataset.reports
    )
    return LabeledDataset(
        reports=relabeled, provenance=f"rule({dataset.provenance})"
    )


@dataclass(frozen=True)
class RegimeOutcome:
    per_seed: tuple[float, ...]
    median: float


@dataclass(frozen=True)
class BenchmarkResult:
    seeds: tuple[int, ...]
    mention_f1: Mapping[str, RegimeOutcome]

    def to_json_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "mention_f1": {
                tag: {"per_seed": list(o.per_seed), "median": o.median}
                for tag, o in self.mention_f1.items()
            },
        }


def _mention_mean_f1(checkpoint: Checkpoint, test: LabeledDataset) -> float:
    texts = [r.text for r in test.reports]
    predictions = dict(zip(test.ids(), predict_texts(checkpoint, texts)))
    report = evaluate_three_tasks(predictions, test.labels_by_id())
    value = report.task_means[Task.MENTION]
    return 0.0 if value is None else value


def run_regime_benchmark(
    seeds: Iterable[int] = range(5),
    regimes: Sequence[Regime] = (
        Regime.weakly_supervised(),
        Regime.supervised(25),
        Regime.hybrid(100),
    ),
    mismatch_rate: float = 0.15,
    weak_pool: int = 11_000,
    weak_train: int = 10_000,
    manual_pool: int = 1_013,
    test_pool: int = 1_000,
    encoder_config: EncoderConfig | None = None,
    ws_config: TrainConfig | None = None,
    supervised_config: TrainConfig | None = None,
    hybrid_config: TrainConfig | None = None,
) -> BenchmarkResult:
    """Compare training regimes on freshly generated corpora, one per seed.

    Per seed: a rule-labeled weak split (``weak_train`` train ids, the rest
    validation), a true-labeled manual split (4:1), and a held-out
    true-labeled test set, all with the same vocabulary-mismatch rate.
    Weakly supervised training runs once per seed and its checkpoint seeds
    every hybrid regime.  Scores are mean mention-extraction F1 on the test
    set; the result carries per-seed scores and their median.
    """
    encoder_config = encoder_config or EncoderConfig(
        dim=1 << 14, word_orders=(1, 2), char_orders=(), seed=0
    )
    ws_config = ws_config or TrainConfig(
        learning_rate=3e-3, epochs=2, eval_interval=200, hidden_dim=64
    )
    supervised_config = supervised_config or TrainConfig(
        learning_rate=3e-3, epochs=40, eval_interval=100, hidden_dim=64
    )
    hybrid_config = hybrid_config or TrainConfig(
        learning_rate=1e-3, epochs=10, eval_interval=100, hidden_dim=64
    )
    seeds = tuple(seeds)
    scores: dict[str, list[float]] = {r.tag: [] for r in regimes}
    for seed in seeds:
        weak_truth = generate(
            GeneratorConfig(
                seed=1000 + seed, priors=benchmark_priors(),
                mismatch_rate=mismatch_rate,
            ),
            weak_pool,
        )
        weak_labeled = rule_label_dataset(weak_truth)
        weak_ids = weak_labeled.ids()
        weak = SplitDataset(
            dataset=weak_labeled,
            train_ids=tuple(weak_ids[:weak_train]),
            validation_ids=tuple(weak_ids[weak_train:]),
        )
        manual_ds = generate(
            GeneratorConfig(
                seed=2000 + seed, priors=benchmark_priors(),
                mismatch_rate=mismatch_rate,
            ),
            manual_pool,
        )
        m_train, m_val = split_train_validation(manual_ds.ids(), seed=seed)
        manual = SplitDataset(
            dataset=manual_ds, train_ids=m_train, validation_ids=m_val
        )
        test = generate(
            GeneratorConfig(
                seed=3000 + seed, priors=benchmark_priors(),
                mismatch_rate=mismatch_rate,
            ),
            test_pool,
        )

        ws_checkpoint: Checkpoint | None = None
        need_ws = any(
            r.kind.value in ("weakly_supervised", "hybrid") for r in regimes
        )
        if need_ws:
            ws_checkpoint = train(
                Regime.weakly_supervised(),
                replace(ws_config, seed=seed),
                weak=weak,
                encoder_config=encoder_config,
            )
        for regime in regimes:
            if regime.kind.value == "weakly_supervised":
                checkpoint = ws_checkpoint
            elif regime.kind.value == "supervised":
                checkpoint = train(
                    regime,
                    replace(supervised_config, seed=seed),
                    manual=manual,
                    encoder_config=encoder_config,
                )
            else:
                checkpoint = train(
                    regime,
                    replace(hybrid_config, seed=seed),
                    manual=manual,
                    ws_checkpoint=ws_checkpoint,
                )
            assert checkpoint is not None
            scores[regime.tag].append(_mention_mean_f1(checkpoint, test))
    return BenchmarkResult(
        seeds=seeds,
        mention_f1={
            tag: RegimeOutcome(
                per_seed=tuple(vals), median=statistics.median(vals)
            )
            for tag, vals in scores.items()
        },
    )


def bootstrap_coverage(
    p: float = 0.8,
    n: int = 200,
    trials: int = 1_000,
    n_resamples: int = 1_000,
    level: float = 0.95,
    seed: int = 0,
) -> float:
    """Empirical CI coverage for the mean of Bernoulli(p) samples."""
    covered = 0
    for trial in range(trials):
        rng = np.random.default_rng([seed, 0xB007, trial])
        items = (rng.random(n) < p).astype(float)
        trial_seed = int(
            np.random.SeedSequence([seed, 0xC0BE, trial]).generate_state(1)[0]
        )
        lo, hi = bootstrap_ci(
            items,
            lambda a: float(np.mean(a)),
            n_resamples=n_resamples,
            level=level,
            seed=trial_seed,
        )
        if lo <= p <= hi:
            covered += 1
    return covered / trials
