"""Evaluation protocol: three binary tasks per finding, plus CIs and AUC.

Each four-state label is projected onto three binary tasks (mention,
negation, uncertainty) and pooled confusion counts give one F1 per finding
and task.  F1 is undefined (N/A) only when tp+fp+fn = 0 for that cell; task
means skip undefined cells.  NoFinding is scored for mention only, since its
label never carries negation or uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from .schema import FINDINGS, Finding, LabelValue, ReportLabels

__all__ = [
    "Task",
    "ConfusionCounts",
    "MetricReport",
    "PresenceStats",
    "binarize_task",
    "binarize_presence",
    "f1",
    "confusion",
    "evaluate_three_tasks",
    "evaluate_labels",
    "selection_metric",
    "sensitivity_specificity",
    "auc",
    "bootstrap_ci",
    "BootstrapError",
    "render_f1_table",
    "render_presence_table",
]


class Task(Enum):
    MENTION = "mention"
    NEGATION = "negation"
    UNCERTAINTY = "uncertainty"


TASKS: tuple[Task, ...] = tuple(Task)


def binarize_task(label: LabelValue, task: Task) -> bool:
    """Project a four-state label onto one binary task."""
    if task is Task.MENTION:
        return label is not LabelValue.BLANK
    if task is Task.NEGATION:
        return label is LabelValue.NEGATIVE
    return label is LabelValue.UNCERTAIN


def binarize_presence(label: LabelValue) -> bool:
    """Clinical presence: uncertain counts as present, blank as absent."""
    return label in (LabelValue.POSITIVE, LabelValue.UNCERTAIN)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )


def confusion(pred: Sequence[bool], ref: Sequence[bool]) -> ConfusionCounts:
    tp = fp = fn = tn = 0
    for p, r in zip(pred, ref, strict=True):
        if p and r:
            tp += 1
        elif p and not r:
            fp += 1
        elif not p and r:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def f1(counts: ConfusionCounts) -> float | None:
    """2tp / (2tp + fp + fn); None (N/A) exactly when that denominator is 0."""
    denom = 2 * counts.tp + counts.fp + counts.fn
    if denom == 0:
        return None
    return 2.0 * counts.tp / denom


@dataclass(frozen=True)
class PresenceStats:
    sensitivity: float | None
    specificity: float | None
    sensitivity_ci: tuple[float, float] | None = None
    specificity_ci: tuple[float, float] | None = None


@dataclass(frozen=True)
class MetricReport:
    """Per-finding, per-task F1 plus optional presence metrics and AUC.

    ``f1_scores[finding]`` maps only the tasks that finding is scored on
    (NoFinding: mention only); a present key with value None means N/A.
    """

    f1_scores: Mapping[Finding, Mapping[Task, float | None]]
    task_means: Mapping[Task, float | None]
    n_reports: int
    presence: Mapping[Finding, PresenceStats] = field(default_factory=dict)
    auc_value: float | None = None
    auc_ci: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        for per_task in self.f1_scores.values():
            for value in per_task.values():
                if value is not None and not 0.0 <= value <= 1.0:
                    raise ValueError("F1 out of [0, 1]")
        for stats in self.presence.values():
            for ci in (stats.sensitivity_ci, stats.specificity_ci):
                if ci is not None and ci[0] > ci[1]:
                    raise ValueError("CI lower bound exceeds upper bound")

    def to_json_dict(self) -> dict:
        def cell(v):
            return "NA" if v is None else v

        out: dict = {
            "n_reports": self.n_reports,
            "f1": {
                f.value: {t.value: cell(v) for t, v in per.items()}
                for f, per in self.f1_scores.items()
            },
            "task_means": {t.value: cell(v) for t, v in self.task_means.items()},
        }
        if self.presence:
            out["presence"] = {
                f.value: {
                    "sensitivity": cell(s.sensitivity),
                    "specificity": cell(s.specificity),
                    **(
                        {"sensitivity_ci": list(s.sensitivity_ci)}
                        if s.sensitivity_ci
                        else {}
                    ),
                    **(
                        {"specificity_ci": list(s.specificity_ci)}
                        if s.specificity_ci
                        else {}
                    ),
                }
                for f, s in self.presence.items()
            }
        if self.auc_value is not None:
            out["auc"] = self.auc_value
            if self.auc_ci is not None:
                out["auc_ci"] = list(self.auc_ci)
        return out


def _paired_labels(
    predictions: Mapping[str, ReportLabels],
    references: Mapping[str, ReportLabels],
) -> list[tuple[ReportLabels, ReportLabels]]:
    if set(predictions) != set(references):
        missing = set(references) ^ set(predictions)
        sample = sorted(missing)[:3]
        raise ValueError(
            f"prediction and reference id sets differ ({len(missing)} ids, e.g. {sample})"
        )
    ids = sorted(predictions)
    return [(predictions[i], references[i]) for i in ids]


def _scored_tasks(finding: Finding) -> tuple[Task, ...]:
    return (Task.MENTION,) if finding.is_no_finding else TASKS


def evaluate_three_tasks(
    predictions: Mapping[str, ReportLabels],
    references: Mapping[str, ReportLabels],
) -> MetricReport:
    """Pooled per-finding F1 on the three tasks, plus per-task means."""
    pairs = _paired_labels(predictions, references)
    f1_scores: dict[Finding, dict[Task, float | None]] = {}
    for finding in FINDINGS:
        per_task: dict[Task, float | None] = {}
        for task in _scored_tasks(finding):
            counts = confusion(
                [binarize_task(p[finding], task) for p, _ in pairs],
                [binarize_task(r[finding], task) for _, r in pairs],
            )
            per_task[task] = f1(counts)
        f1_scores[finding] = per_task
    task_means: dict[Task, float | None] = {}
    for task in TASKS:
        values = [
            per[task]
            for per in f1_scores.values()
            if task in per and per[task] is not None
        ]
        task_means[task] = float(np.mean(values)) if values else None
    return MetricReport(f1_scores=f1_scores, task_means=task_means, n_reports=len(pairs))


def selection_metric(report: MetricReport) -> float:
    """Mean of the defined task means; 0.0 when all three are undefined."""
    values = [m for m in report.task_means.values() if m is not None]
    return float(np.mean(values)) if values else 0.0


def sensitivity_specificity(
    predictions: Mapping[str, ReportLabels],
    references: Mapping[str, ReportLabels],
    finding: Finding,
) -> tuple[float | None, float | None]:
    """Presence-level sensitivity and specificity; None on a zero denominator."""
    pairs = _paired_labels(predictions, references)
    counts = confusion(
        [binarize_presence(p[finding]) for p, _ in pairs],
        [binarize_presence(r[finding]) for _, r in pairs],
    )
    sens = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else None
    spec = counts.tn / (counts.tn + counts.fp) if counts.tn + counts.fp else None
    return sens, spec


def evaluate_labels(
    predictions: Mapping[str, ReportLabels],
    references: Mapping[str, ReportLabels],
    bootstrap: int = 0,
    seed: int = 0,
) -> MetricReport:
    """Full report: task F1s plus presence metrics, optionally with CIs.

    CIs are percentile bootstrap over reports; each finding/statistic pair
    uses an independent, deterministic seed stream derived from ``seed``.
    """
    base = evaluate_three_tasks(predictions, references)
    ids = sorted(predictions)
    presence: dict[Finding, PresenceStats] = {}
    for f_idx, finding in enumerate(FINDINGS):
        sens, spec = sensitivity_specificity(predictions, references, finding)
        sens_ci = spec_ci = None
        if bootstrap > 0:
            items = np.array(
                [
                    (
                        binarize_presence(predictions[i][finding]),
                        binarize_presence(references[i][finding]),
                    )
                    for i in ids
                ],
                dtype=bool,
            )

            def _sens(sample: np.ndarray) -> float | None:
                pos = sample[:, 1]
                if not pos.any():
                    return None
                return float((sample[:, 0] & pos).sum() / pos.sum())

            def _spec(sample: np.ndarray) -> float | None:
                neg = ~sample[:, 1]
                if not neg.any():
                    return None
                return float((~sample[:, 0] & neg).sum() / neg.sum())

            if sens is not None:
                sens_ci = bootstrap_ci(
                    items, _sens, n_resamples=bootstrap,
                    seed=_derive_seed(seed, f_idx, 0),
                )
            if spec is not None:
                spec_ci = bootstrap_ci(
                    items, _spec, n_resamples=bootstrap,
                    seed=_derive_seed(seed, f_idx, 1),
                )
        presence[finding] = PresenceStats(sens, spec, sens_ci, spec_ci)
    return MetricReport(
        f1_scores=base.f1_scores,
        task_means=base.task_means,
        n_reports=base.n_reports,
        presence=presence,
    )


# ---------------------------------------------------------------------------
# Rank statistics and the bootstrap
# ---------------------------------------------------------------------------


def auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Mann-Whitney AUC with ties counted 1/2.

    Computed from fractional ranks, which matches exhaustive pair counting
    exactly (both numerators are half-integers).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d sequences")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(ranks[labels].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


class BootstrapError(RuntimeError):
    """Raised when too many resamples leave the statistic undefined."""


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def bootstrap_ci(
    items,
    statistic: Callable,
    n_resamples: int = 10_000,
    level: float = 0.95,
    seed: int = 0,
    max_discard_fraction: float = 0.10,
) -> tuple[float, float]:
    """Percentile bootstrap CI over per-item contributions.

    Resample ``i`` draws its indices from a generator seeded by (seed, i), so
    results do not depend on evaluation order.  Resamples on which the
    statistic is undefined (None or NaN) are discarded; more than 10%
    discarded is an error.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if n_resamples < 1:
        raise ValueError("need at least one resample")
    if isinstance(items, np.ndarray):
        data = items
    else:
        data = np.asarray(items)
        if data.dtype == object:
            data = list(items)
    n = len(data)
    if n < 1:
        raise ValueError("need at least one item")
    values = []
    discarded = 0
    is_array = isinstance(data, np.ndarray)
    for i in range(n_resamples):
        rng = np.random.default_rng([seed, i])
        idx = rng.integers(0, n, size=n)
        sample = data[idx] if is_array else [data[j] for j in idx]
        value = statistic(sample)
        if value is None or (isinstance(value, float) and np.isnan(value)):
            discarded += 1
            continue
        values.append(float(value))
    if discarded > max_discard_fraction * n_resamples:
        raise BootstrapError(
            f"{discarded}/{n_resamples} resamples left the statistic undefined"
        )
    if not values:
        raise BootstrapError("all resamples left the statistic undefined")
    alpha = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(np.asarray(values), [alpha, 100.0 - alpha])
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# Plain-text rendering
# ---------------------------------------------------------------------------


def _fmt(value: float | None, scored: bool) -> str:
    if not scored:
        return "-"
    if value is None:
        return "N/A"
    return f"{value:.3f}"


def render_f1_table(report: MetricReport) -> str:
    header = f"{'Finding':<28}{'Mention':>10}{'Negation':>10}{'Uncertainty':>13}"
    lines = [header, "-" * len(header)]
    for finding in FINDINGS:
        per = report.f1_scores.get(finding, {})
        cells = [
            _fmt(per.get(task), task in per)
            for task in TASKS
        ]
        lines.append(
            f"{finding.value:<28}{cells[0]:>10}{cells[1]:>10}{cells[2]:>13}"
        )
    means = [_fmt(report.task_means.get(task), True) for task in TASKS]
    lines.append("-" * len(header))
    lines.append(f"{'Mean':<28}{means[0]:>10}{means[1]:>10}{means[2]:>13}")
    return "\n".join(lines)


def render_presence_table(report: MetricReport) -> str:
    if not report.presence:
        return ""
    header = f"{'Finding':<28}{'Sensitivity':>24}{'Specificity':>24}"
    lines = [header, "-" * len(header)]

    def cell(value: float | None, ci: tuple[float, float] | None) -> str:
        if value is None:
            return "N/A"
        text = f"{value:.3f}"
        if ci is not None:
            text += f" [{ci[0]:.3f}, {ci[1]:.3f}]"
        return text

    for finding in FINDINGS:
        stats = report.presence.get(finding)
        if stats is None:
            continue
        lines.append(
            f"{finding.value:<28}"
            f"{cell(stats.sensitivity, stats.sensitivity_ci):>24}"
            f"{cell(stats.specificity, stats.specificity_ci):>24}"
        )
    return "\n".join(lines)
