"""Synthetic German report corpus with labels known by construction.

Reports are assembled from single-finding template sentences plus neutral
fillers.  Ground truth comes from the declared polarity of each template,
never from running the rule labeler, so the corpus can serve as an oracle
for it.  A vocabulary-mismatch rate controls how often a sentence is drawn
from out-of-lexicon paraphrases whose truth is still known; at rate 0 the
default rule labeler reproduces the ground truth exactly.
"""

from __future__ import annotations

import csv
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .schema import (
    FINDINGS,
    DatasetSplit,
    Finding,
    LabelValue,
    Report,
    ReportLabels,
    Source,
    report_from_json,
    report_to_json,
    validate_labels,
)
from .rules import Lexicon, default_lexicon, label_report
from .textproc import DEFAULT_NORMALIZER, NormalizerConfig, split_sentences, tokenize

__all__ = [
    "TemplateBank",
    "GeneratorConfig",
    "LabeledDataset",
    "DEFAULT_PRIORS",
    "default_template_bank",
    "load_template_bank",
    "verify_template_bank",
    "generate",
    "select_test_split",
    "fraction_splits",
    "split_train_validation",
    "read_dataset",
    "write_dataset",
    "write_label_matrix",
]

_POLARITIES: tuple[LabelValue, ...] = (
    LabelValue.POSITIVE,
    LabelValue.UNCERTAIN,
    LabelValue.NEGATIVE,
)

# Per-finding (positive, uncertain, negative) report counts in a 1013-report
# training pool of the reference corpus; the default priors are these counts
# normalized by the pool size, the remainder being blank.
_PRIOR_COUNTS: dict[Finding, tuple[int, int, int]] = {
    Finding.ATELECTASIS: (220, 54, 2),
    Finding.CARDIOMEGALY: (184, 368, 266),
    Finding.CONSOLIDATION: (205, 45, 627),
    Finding.EDEMA: (297, 9, 521),
    Finding.ENLARGED_CARDIOMEDIASTINUM: (223, 295, 305),
    Finding.FRACTURE: (63, 3, 79),
    Finding.LUNG_LESION: (44, 7, 8),
    Finding.LUNG_OPACITY: (278, 41, 565),
    Finding.NO_FINDING: (1, 0, 0),
    Finding.PLEURAL_EFFUSION: (455, 45, 451),
    Finding.PLEURAL_OTHER: (57, 16, 1),
    Finding.PNEUMONIA: (52, 173, 649),
    Finding.PNEUMOTHORAX: (83, 7, 871),
    Finding.SUPPORT_DEVICES: (590, 1, 107),
}
_PRIOR_POOL = 1013

DEFAULT_PRIORS: dict[Finding, tuple[float, float, float]] = {
    f: tuple(c / _PRIOR_POOL for c in counts) for f, counts in _PRIOR_COUNTS.items()
}

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class TemplateBank:
    """Sentence templates per finding and polarity, plus fillers.

    ``templates[finding][polarity]`` holds in-lexicon sentences; the parallel
    ``paraphrases`` map holds out-of-lexicon rewordings with the same ground
    truth.  Placeholders like ``{side}`` draw from ``slots``.
    """

    templates: Mapping[Finding, Mapping[LabelValue, tuple[str, ...]]]
    paraphrases: Mapping[Finding, Mapping[LabelValue, tuple[str, ...]]]
    slots: Mapping[str, tuple[str, ...]]
    normal: tuple[str, ...]
    normal_paraphrases: tuple[str, ...]
    fillers: tuple[str, ...]

    def __post_init__(self) -> None:
        for finding in FINDINGS:
            if finding.is_no_finding:
                continue
            per = self.templates.get(finding, {})
            for polarity in _POLARITIES:
                if not per.get(polarity):
                    raise ValueError(
                        f"finding {finding.value} has no {polarity.value} templates"
                    )
        if not self.normal:
            raise ValueError("template bank needs normal-report statements")
        if not self.fillers:
            raise ValueError("template bank needs filler sentences")
        for template in self._all_templates():
            for slot in _PLACEHOLDER_RE.findall(template):
                if slot not in self.slots or not self.slots[slot]:
                    raise ValueError(f"template {template!r} uses unknown slot {slot!r}")

    def _all_templates(self) -> Iterable[str]:
        for per in list(self.templates.values()) + list(self.paraphrases.values()):
            for pool in per.values():
                yield from pool
        yield from self.normal
        yield from self.normal_paraphrases
        yield from self.fillers

    def pool(
        self, finding: Finding, polarity: LabelValue, paraphrase: bool
    ) -> tuple[str, ...]:
        source = self.paraphrases if paraphrase else self.templates
        pool = source.get(finding, {}).get(polarity, ())
        if not pool and paraphrase:
            pool = self.templates.get(finding, {}).get(polarity, ())
        if not pool:
            raise ValueError(
                f"template bank has no {polarity.value} templates for {finding.value}"
            )
        return pool

    def render(self, template: str, rng: np.random.Generator) -> str:
        def fill(match: re.Match) -> str:
            values = self.slots[match.group(1)]
            return values[int(rng.integers(0, len(values)))]

        return _PLACEHOLDER_RE.sub(fill, template)

    def expansions(self, template: str) -> list[str]:
        """All slot combinations of one template (for exhaustive checks)."""
        names = _PLACEHOLDER_RE.findall(template)
        if not names:
            return [template]
        out = []
        for combo in product(*(self.slots[n] for n in names)):
            values = iter(combo)
            out.append(_PLACEHOLDER_RE.sub(lambda _m: next(values), template))
        return out


_POLARITY_KEYS = {
    "positive": LabelValue.POSITIVE,
    "uncertain": LabelValue.UNCERTAIN,
    "negative": LabelValue.NEGATIVE,
}

_DATA_DIR = Path(__file__).parent / "data"
_DEFAULT_BANK_PATH = _DATA_DIR / "default_templates.json"
_default_bank_cache: TemplateBank | None = None
_FINDING_BY_NAME = {f.value: f for f in FINDINGS}


def load_template_bank(path: str | Path) -> TemplateBank:
    with open(path, encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed JSON: {exc}") from exc
    templates: dict[Finding, dict[LabelValue, tuple[str, ...]]] = {}
    paraphrases: dict[Finding, dict[LabelValue, tuple[str, ...]]] = {}
    for name, per in raw.get("findings", {}).items():
        finding = _FINDING_BY_NAME.get(name)
        if finding is None:
            raise ValueError(f"{path}: unknown finding {name!r}")
        templates[finding] = {}
        paraphrases[finding] = {}
        for key, polarity in _POLARITY_KEYS.items():
            templates[finding][polarity] = tuple(per.get(key, []))
            paraphrases[finding][polarity] = tuple(per.get(f"{key}_paraphrase", []))
    return TemplateBank(
        templates=templates,
        paraphrases=paraphrases,
        slots={k: tuple(v) for k, v in raw.get("slots", {}).items()},
        normal=tuple(raw.get("normal", [])),
        normal_paraphrases=tuple(raw.get("normal_paraphrase", [])),
        fillers=tuple(raw.get("fillers", [])),
    )


def default_template_bank() -> TemplateBank:
    global _default_bank_cache
    if _default_bank_cache is None:
        _default_bank_cache = load_template_bank(_DEFAULT_BANK_PATH)
    return _default_bank_cache


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    priors: Mapping[Finding, tuple[float, float, float]] = field(
        default_factory=lambda: dict(DEFAULT_PRIORS)
    )
    sentences_min: int = 2
    sentences_max: int = 8
    mismatch_rate: float = 0.0

    def __post_init__(self) -> None:
        if not 1 <= self.sentences_min <= self.sentences_max:
            raise ValueError("need 1 <= sentences_min <= sentences_max")
        if not 0.0 <= self.mismatch_rate <= 1.0:
            raise ValueError("mismatch_rate must be in [0, 1]")
        priors = dict(self.priors)
        for finding in FINDINGS:
            trio = priors.get(finding)
            if trio is None:
                raise ValueError(f"missing prior for {finding.value}")
            trio = tuple(float(x) for x in trio)
            if len(trio) != 3 or min(trio) < 0.0 or sum(trio) > 1.0 + 1e-12:
                raise ValueError(f"bad prior for {finding.value}: {trio}")
            priors[finding] = trio
        nf = priors[Finding.NO_FINDING]
        if nf[1] or nf[2]:
            raise ValueError("NoFinding prior admits only a positive component")
        object.__setattr__(self, "priors", priors)

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "priors": {f.value: list(self.priors[f]) for f in FINDINGS},
            "sentences_min": self.sentences_min,
            "sentences_max": self.sentences_max,
            "mismatch_rate": self.mismatch_rate,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "GeneratorConfig":
        kwargs: dict = {}
        if "seed" in raw:
            kwargs["seed"] = int(raw["seed"])
        if "priors" in raw:
            priors = dict(DEFAULT_PRIORS)
            for name, trio in raw["priors"].items():
                finding = _FINDING_BY_NAME.get(name)
                if finding is None:
                    raise ValueError(f"unknown finding {name!r} in priors")
                priors[finding] = tuple(float(x) for x in trio)
            kwargs["priors"] = priors
        for key in ("sentences_min", "sentences_max"):
            if key in raw:
                kwargs[key] = int(raw[key])
        if "mismatch_rate" in raw:
            kwargs["mismatch_rate"] = float(raw["mismatch_rate"])
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "GeneratorConfig":
        with open(path, encoding="utf-8") as handle:
            try:
                raw = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: generator config must be a JSON object")
        return cls.from_json_dict(raw)


@dataclass(frozen=True)
class LabeledDataset:
    reports: tuple[Report, ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for report in self.reports:
            if report.id in seen:
                raise ValueError(f"duplicate report id {report.id!r}")
            seen.add(report.id)
            if report.labels is not None:
                verdict = validate_labels(dict(report.labels.items()))
                if verdict:
                    raise ValueError(f"report {report.id}: {verdict}")

    def __len__(self) -> int:
        return len(self.reports)

    def ids(self) -> list[str]:
        return [r.id for r in self.reports]

    def by_id(self) -> dict[str, Report]:
        return {r.id: r for r in self.reports}

    def labels_by_id(self) -> dict[str, ReportLabels]:
        out = {}
        for report in self.reports:
            if report.labels is None:
                raise ValueError(f"report {report.id} has no labels")
            out[report.id] = report.labels
        return out


def _aggregate_polarities(polarities: Iterable[LabelValue]) -> LabelValue:
    pols = set(polarities)
    if LabelValue.POSITIVE in pols:
        return LabelValue.POSITIVE
    if LabelValue.UNCERTAIN in pols:
        return LabelValue.UNCERTAIN
    if LabelValue.NEGATIVE in pols:
        return LabelValue.NEGATIVE
    return LabelValue.BLANK


def _generate_one(
    index: int, config: GeneratorConfig, bank: TemplateBank
) -> Report:
    rng = np.random.default_rng([config.seed, index])
    draws = rng.random(len(FINDINGS))
    nf_idx = FINDINGS.index(Finding.NO_FINDING)
    target = int(rng.integers(config.sentences_min, config.sentences_max + 1))
    sentences: list[str] = []
    label_map = {f: LabelValue.BLANK for f in FINDINGS}
    if draws[nf_idx] < config.priors[Finding.NO_FINDING][0]:
        use_para = (
            rng.random() < config.mismatch_rate and bool(bank.normal_paraphrases)
        )
        pool = bank.normal_paraphrases if use_para else bank.normal
        sentences.append(bank.render(pool[int(rng.integers(0, len(pool)))], rng))
        label_map[Finding.NO_FINDING] = LabelValue.POSITIVE
    else:
        for f_idx, finding in enumerate(FINDINGS):
            if finding.is_no_finding:
                continue
            p_pos, p_unc, p_neg = config.priors[finding]
            u = draws[f_idx]
            if u < p_pos:
                polarity = LabelValue.POSITIVE
            elif u < p_pos + p_unc:
                polarity = LabelValue.UNCERTAIN
            elif u < p_pos + p_unc + p_neg:
                polarity = LabelValue.NEGATIVE
            else:
                continue
            use_para = rng.random() < config.mismatch_rate
            pool = bank.pool(finding, polarity, use_para)
            sentences.append(bank.render(pool[int(rng.integers(0, len(pool)))], rng))
            label_map[finding] = _aggregate_polarities([label_map[finding], polarity])
    while len(sentences) < target:
        pool = bank.fillers
        sentences.append(bank.render(pool[int(rng.integers(0, len(pool)))], rng))
    order = rng.permutation(len(sentences))
    text = " ".join(sentences[i] for i in order)
    return Report(
        id=f"synth-s{config.seed}-{index:06d}",
        text=text,
        source=Source.SYNTHETIC,
        labels=ReportLabels.from_mapping(label_map),
    )


def generate(
    config: GeneratorConfig, n: int, bank: TemplateBank | None = None
) -> LabeledDataset:
    """Generate ``n`` labeled reports; report ``i`` depends only on (seed, i)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    bank = bank or default_template_bank()
    reports = tuple(_generate_one(i, config, bank) for i in range(n))
    return LabeledDataset(
        reports=reports,
        provenance=(
            f"synthetic:seed={config.seed},n={n},mismatch={config.mismatch_rate}"
        ),
    )


def verify_template_bank(
    bank: TemplateBank,
    lexicon: Lexicon | None = None,
    config: NormalizerConfig = DEFAULT_NORMALIZER,
) -> list[str]:
    """Check the in-lexicon consistency invariant; return violation messages.

    Every slot expansion of every non-paraphrase template must come back from
    the rule labeler with exactly its declared polarity for its finding and
    blank for everything else; templates must also stay single sentences that
    do not absorb a following sentence.
    """
    lexicon = lexicon or default_lexicon()
    problems: list[str] = []

    def check(sentence: str, expected: Mapping[Finding, LabelValue], what: str) -> None:
        tokens = tokenize(sentence)
        probe = sentence + " Folgt."
        n_sent = len(split_sentences(tokenize(probe), config, probe))
        if len(split_sentences(tokens, config, sentence)) != 1 or n_sent != 2:
            problems.append(f"{what}: not a clean single sentence: {sentence!r}")
        labels = label_report(sentence, lexicon, config)
        for finding in FINDINGS:
            want = expected.get(finding, LabelValue.BLANK)
            got = labels[finding]
            if got is not want:
                problems.append(
                    f"{what}: {finding.value} is {got.value}, expected {want.value}"
                    f" in {sentence!r}"
                )

    for finding in FINDINGS:
        if finding.is_no_finding:
            continue
        for polarity in _POLARITIES:
            for template in bank.templates.get(finding, {}).get(polarity, ()):
                for sentence in bank.expansions(template):
                    check(
                        sentence,
                        {finding: polarity},
                        f"{finding.value}/{polarity.value}",
                    )
    for statement in bank.normal:
        for sentence in bank.expansions(statement):
            check(sentence, {Finding.NO_FINDING: LabelValue.POSITIVE}, "normal")
    for filler in bank.fillers:
        for sentence in bank.expansions(filler):
            check(sentence, {}, "filler")
    return problems


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def select_test_split(dataset: LabeledDataset, min_per_class: int = 5) -> DatasetSplit:
    """Greedy small-data test selection.

    Findings are visited in ascending order of mention count (non-blank
    label).  Each finding pulls reports that mention it into the test set
    until it reaches ``min_per_class`` test mentions, preferring reports with
    more non-blank labels (ties by id); findings with fewer than
    ``min_per_class`` mentions overall contribute ceil(half) of theirs.  The
    remainder is split 4:1 into train and validation in dataset order.
    """
    if not dataset.reports:
        raise ValueError("cannot split an empty dataset")
    labels = dataset.labels_by_id()

    def mentions(rid: str, finding: Finding) -> bool:
        return labels[rid][finding] is not LabelValue.BLANK

    def non_blank_count(rid: str) -> int:
        return sum(1 for v in labels[rid].values if v is not LabelValue.BLANK)

    counts = {
        f: sum(1 for rid in labels if mentions(rid, f)) for f in FINDINGS
    }
    test: set[str] = set()
    order = sorted(FINDINGS, key=lambda f: (counts[f], FINDINGS.index(f)))
    for finding in order:
        total = counts[finding]
        if total == 0:
            continue
        target = min_per_class if total >= min_per_class else math.ceil(total / 2)
        have = sum(1 for rid in test if mentions(rid, finding))
        if have >= target:
            continue
        candidates = sorted(
            (rid for rid in labels if mentions(rid, finding) and rid not in test),
            key=lambda rid: (-non_blank_count(rid), rid),
        )
        for rid in candidates:
            if have >= target:
                break
            test.add(rid)
            have += 1
    if not test:
        warnings.warn("no finding is mentioned anywhere; test split is empty")
    remainder = [rid for rid in dataset.ids() if rid not in test]
    n_val = int(math.floor(len(remainder) / 5 + 0.5))
    train = remainder[: len(remainder) - n_val]
    validation = remainder[len(remainder) - n_val :]
    return DatasetSplit(
        train_ids=tuple(train),
        validation_ids=tuple(validation),
        test_ids=tuple(sorted(test)),
    )


def fraction_splits(
    train_ids: Sequence[str],
    validation_ids: Sequence[str],
    seed: int,
) -> dict[int, tuple[tuple[str, ...], tuple[str, ...]]]:
    """Nested 25/50/75/100% cuts of the train+validation pool.

    Both lists are shuffled once; each cut takes prefixes, so the splits are
    nested.  Sizes come from quartering the combined pool (ceil) and carving
    a fifth of each quarter total (rounded, half up) as validation, capped by
    what is available; 100% is the identity.  On an 810/203 pool this yields
    (203, 51), (406, 101), (608, 152), (810, 203).
    """
    rng = np.random.default_rng([seed, 0xF5AC])
    train = [train_ids[i] for i in rng.permutation(len(train_ids))]
    val = [validation_ids[i] for i in rng.permutation(len(validation_ids))]
    pool = len(train) + len(val)
    out: dict[int, tuple[tuple[str, ...], tuple[str, ...]]] = {}
    prev_t = prev_v = 0
    for k, frac in enumerate((25, 50, 75, 100), start=1):
        if frac == 100:
            n_t, n_v = len(train), len(val)
        else:
            total = math.ceil(k * pool / 4)
            n_v = min(len(val), int(math.floor(total / 5 + 0.5)))
            n_t = min(len(train), total - n_v)
        n_t, n_v = max(n_t, prev_t), max(n_v, prev_v)
        out[frac] = (tuple(train[:n_t]), tuple(val[:n_v]))
        prev_t, prev_v = n_t, n_v
    return out


def split_train_validation(
    ids: Sequence[str], seed: int, validation_cap: int | None = None
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Seeded 4:1 train/validation split, validation optionally capped."""
    if not ids:
        raise ValueError("cannot split an empty id list")
    rng = np.random.default_rng([seed, 0x5711])
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    n_val = int(math.floor(len(ids) / 5 + 0.5))
    if validation_cap is not None:
        n_val = min(n_val, validation_cap)
    n_val = min(n_val, len(ids) - 1) if len(ids) > 1 else 0
    return tuple(shuffled[n_val:]), tuple(shuffled[:n_val])


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------


def read_dataset(path: str | Path, provenance: str | None = None) -> LabeledDataset:
    """Read a JSONL dataset; errors name the offending 1-based line."""
    reports: list[Report] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                reports.append(report_from_json(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return LabeledDataset(
        reports=tuple(reports),
        provenance=provenance if provenance is not None else str(path),
    )


def write_dataset(dataset: LabeledDataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for report in dataset.reports:
            handle.write(report_to_json(report) + "\n")


def write_label_matrix(dataset: LabeledDataset, path: str | Path) -> None:
    """CSV label matrix: id column plus one column per finding; blank is ''."""
    labels = dataset.labels_by_id()
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id"] + [f.value for f in FINDINGS])
        for report in dataset.reports:
            row = [report.id]
            for finding in FINDINGS:
                value = labels[report.id][finding]
                row.append("" if value is LabelValue.BLANK else value.value)
            writer.writerow(row)
