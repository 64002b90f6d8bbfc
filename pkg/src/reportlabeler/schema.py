"""Core label vocabulary and report records.

Fourteen thoracic findings are tracked, named and ordered like the CheXpert
label set.  Every report carries one label per finding; "blank" means the
finding is not mentioned at all and is a real value, not a missing one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping

__all__ = [
    "Finding",
    "LabelValue",
    "ReportLabels",
    "Source",
    "Report",
    "DatasetSplit",
    "validate_labels",
    "labels_to_record",
    "labels_from_record",
    "report_to_record",
    "report_from_record",
    "NO_FINDING_VALUES",
]


class Finding(Enum):
    """The 14 findings, in canonical (alphabetical) order."""

    ATELECTASIS = "Atelectasis"
    CARDIOMEGALY = "Cardiomegaly"
    CONSOLIDATION = "Consolidation"
    EDEMA = "Edema"
    ENLARGED_CARDIOMEDIASTINUM = "EnlargedCardiomediastinum"
    FRACTURE = "Fracture"
    LUNG_LESION = "LungLesion"
    LUNG_OPACITY = "LungOpacity"
    NO_FINDING = "NoFinding"
    PLEURAL_EFFUSION = "PleuralEffusion"
    PLEURAL_OTHER = "PleuralOther"
    PNEUMONIA = "Pneumonia"
    PNEUMOTHORAX = "Pneumothorax"
    SUPPORT_DEVICES = "SupportDevices"

    @property
    def is_no_finding(self) -> bool:
        return self is Finding.NO_FINDING


FINDINGS: tuple[Finding, ...] = tuple(Finding)
FINDING_INDEX: dict[Finding, int] = {f: i for i, f in enumerate(FINDINGS)}
_FINDING_BY_NAME: dict[str, Finding] = {f.value: f for f in FINDINGS}


class LabelValue(Enum):
    BLANK = "blank"
    POSITIVE = "positive"
    NEGATIVE = "negative"
    UNCERTAIN = "uncertain"


_LABEL_BY_NAME: dict[str, LabelValue] = {v.value: v for v in LabelValue}

# The no-finding head only ever predicts blank or positive; a report cannot
# "negate" or hedge the absence of all findings.
NO_FINDING_VALUES: frozenset[LabelValue] = frozenset(
    {LabelValue.BLANK, LabelValue.POSITIVE}
)


def validate_labels(labels: Mapping[Finding, LabelValue]) -> str | None:
    """Check a finding -> value map; return None if valid, else a message.

    The message names the violated finding.  Checked invariants: exactly one
    value per finding (total map, no strays) and NoFinding restricted to
    blank/positive.
    """
    for finding in FINDINGS:
        if finding not in labels:
            return f"missing label for finding {finding.value}"
    for key, value in labels.items():
        if not isinstance(key, Finding):
            return f"unknown finding {key!r}"
        if not isinstance(value, LabelValue):
            return f"invalid value {value!r} for finding {key.value}"
    nf = labels[Finding.NO_FINDING]
    if nf not in NO_FINDING_VALUES:
        return f"finding {Finding.NO_FINDING.value} admits only blank or positive, got {nf.value}"
    return None


@dataclass(frozen=True)
class ReportLabels:
    """Immutable total map Finding -> LabelValue (14 entries)."""

    values: tuple[LabelValue, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(FINDINGS):
            raise ValueError(
                f"expected {len(FINDINGS)} label values, got {len(self.values)}"
            )
        nf = self.values[FINDING_INDEX[Finding.NO_FINDING]]
        if nf not in NO_FINDING_VALUES:
            raise ValueError(
                f"NoFinding admits only blank or positive, got {nf.value}"
            )

    @classmethod
    def from_mapping(cls, mapping: Mapping[Finding, LabelValue]) -> "ReportLabels":
        problem = _totality_problem(mapping)
        if problem:
            raise ValueError(problem)
        return cls(tuple(mapping[f] for f in FINDINGS))

    @classmethod
    def all_blank(cls) -> "ReportLabels":
        return cls(tuple(LabelValue.BLANK for _ in FINDINGS))

    def __getitem__(self, finding: Finding) -> LabelValue:
        return self.values[FINDING_INDEX[finding]]

    def __iter__(self) -> Iterator[Finding]:
        return iter(FINDINGS)

    def __contains__(self, finding: object) -> bool:
        return isinstance(finding, Finding)

    def __len__(self) -> int:
        return len(FINDINGS)

    def items(self) -> Iterator[tuple[Finding, LabelValue]]:
        return iter(zip(FINDINGS, self.values))

    def keys(self) -> tuple[Finding, ...]:
        return FINDINGS

    def get(self, finding: Finding, default=None):
        if isinstance(finding, Finding):
            return self.values[FINDING_INDEX[finding]]
        return default

    def replace(self, finding: Finding, value: LabelValue) -> "ReportLabels":
        vals = list(self.values)
        vals[FINDING_INDEX[finding]] = value
        return ReportLabels(tuple(vals))


def _totality_problem(mapping: Mapping[Finding, LabelValue]) -> str | None:
    for finding in FINDINGS:
        if finding not in mapping:
            return f"missing label for finding {finding.value}"
    if len(mapping) != len(FINDINGS):
        strays = [k for k in mapping if k not in FINDING_INDEX]
        return f"unexpected label keys: {strays!r}"
    return None


class Source(Enum):
    MANUAL = "manual"
    RULE = "rule"
    MODEL = "model"
    SYNTHETIC = "synthetic"


_SOURCE_BY_NAME: dict[str, Source] = {s.value: s for s in Source}


@dataclass(frozen=True)
class Report:
    """One free-text report, optionally labeled."""

    id: str
    text: str
    source: Source
    labels: ReportLabels | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("report id must be non-empty")
        if not self.text:
            raise ValueError(f"report {self.id}: text must be non-empty")


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train / validation / test id lists."""

    train_ids: tuple[str, ...]
    validation_ids: tuple[str, ...]
    test_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for name, ids in (
            ("train", self.train_ids),
            ("validation", self.validation_ids),
            ("test", self.test_ids),
        ):
            for rid in ids:
                if rid in seen:
                    raise ValueError(f"id {rid!r} appears in more than one split ({name})")
                seen.add(rid)


# ---------------------------------------------------------------------------
# JSONL record codec
# ---------------------------------------------------------------------------


def labels_to_record(labels: ReportLabels) -> dict[str, str]:
    return {f.value: v.value for f, v in labels.items()}


def labels_from_record(record: Mapping[str, str]) -> ReportLabels:
    values: dict[Finding, LabelValue] = {}
    for name, raw in record.items():
        finding = _FINDING_BY_NAME.get(name)
        if finding is None:
            raise ValueError(f"unknown finding name {name!r}")
        value = _LABEL_BY_NAME.get(raw)
        if value is None:
            raise ValueError(f"unknown label value {raw!r} for finding {name}")
        values[finding] = value
    problem = _totality_problem(values)
    if problem:
        raise ValueError(problem)
    labels = ReportLabels.from_mapping(values)
    verdict = validate_labels(dict(labels.items()))
    if verdict:
        raise ValueError(verdict)
    return labels


def report_to_record(report: Report) -> dict:
    record: dict = {"id": report.id, "text": report.text}
    if report.labels is not None:
        record["labels"] = labels_to_record(report.labels)
    record["source"] = report.source.value
    return record


def report_from_record(record: Mapping) -> Report:
    for key in ("id", "text", "source"):
        if key not in record:
            raise ValueError(f"record is missing required key {key!r}")
    raw_source = record["source"]
    source = _SOURCE_BY_NAME.get(raw_source)
    if source is None:
        raise ValueError(f"unknown source {raw_source!r}")
    labels = None
    if "labels" in record and record["labels"] is not None:
        labels = labels_from_record(record["labels"])
    rid = record["id"]
    text = record["text"]
    if not isinstance(rid, str) or not isinstance(text, str):
        raise ValueError("id and text must be strings")
    return Report(id=rid, text=text, source=source, labels=labels)


def report_to_json(report: Report) -> str:
    return json.dumps(report_to_record(report), ensure_ascii=False)


def report_from_json(line: str) -> Report:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise ValueError("record must be a JSON object")
    return report_from_record(record)
