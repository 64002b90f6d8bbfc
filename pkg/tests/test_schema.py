import json

import pytest
from hypothesis import given
import hypothesis.strategies as st

from reportlabeler.schema import (
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

CANONICAL = [
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "EnlargedCardiomediastinum",
    "Fracture",
    "LungLesion",
    "LungOpacity",
    "NoFinding",
    "PleuralEffusion",
    "PleuralOther",
    "Pneumonia",
    "Pneumothorax",
    "SupportDevices",
]


def all_blank():
    return {f: LabelValue.BLANK for f in FINDINGS}


def test_finding_cardinality_and_order():
    assert len(FINDINGS) == 14
    assert [f.value for f in FINDINGS] == CANONICAL


def test_no_finding_predicate():
    assert Finding.NO_FINDING.is_no_finding
    assert sum(1 for f in FINDINGS if f.is_no_finding) == 1


def test_label_value_members():
    assert {v.value for v in LabelValue} == {"blank", "positive", "negative", "uncertain"}


def test_validate_all_blank_valid():
    assert validate_labels(all_blank()) is None


def test_validate_no_finding_negative_names_finding():
    labels = all_blank()
    labels[Finding.NO_FINDING] = LabelValue.NEGATIVE
    verdict = validate_labels(labels)
    assert verdict is not None and "NoFinding" in verdict


def test_validate_pneumothorax_uncertain_valid():
    labels = all_blank()
    labels[Finding.PNEUMOTHORAX] = LabelValue.UNCERTAIN
    assert validate_labels(labels) is None


def test_validate_missing_finding():
    labels = all_blank()
    del labels[Finding.EDEMA]
    assert validate_labels(labels) is not None


def test_report_labels_totality():
    labels = ReportLabels.from_mapping(all_blank())
    assert len(labels.values) == 14
    assert labels[Finding.PNEUMONIA] is LabelValue.BLANK
    with pytest.raises(ValueError):
        ReportLabels(values=(LabelValue.BLANK,) * 13)


def test_report_labels_no_finding_restriction():
    bad = all_blank()
    bad[Finding.NO_FINDING] = LabelValue.UNCERTAIN
    with pytest.raises(ValueError):
        ReportLabels.from_mapping(bad)


def test_report_rejects_empty_text_and_id():
    with pytest.raises(ValueError):
        Report(id="r1", text="", source=Source.MANUAL)
    with pytest.raises(ValueError):
        Report(id="", text="Befund.", source=Source.MANUAL)


def test_dataset_split_disjoint():
    with pytest.raises(ValueError):
        DatasetSplit(train_ids=("a", "b"), validation_ids=("b",), test_ids=())
    split = DatasetSplit(train_ids=("a",), validation_ids=("b",), test_ids=("c",))
    assert split.train_ids == ("a",)


def label_values_for(finding):
    if finding.is_no_finding:
        return st.sampled_from([LabelValue.BLANK, LabelValue.POSITIVE])
    return st.sampled_from(list(LabelValue))


report_labels_st = st.builds(
    ReportLabels,
    st.tuples(*[label_values_for(f) for f in FINDINGS]),
)


@given(report_labels_st, st.booleans())
def test_jsonl_round_trip(labels, with_labels):
    report = Report(
        id="r-1",
        text="Unauffälliger Befund.",
        source=Source.SYNTHETIC,
        labels=labels if with_labels else None,
    )
    again = report_from_json(report_to_json(report))
    assert again == report


def test_jsonl_record_shape():
    labels = all_blank()
    labels[Finding.PLEURAL_EFFUSION] = LabelValue.POSITIVE
    report = Report(
        id="x",
        text="Pleuraerguss links.",
        source=Source.RULE,
        labels=ReportLabels.from_mapping(labels),
    )
    record = json.loads(report_to_json(report))
    assert record["id"] == "x"
    assert record["source"] == "rule"
    assert record["labels"]["PleuralEffusion"] == "positive"
    assert record["labels"]["NoFinding"] == "blank"


def test_jsonl_unknown_value_rejected():
    line = json.dumps(
        {
            "id": "x",
            "text": "t",
            "source": "manual",
            "labels": {f.value: "blank" for f in FINDINGS} | {"Edema": "maybe"},
        }
    )
    with pytest.raises(ValueError):
        report_from_json(line)


def test_jsonl_unknown_finding_rejected():
    line = json.dumps(
        {"id": "x", "text": "t", "source": "manual", "labels": {"Llama": "blank"}}
    )
    with pytest.raises(ValueError):
        report_from_json(line)


def test_jsonl_unknown_source_rejected():
    with pytest.raises(ValueError):
        report_from_json(json.dumps({"id": "x", "text": "t", "source": "oracle"}))
