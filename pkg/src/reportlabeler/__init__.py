"""Label extraction toolkit for German free-text thoracic radiology reports.

Pieces: a rule-based weak labeler, a trainable bag-of-hashed-ngrams labeler
with per-finding heads, an evaluation protocol (three binary tasks per
finding), and a synthetic corpus generator used for benchmarks and tests.
"""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
CHECKPOINT_VERSION = 1

from .schema import (  # noqa: E402,F401
    DatasetSplit,
    Finding,
    LabelValue,
    Report,
    ReportLabels,
    Source,
    validate_labels,
)
