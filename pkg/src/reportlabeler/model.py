"""Multi-head linear classifier over hashed n-gram features.

One shared ReLU projection feeds 14 softmax heads, one per finding.  Heads
have four classes (blank, positive, negative, uncertain) except NoFinding,
which only distinguishes blank from positive.  Blank is class index 0 and is
trained like any other class.

All math is float64 numpy; gradients are analytic (checked against finite
differences in the test suite).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy import sparse

from .schema import FINDINGS, Finding, LabelValue, ReportLabels, validate_labels

__all__ = [
    "CLASS_ORDER",
    "HEAD_SIZES",
    "ModelParams",
    "forward",
    "loss",
    "grad",
    "loss_and_grad",
    "predict",
    "labels_to_targets",
    "targets_to_labels",
]

CLASS_ORDER: tuple[LabelValue, ...] = (
    LabelValue.BLANK,
    LabelValue.POSITIVE,
    LabelValue.NEGATIVE,
    LabelValue.UNCERTAIN,
)
_CLASS_INDEX = {v: i for i, v in enumerate(CLASS_ORDER)}
HEAD_SIZES: tuple[int, ...] = tuple(2 if f.is_no_finding else 4 for f in FINDINGS)
N_HEADS = len(FINDINGS)


@dataclass
class ModelParams:
    """Shared projection plus one linear head per finding.

    ``w_shared`` is stored feature-major, shape (dim, hidden), so that sparse
    feature rows multiply into it directly.  Head weights are (classes, hidden).
    """

    w_shared: np.ndarray
    b_shared: np.ndarray
    head_weights: list[np.ndarray]
    head_biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if self.w_shared.ndim != 2:
            raise ValueError("w_shared must be 2-d (dim, hidden)")
        hidden = self.w_shared.shape[1]
        if self.b_shared.shape != (hidden,):
            raise ValueError("b_shared shape mismatch")
        if len(self.head_weights) != N_HEADS or len(self.head_biases) != N_HEADS:
            raise ValueError(f"expected {N_HEADS} heads")
        for idx, (w, b) in enumerate(zip(self.head_weights, self.head_biases)):
            c = HEAD_SIZES[idx]
            if w.shape != (c, hidden):
                raise ValueError(
                    f"head {FINDINGS[idx].value}: weight shape {w.shape}, "
                    f"expected {(c, hidden)}"
                )
            if b.shape != (c,):
                raise ValueError(f"head {FINDINGS[idx].value}: bias shape mismatch")

    @property
    def dim(self) -> int:
        return self.w_shared.shape[0]

    @property
    def hidden(self) -> int:
        return self.w_shared.shape[1]

    @classmethod
    def zeros(cls, dim: int, hidden: int) -> "ModelParams":
        return cls(
            w_shared=np.zeros((dim, hidden)),
            b_shared=np.zeros(hidden),
            head_weights=[np.zeros((c, hidden)) for c in HEAD_SIZES],
            head_biases=[np.zeros(c) for c in HEAD_SIZES],
        )

    @classmethod
    def random_init(cls, dim: int, hidden: int, seed: int) -> "ModelParams":
        # Features are L2-normalized, so unit-variance shared weights give
        # O(1) pre-activations; heads are scaled down by sqrt(hidden).
        rng = np.random.default_rng([seed, 0x1A17])
        return cls(
            w_shared=rng.normal(0.0, 1.0, size=(dim, hidden)),
            b_shared=np.zeros(hidden),
            head_weights=[
                rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(c, hidden))
                for c in HEAD_SIZES
            ],
            head_biases=[np.zeros(c) for c in HEAD_SIZES],
        )

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "w_shared", self.w_shared
        yield "b_shared", self.b_shared
        for finding, w, b in zip(FINDINGS, self.head_weights, self.head_biases):
            yield f"head_w_{finding.value}", w
            yield f"head_b_{finding.value}", b

    def copy(self) -> "ModelParams":
        return ModelParams(
            w_shared=self.w_shared.copy(),
            b_shared=self.b_shared.copy(),
            head_weights=[w.copy() for w in self.head_weights],
            head_biases=[b.copy() for b in self.head_biases],
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            w_shared=np.zeros_like(self.w_shared),
            b_shared=np.zeros_like(self.b_shared),
            head_weights=[np.zeros_like(w) for w in self.head_weights],
            head_biases=[np.zeros_like(b) for b in self.head_biases],
        )

    def equals(self, other: "ModelParams") -> bool:
        return all(
            a.shape == b.shape and np.array_equal(a, b)
            for (_, a), (_, b) in zip(self.named_arrays(), other.named_arrays())
        )


def _as_matrix(features) -> sparse.csr_matrix:
    if sparse.issparse(features):
        return features.tocsr()
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return sparse.csr_matrix(arr)


def _hidden(params: ModelParams, X: sparse.csr_matrix):
    if X.shape[1] != params.dim:
        raise ValueError(
            f"feature dimension {X.shape[1]} does not match model dim {params.dim}"
        )
    z = X @ params.w_shared + params.b_shared
    return z, np.maximum(z, 0.0)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: ModelParams, features) -> list[np.ndarray]:
    """Per-head class probability matrices, each (batch, classes)."""
    X = _as_matrix(features)
    _, h = _hidden(params, X)
    out = []
    for w, b in zip(params.head_weights, params.head_biases):
        out.append(_softmax(h @ w.T + b))
    return out


def labels_to_targets(labels: ReportLabels) -> np.ndarray:
    verdict = validate_labels(dict(labels.items()))
    if verdict:
        raise ValueError(verdict)
    return np.array([_CLASS_INDEX[v] for v in labels.values], dtype=np.int64)


def targets_to_labels(row: Sequence[int]) -> ReportLabels:
    return ReportLabels(tuple(CLASS_ORDER[int(i)] for i in row))


def _check_targets(targets: np.ndarray) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.int64)
    if targets.ndim == 1:
        targets = targets[None, :]
    if targets.shape[1] != N_HEADS:
        raise ValueError(f"targets must have {N_HEADS} columns")
    for idx, c in enumerate(HEAD_SIZES):
        col = targets[:, idx]
        if col.min(initial=0) < 0 or col.max(initial=0) >= c:
            raise ValueError(
                f"invalid target class for head {FINDINGS[idx].value}: "
                f"allowed range [0, {c})"
            )
    return targets


def _head_scale(batch: int, aggregation: str) -> float:
    if aggregation == "mean":
        return 1.0 / (batch * N_HEADS)
    if aggregation == "sum":
        return 1.0 / batch
    raise ValueError(f"unknown head aggregation {aggregation!r}")


def loss(params: ModelParams, features, targets, aggregation: str = "mean") -> float:
    """Mean over the batch of the aggregated per-head cross-entropies."""
    X = _as_matrix(features)
    targets = _check_targets(targets)
    if X.shape[0] != targets.shape[0]:
        raise ValueError("features and targets disagree on batch size")
    scale = _head_scale(X.shape[0], aggregation)
    probs = forward(params, X)
    total = 0.0
    rows = np.arange(targets.shape[0])
    for h_idx, p in enumerate(probs):
        picked = p[rows, targets[:, h_idx]]
        total += float(-np.log(picked).sum())
    return total * scale


def loss_and_grad(
    params: ModelParams, features, targets, aggregation: str = "mean"
) -> tuple[float, ModelParams]:
    X = _as_matrix(features)
    targets = _check_targets(targets)
    if X.shape[0] != targets.shape[0]:
        raise ValueError("features and targets disagree on batch size")
    batch = X.shape[0]
    scale = _head_scale(batch, aggregation)
    z, h = _hidden(params, X)
    grads = params.zeros_like()
    rows = np.arange(batch)
    total = 0.0
    d_h = np.zeros_like(h)
    for idx, (w, b) in enumerate(zip(params.head_weights, params.head_biases)):
        p = _softmax(h @ w.T + b)
        picked = p[rows, targets[:, idx]]
        total += float(-np.log(picked).sum())
        g = p.copy()
        g[rows, targets[:, idx]] -= 1.0
        g *= scale
        grads.head_weights[idx][:] = g.T @ h
        grads.head_biases[idx][:] = g.sum(axis=0)
        d_h += g @ w
    d_z = d_h * (z > 0.0)
    grads.w_shared[:] = (X.T @ d_z) if sparse.issparse(X) else X.T @ d_z
    grads.b_shared[:] = d_z.sum(axis=0)
    return total * scale, grads


def grad(params: ModelParams, features, targets, aggregation: str = "mean") -> ModelParams:
    """Analytic gradient, shaped exactly like :class:`ModelParams`."""
    return loss_and_grad(params, features, targets, aggregation)[1]


def predict(params: ModelParams, features) -> list[ReportLabels]:
    """Per-head argmax; ties break toward the lowest class index (blank)."""
    probs = forward(params, features)
    batch = probs[0].shape[0]
    picks = np.stack([p.argmax(axis=1) for p in probs], axis=1)
    return [targets_to_labels(picks[i]) for i in range(batch)]
