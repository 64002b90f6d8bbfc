"""Training regimes, AdamW, and checkpointing for the multi-head labeler.

Three regimes share one loop: supervised training on a fraction of manually
labeled data, weakly supervised training on rule-labeled data, and hybrid
training that fine-tunes the best weakly supervised checkpoint on manual
data.  The best checkpoint (by the validation selection metric) across the
run is returned.

Checkpoints use a small framed binary container instead of ``np.savez``
because zip archives embed timestamps, which would break the bit-identical
reruns the determinism contract demands.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from . import CHECKPOINT_VERSION
from .corpus import LabeledDataset, fraction_splits
from .evaluation import evaluate_three_tasks, selection_metric
from .features import EncoderConfig, HashedNgramEncoder
from .model import ModelParams, labels_to_targets, loss_and_grad, predict
from .schema import FINDINGS, ReportLabels
from .textproc import DEFAULT_NORMALIZER, NormalizerConfig, tokenize, truncate

__all__ = [
    "TrainConfig",
    "RegimeKind",
    "Regime",
    "AdamWState",
    "adamw_step",
    "SplitDataset",
    "Checkpoint",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "predict_texts",
]

_VALID_FRACTIONS = (25, 50, 75, 100)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings.

    ``learning_rate`` may be zero (freezes the parameters; useful for no-op
    fine-tuning checks).  ``hidden_dim`` sizes the shared projection when a
    run starts from scratch.
    """

    learning_rate: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 8
    epochs: int = 1
    eval_interval: int = 100
    seed: int = 0
    head_aggregation: str = "mean"
    hidden_dim: int = 256

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.eval_interval < 1:
            raise ValueError("eval_interval must be >= 1")
        if self.head_aggregation not in ("mean", "sum"):
            raise ValueError("head_aggregation must be 'mean' or 'sum'")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "eval_interval": self.eval_interval,
            "seed": self.seed,
            "head_aggregation": self.head_aggregation,
            "hidden_dim": self.hidden_dim,
        }

    @classmethod
    def from_json_dict(cls, raw: Mapping) -> "TrainConfig":
        return cls(**{k: raw[k] for k in cls().to_json_dict() if k in raw})


class RegimeKind(Enum):
    SUPERVISED = "supervised"
    WEAKLY_SUPERVISED = "weakly_supervised"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    fraction: int | None = None

    def __post_init__(self) -> None:
        if self.kind is RegimeKind.WEAKLY_SUPERVISED:
            if self.fraction is not None:
                raise ValueError("weakly supervised training takes no fraction")
        elif self.fraction not in _VALID_FRACTIONS:
            raise ValueError(
                f"{self.kind.value} needs a fraction in {_VALID_FRACTIONS}"
            )

    @classmethod
    def supervised(cls, fraction: int = 100) -> "Regime":
        return cls(RegimeKind.SUPERVISED, fraction)

    @classmethod
    def weakly_supervised(cls) -> "Regime":
        return cls(RegimeKind.WEAKLY_SUPERVISED)

    @classmethod
    def hybrid(cls, fraction: int = 100) -> "Regime":
        return cls(RegimeKind.HYBRID, fraction)

    @property
    def tag(self) -> str:
        if self.fraction is None:
            return self.kind.value
        return f"{self.kind.value}_{self.fraction}"


@dataclass
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamWState":
        return cls(
            m={name: np.zeros_like(a) for name, a in params.named_arrays()},
            v={name: np.zeros_like(a) for name, a in params.named_arrays()},
        )


def adamw_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamWState,
    config: TrainConfig,
) -> None:
    """One decoupled-weight-decay Adam update, in place.

    param <- param - lr * ( m_hat / (sqrt(v_hat) + eps) + wd * param )
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    for (name, p), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        if config.weight_decay:
            update = update + config.weight_decay * p
        p -= config.learning_rate * update


@dataclass(frozen=True)
class SplitDataset:
    """A labeled dataset together with its train/validation id lists."""

    dataset: LabeledDataset
    train_ids: tuple[str, ...]
    validation_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        known = set(self.dataset.ids())
        for rid in list(self.train_ids) + list(self.validation_ids):
            if rid not in known:
                raise ValueError(f"split references unknown report id {rid!r}")
        if set(self.train_ids) & set(self.validation_ids):
            raise ValueError("train and validation ids overlap")


@dataclass(frozen=True)
class Checkpoint:
    params: ModelParams
    encoder_config: EncoderConfig
    train_config: TrainConfig
    regime_tag: str
    step: int
    metric: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.metric <= 1.0:
            raise ValueError("checkpoint metric must lie in [0, 1]")
        if self.step < 0:
            raise ValueError("checkpoint step must be >= 0")


def _encode_dataset(
    split: SplitDataset,
    ids: Sequence[str],
    encoder: HashedNgramEncoder,
    normalizer: NormalizerConfig,
) -> tuple[sparse.csr_matrix, np.ndarray, list[ReportLabels]]:
    by_id = split.dataset.by_id()
    token_seqs = []
    labels = []
    for rid in ids:
        report = by_id[rid]
        if report.labels is None:
            raise ValueError(f"report {rid} has no labels to train on")
        token_seqs.append(truncate(tokenize(report.text), normalizer))
        labels.append(report.labels)
    features = encoder.encode_many(token_seqs)
    targets = np.stack([labels_to_targets(l) for l in labels]) if labels else (
        np.zeros((0, 14), dtype=np.int64)
    )
    return features, targets, labels


def _validation_metric(
    params: ModelParams,
    features: sparse.csr_matrix,
    ids: Sequence[str],
    references: Mapping[str, ReportLabels],
) -> float:
    predictions = dict(zip(ids, predict(params, features)))
    report = evaluate_three_tasks(predictions, {rid: references[rid] for rid in ids})
    return selection_metric(report)


def _run_loop(
    params: ModelParams,
    split: SplitDataset,
    config: TrainConfig,
    encoder: HashedNgramEncoder,
    normalizer: NormalizerConfig,
    regime_tag: str,
) -> Checkpoint:
    if not split.train_ids:
        raise ValueError("training split is empty")
    if not split.validation_ids:
        raise ValueError("validation split is empty")
    X_train, Y_train, _ = _encode_dataset(split, split.train_ids, encoder, normalizer)
    X_val, _, val_labels = _encode_dataset(
        split, split.validation_ids, encoder, normalizer
    )
    references = dict(zip(split.validation_ids, val_labels))

    best_metric = -1.0
    best_step = 0
    best_params = params.copy()

    def evaluate(step: int) -> None:
        nonlocal best_metric, best_step, best_params
        metric = _validation_metric(params, X_val, split.validation_ids, references)
        if metric > best_metric:
            best_metric = metric
            best_step = step
            best_params = params.copy()

    evaluate(0)
    state = AdamWState.zeros_like(params)
    n = len(split.train_ids)
    step = 0
    last_eval = 0
    for epoch in range(config.epochs):
        order = np.random.default_rng(
            np.random.SeedSequence([config.seed, 0xE0C, epoch])
        ).permutation(n)
        for start in range(0, n, config.batch_size):
            rows = order[start : start + config.batch_size]
            _, grads = loss_and_grad(
                params, X_train[rows], Y_train[rows], config.head_aggregation
            )
            adamw_step(params, grads, state, config)
            step += 1
            if step % config.eval_interval == 0:
                evaluate(step)
                last_eval = step
    if step != last_eval:
        evaluate(step)
    return Checkpoint(
        params=best_params,
        encoder_config=encoder.config,
        train_config=config,
        regime_tag=regime_tag,
        step=best_step,
        metric=best_metric,
    )


def train(
    regime: Regime,
    config: TrainConfig,
    *,
    weak: SplitDataset | None = None,
    manual: SplitDataset | None = None,
    ws_checkpoint: Checkpoint | None = None,
    encoder_config: EncoderConfig | None = None,
    normalizer: NormalizerConfig = DEFAULT_NORMALIZER,
) -> Checkpoint:
    """Run one training regime and return its best checkpoint.

    Supervised(f) trains on fraction f of the manual train ids and validates
    on fraction f of the manual validation ids (nested seeded prefixes).
    Weakly supervised trains on the weak split as given.  Hybrid initializes
    from ``ws_checkpoint`` — or trains one first from ``weak`` — then
    fine-tunes like Supervised(f).  The selection metric is evaluated before
    the first step, every ``eval_interval`` steps, and after the last step;
    the earliest strictly-best checkpoint wins.
    """
    explicit_encoder = encoder_config is not None
    encoder_config = encoder_config or EncoderConfig()
    if regime.kind is RegimeKind.WEAKLY_SUPERVISED:
        if weak is None:
            raise ValueError("weakly supervised training needs the weak dataset")
        encoder = HashedNgramEncoder(encoder_config)
        params = ModelParams.random_init(
            encoder_config.dim, config.hidden_dim, config.seed
        )
        return _run_loop(params, weak, config, encoder, normalizer, regime.tag)

    if manual is None:
        raise ValueError(f"{regime.kind.value} training needs the manual dataset")
    assert regime.fraction is not None
    cuts = fraction_splits(manual.train_ids, manual.validation_ids, config.seed)
    train_ids, val_ids = cuts[regime.fraction]
    fractional = SplitDataset(
        dataset=manual.dataset, train_ids=train_ids, validation_ids=val_ids
    )

    if regime.kind is RegimeKind.SUPERVISED:
        encoder = HashedNgramEncoder(encoder_config)
        params = ModelParams.random_init(
            encoder_config.dim, config.hidden_dim, config.seed
        )
        return _run_loop(params, fractional, config, encoder, normalizer, regime.tag)

    # Hybrid: continue from the best weakly supervised parameters.
    if ws_checkpoint is None:
        if weak is None:
            raise ValueError("hybrid training needs a WS checkpoint or weak dataset")
        ws_checkpoint = train(
            Regime.weakly_supervised(),
            config,
            weak=weak,
            encoder_config=encoder_config,
            normalizer=normalizer,
        )
    elif explicit_encoder and ws_checkpoint.encoder_config != encoder_config:
        raise ValueError("encoder_config conflicts with the WS checkpoint's encoder")
    encoder = HashedNgramEncoder(ws_checkpoint.encoder_config)
    params = ws_checkpoint.params.copy()
    return _run_loop(params, fractional, config, encoder, normalizer, regime.tag)


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

_MAGIC = b"RLCK"


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    """Write a framed binary checkpoint (bit-identical for identical inputs)."""
    arrays = list(checkpoint.params.named_arrays())
    header = {
        "version": CHECKPOINT_VERSION,
        "regime_tag": checkpoint.regime_tag,
        "step": checkpoint.step,
        "metric": checkpoint.metric,
        "encoder_config": checkpoint.encoder_config.to_json_dict(),
        "train_config": checkpoint.train_config.to_json_dict(),
        "arrays": [
            {"name": name, "shape": list(a.shape)} for name, a in arrays
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<I", CHECKPOINT_VERSION))
        handle.write(struct.pack("<Q", len(blob)))
        handle.write(blob)
        for _, a in arrays:
            handle.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", handle.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(
                f"{path}: unsupported checkpoint version {version}"
                f" (expected {CHECKPOINT_VERSION})"
            )
        (header_len,) = struct.unpack("<Q", handle.read(8))
        header = json.loads(handle.read(header_len).decode("utf-8"))
        data: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = handle.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated checkpoint array {entry['name']}")
            data[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    head_w = []
    head_b = []
    for finding in FINDINGS:
        head_w.append(data[f"head_w_{finding.value}"])
        head_b.append(data[f"head_b_{finding.value}"])
    params = ModelParams(
        w_shared=data["w_shared"],
        b_shared=data["b_shared"],
        head_weights=head_w,
        head_biases=head_b,
    )
    return Checkpoint(
        params=params,
        encoder_config=EncoderConfig.from_json_dict(header["encoder_config"]),
        train_config=TrainConfig.from_json_dict(header["train_config"]),
        regime_tag=header["regime_tag"],
        step=int(header["step"]),
        metric=float(header["metric"]),
    )


def predict_texts(
    checkpoint: Checkpoint,
    texts: Sequence[str],
    normalizer: NormalizerConfig = DEFAULT_NORMALIZER,
) -> list[ReportLabels]:
    """Label raw report texts with a trained checkpoint."""
    encoder = HashedNgramEncoder(checkpoint.encoder_config)
    token_seqs = [truncate(tokenize(t), normalizer) for t in texts]
    features = encoder.encode_many(token_seqs)
    return predict(checkpoint.params, features)
