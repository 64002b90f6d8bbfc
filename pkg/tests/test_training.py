from dataclasses import replace

import numpy as np
import pytest

from reportlabeler.corpus import (
    GeneratorConfig,
    generate,
    split_train_validation,
)
from reportlabeler.features import EncoderConfig
from reportlabeler.model import ModelParams, loss
from reportlabeler.training import (
    AdamWState,
    Checkpoint,
    Regime,
    RegimeKind,
    SplitDataset,
    TrainConfig,
    adamw_step,
    load_checkpoint,
    predict_texts,
    save_checkpoint,
    train,
)


def scalar_params():
    params = ModelParams.zeros(dim=2, hidden=1)
    return params


def make_split(n=60, seed=0, mismatch=0.0):
    dataset = generate(GeneratorConfig(seed=seed, mismatch_rate=mismatch), n)
    train_ids, val_ids = split_train_validation(dataset.ids(), seed=seed)
    return SplitDataset(dataset=dataset, train_ids=train_ids, validation_ids=val_ids)


SMALL_ENCODER = EncoderConfig(dim=1 << 10, word_orders=(1, 2), char_orders=())
FAST = TrainConfig(
    learning_rate=3e-3, batch_size=8, epochs=1, eval_interval=4, seed=0, hidden_dim=8
)


# ---------------------------------------------------------------------------
# configs and regimes
# ---------------------------------------------------------------------------


def test_train_config_validation():
    TrainConfig(learning_rate=0.0)  # explicitly allowed: a no-op run
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1e-3)
    with pytest.raises(ValueError):
        TrainConfig(beta1=1.0)
    with pytest.raises(ValueError):
        TrainConfig(beta2=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(eps=0.0)
    with pytest.raises(ValueError):
        TrainConfig(weight_decay=-0.01)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    TrainConfig(epochs=0)  # a zero-epoch run is a valid no-op
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(eval_interval=0)
    with pytest.raises(ValueError):
        TrainConfig(head_aggregation="median")
    with pytest.raises(ValueError):
        TrainConfig(hidden_dim=0)


def test_train_config_json_round_trip():
    config = TrainConfig(learning_rate=1e-3, epochs=3, seed=11, hidden_dim=32)
    assert TrainConfig.from_json_dict(config.to_json_dict()) == config


def test_regime_tags():
    assert Regime.weakly_supervised().tag == "weakly_supervised"
    assert Regime.supervised(25).tag == "supervised_25"
    assert Regime.hybrid(100).tag == "hybrid_100"


def test_regime_validation():
    with pytest.raises(ValueError):
        Regime(kind=RegimeKind.SUPERVISED, fraction=None)
    with pytest.raises(ValueError):
        Regime(kind=RegimeKind.SUPERVISED, fraction=30)
    with pytest.raises(ValueError):
        Regime(kind=RegimeKind.WEAKLY_SUPERVISED, fraction=100)


def test_split_dataset_validation():
    dataset = generate(GeneratorConfig(seed=1), 10)
    ids = dataset.ids()
    with pytest.raises(ValueError, match="unknown"):
        SplitDataset(dataset=dataset, train_ids=("nope",), validation_ids=())
    with pytest.raises(ValueError, match="overlap"):
        SplitDataset(
            dataset=dataset, train_ids=(ids[0],), validation_ids=(ids[0],)
        )


# ---------------------------------------------------------------------------
# the optimizer
# ---------------------------------------------------------------------------


def test_adamw_first_step_scalar():
    # first step with g=1: m_hat=1, v_hat=1, wd=0
    # -> p -= lr * 1/(1 + eps); hand value for lr=1e-3, eps=1e-8.
    params = scalar_params()
    grads = params.zeros_like()
    grads.b_shared[0] = 1.0
    state = AdamWState.zeros_like(params)
    config = TrainConfig(learning_rate=1e-3, weight_decay=0.0)
    adamw_step(params, grads, state, config)
    expected = -1e-3 / (1.0 + 1e-8)
    assert params.b_shared[0] == pytest.approx(expected, abs=1e-18)
    assert params.b_shared[0] == pytest.approx(-0.0009999999900000003, abs=1e-18)
    assert state.step == 1


def test_adamw_zero_grad_zero_wd_is_fixed_point():
    params = ModelParams.random_init(dim=6, hidden=3, seed=0)
    reference = params.copy()
    state = AdamWState.zeros_like(params)
    config = TrainConfig(learning_rate=1e-2, weight_decay=0.0)
    for _ in range(3):
        adamw_step(params, params.zeros_like(), state, config)
    assert params.equals(reference)


def test_adamw_weight_decay_only_shrinks():
    params = ModelParams.random_init(dim=6, hidden=3, seed=1)
    expected = params.w_shared * (1.0 - 1e-2 * 0.1)
    state = AdamWState.zeros_like(params)
    config = TrainConfig(learning_rate=1e-2, weight_decay=0.1)
    adamw_step(params, params.zeros_like(), state, config)
    assert np.allclose(params.w_shared, expected, atol=1e-15)


def test_adamw_decoupled_decay_direction():
    # sign of the Adam part is independent of the decay: with a positive
    # gradient both terms push a positive weight down.
    params = scalar_params()
    params.b_shared[0] = 2.0
    grads = params.zeros_like()
    grads.b_shared[0] = 1.0
    state = AdamWState.zeros_like(params)
    config = TrainConfig(learning_rate=1e-3, weight_decay=0.5)
    adamw_step(params, grads, state, config)
    adam_part = 1e-3 / (1.0 + 1e-8)
    decay_part = 1e-3 * 0.5 * 2.0
    assert params.b_shared[0] == pytest.approx(
        2.0 - adam_part - decay_part, abs=1e-15
    )


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------


def test_weakly_supervised_deterministic():
    split = make_split(n=40, seed=2)
    a = train(
        Regime.weakly_supervised(), FAST, weak=split, encoder_config=SMALL_ENCODER
    )
    b = train(
        Regime.weakly_supervised(), FAST, weak=split, encoder_config=SMALL_ENCODER
    )
    assert a.params.equals(b.params)
    assert a.step == b.step
    assert a.metric == b.metric
    assert a.regime_tag == "weakly_supervised"


def test_seed_changes_result():
    split = make_split(n=40, seed=2)
    a = train(
        Regime.weakly_supervised(), FAST, weak=split, encoder_config=SMALL_ENCODER
    )
    b = train(
        Regime.weakly_supervised(),
        replace(FAST, seed=1),
        weak=split,
        encoder_config=SMALL_ENCODER,
    )
    assert not a.params.equals(b.params)


def test_supervised_requires_manual():
    split = make_split(n=20, seed=3)
    with pytest.raises(ValueError, match="manual"):
        train(Regime.supervised(100), FAST, weak=split)


def test_weakly_supervised_requires_weak():
    split = make_split(n=20, seed=3)
    with pytest.raises(ValueError, match="weak"):
        train(Regime.weakly_supervised(), FAST, manual=split)


def test_hybrid_requires_source():
    split = make_split(n=20, seed=3)
    with pytest.raises(ValueError, match="checkpoint or weak"):
        train(Regime.hybrid(100), FAST, manual=split)


def test_hybrid_rejects_conflicting_encoder():
    split = make_split(n=30, seed=4)
    ws = train(
        Regime.weakly_supervised(), FAST, weak=split, encoder_config=SMALL_ENCODER
    )
    with pytest.raises(ValueError, match="encoder"):
        train(
            Regime.hybrid(100),
            FAST,
            manual=split,
            ws_checkpoint=ws,
            encoder_config=EncoderConfig(dim=1 << 11, word_orders=(1,), char_orders=()),
        )


def test_hybrid_zero_lr_keeps_ws_params():
    # fine-tuning with lr=0 must return the WS parameters untouched
    split = make_split(n=30, seed=5)
    ws = train(
        Regime.weakly_supervised(), FAST, weak=split, encoder_config=SMALL_ENCODER
    )
    frozen = train(
        Regime.hybrid(100),
        replace(FAST, learning_rate=0.0, weight_decay=0.0),
        manual=split,
        ws_checkpoint=ws,
    )
    assert frozen.params.equals(ws.params)
    assert frozen.regime_tag == "hybrid_100"


def test_training_reduces_loss_on_separable_data():
    from reportlabeler.features import HashedNgramEncoder
    from reportlabeler.model import labels_to_targets
    from reportlabeler.textproc import DEFAULT_NORMALIZER, tokenize, truncate

    split = make_split(n=200, seed=6)
    encoder = HashedNgramEncoder(SMALL_ENCODER)
    by_id = split.dataset.by_id()
    seqs = [truncate(tokenize(by_id[rid].text)) for rid in split.train_ids]
    X = encoder.encode_many(seqs)
    targets = np.stack(
        [labels_to_targets(by_id[rid].labels) for rid in split.train_ids]
    )
    params = ModelParams.random_init(SMALL_ENCODER.dim, 8, seed=0)
    state = AdamWState.zeros_like(params)
    config = TrainConfig(learning_rate=3e-3, hidden_dim=8)

    from reportlabeler.model import grad

    losses = [loss(params, X, targets)]
    for _ in range(3):
        adamw_step(params, grad(params, X, targets), state, config)
        losses.append(loss(params, X, targets))
    assert losses[-1] < losses[0]


def test_best_checkpoint_metric_is_max_seen():
    split = make_split(n=40, seed=7)
    result = train(
        Regime.weakly_supervised(),
        replace(FAST, epochs=2),
        weak=split,
        encoder_config=SMALL_ENCODER,
    )
    assert 0.0 <= result.metric <= 1.0
    assert result.step >= 0
    assert result.encoder_config == SMALL_ENCODER


def test_empty_validation_errors():
    dataset = generate(GeneratorConfig(seed=8), 10)
    split = SplitDataset(
        dataset=dataset, train_ids=dataset.ids(), validation_ids=()
    )
    with pytest.raises(ValueError, match="validation"):
        train(
            Regime.weakly_supervised(), FAST, weak=split, encoder_config=SMALL_ENCODER
        )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def trained_checkpoint():
    split = make_split(n=30, seed=9)
    return train(
        Regime.weakly_supervised(), FAST, weak=split, encoder_config=SMALL_ENCODER
    )


def test_checkpoint_round_trip(tmp_path):
    original = trained_checkpoint()
    path = tmp_path / "model.ckpt"
    save_checkpoint(original, path)
    loaded = load_checkpoint(path)
    assert loaded.params.equals(original.params)
    assert loaded.encoder_config == original.encoder_config
    assert loaded.train_config == original.train_config
    assert loaded.regime_tag == original.regime_tag
    assert loaded.step == original.step
    assert loaded.metric == original.metric


def test_checkpoint_bytes_identical(tmp_path):
    original = trained_checkpoint()
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(original, p1)
    save_checkpoint(original, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_bad_version(tmp_path):
    original = trained_checkpoint()
    path = tmp_path / "versioned.ckpt"
    save_checkpoint(original, path)
    blob = bytearray(path.read_bytes())
    blob[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    original = trained_checkpoint()
    path = tmp_path / "short.ckpt"
    save_checkpoint(original, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 16])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_metric_range():
    params = ModelParams.zeros(dim=4, hidden=2)
    with pytest.raises(ValueError, match="metric"):
        Checkpoint(
            params=params,
            encoder_config=EncoderConfig(dim=4),
            train_config=TrainConfig(),
            regime_tag="weakly_supervised",
            step=0,
            metric=1.5,
        )


def test_predict_texts_shapes():
    checkpoint = trained_checkpoint()
    texts = ["Kein Pneumothorax.", "Pleuraerguss links."]
    labels = predict_texts(checkpoint, texts)
    assert len(labels) == 2
