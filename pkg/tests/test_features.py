import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from reportlabeler.features import (
    EncoderConfig,
    HashedNgramEncoder,
    encode,
    feature_index,
)
from reportlabeler.textproc import tokenize


def test_unigram_buckets_match_direct_hash():
    # recompute the buckets with hashlib right here, independently
    # of feature_index's implementation.
    config = EncoderConfig(dim=8, word_orders=(1,), char_orders=(), seed=0)
    tokens = tokenize("Pneumothorax rechts")
    vec = encode(tokens, config).toarray()[0]

    expected = np.zeros(8)
    key = (0).to_bytes(8, "big", signed=True)
    for form in ("pneumothorax", "rechts"):
        digest = hashlib.blake2b(
            f"w1:{form}".encode(), digest_size=8, key=key
        ).digest()
        expected[int.from_bytes(digest, "big") % 8] += 1.0
    expected /= np.linalg.norm(expected)

    assert np.array_equal(vec, expected)
    # distinct buckets (0 and 5), each 1/sqrt(2) after normalization
    assert vec[0] == vec[5] == pytest.approx(1 / np.sqrt(2))
    assert np.count_nonzero(vec) == 2


def test_colliding_unigrams_share_a_bucket():
    # "kein" and "erguss" both land in bucket 2 at dim=8, seed=0; the
    # counts add before normalization.
    config = EncoderConfig(dim=8, word_orders=(1,), char_orders=(), seed=0)
    vec = encode(tokenize("kein Erguss"), config).toarray()[0]
    assert np.count_nonzero(vec) == 1
    assert vec[2] == pytest.approx(1.0)


def test_feature_index_seed_sensitivity():
    a = [feature_index("w1", f"tok{i}", 0, 1 << 16) for i in range(64)]
    b = [feature_index("w1", f"tok{i}", 1, 1 << 16) for i in range(64)]
    assert a != b


def test_feature_index_kind_separates_families():
    assert feature_index("w1", "abc", 0, 1 << 20) != feature_index(
        "c3", "abc", 0, 1 << 20
    )


def test_empty_tokens_give_zero_vector():
    config = EncoderConfig(dim=16)
    vec = encode([], config)
    assert vec.shape == (1, 16)
    assert vec.nnz == 0


def test_char_ngrams_skip_short_forms():
    config = EncoderConfig(dim=32, word_orders=(), char_orders=(4,), seed=0)
    vec = encode(tokenize("am ZVK"), config).toarray()[0]
    # only "zvk" has... no, len("zvk")=3 < 4, "am" too: nothing survives.
    assert not vec.any()


def test_encode_deterministic_across_instances():
    config = EncoderConfig(dim=1 << 10)
    tokens = tokenize("Kein Pneumothorax, kein Erguss.")
    a = HashedNgramEncoder(config).encode(tokens)
    b = HashedNgramEncoder(config).encode(tokens)
    assert (a != b).nnz == 0


def test_encode_many_matches_single_rows():
    config = EncoderConfig(dim=1 << 10)
    texts = ["Kein Erguss.", "Pneumothorax rechts.", "ZVK von links her."]
    token_seqs = [tokenize(t) for t in texts]
    encoder = HashedNgramEncoder(config)
    stacked = encoder.encode_many(token_seqs).toarray()
    for row, seq in zip(stacked, token_seqs):
        assert np.array_equal(row, encoder.encode(seq).toarray()[0])


def test_l2_normalization_unit_norm():
    config = EncoderConfig(dim=1 << 12)
    vec = encode(tokenize("Verdichtung im linken Unterfeld."), config)
    assert np.linalg.norm(vec.toarray()) == pytest.approx(1.0)


def test_l2_normalization_can_be_disabled():
    config = EncoderConfig(dim=1 << 12, l2_normalize=False)
    vec = encode(tokenize("Erguss Erguss Erguss"), config).toarray()[0]
    assert vec.max() >= 3.0  # raw counts survive


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(dim=1000)  # not a power of two
    with pytest.raises(ValueError):
        EncoderConfig(dim=1)
    with pytest.raises(ValueError):
        EncoderConfig(word_orders=(), char_orders=())
    with pytest.raises(ValueError):
        EncoderConfig(word_orders=(0,))


def test_config_json_round_trip():
    config = EncoderConfig(dim=1 << 14, word_orders=(1,), char_orders=(3,), seed=7)
    assert EncoderConfig.from_json_dict(config.to_json_dict()) == config


def test_config_json_defaults_missing_keys():
    assert EncoderConfig.from_json_dict({"dim": 64}) == EncoderConfig(dim=64)


texts = st.lists(
    st.text(alphabet="aäbcdeöfgß ", min_size=1, max_size=8), min_size=0, max_size=12
)


@settings(max_examples=50)
@given(texts)
def test_rows_are_unit_or_zero(words):
    config = EncoderConfig(dim=1 << 8)
    tokens = tokenize(" ".join(words)) if any(w.strip() for w in words) else []
    norm = np.linalg.norm(encode(tokens, config).toarray())
    assert norm == pytest.approx(1.0) or norm == 0.0


@settings(max_examples=50)
@given(texts, st.integers(0, 2**31 - 1))
def test_feature_index_in_range(words, seed):
    dim = 1 << 6
    for w in words:
        assert 0 <= feature_index("w1", w, seed, dim) < dim
