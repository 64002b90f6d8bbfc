"""Hashed n-gram features over token matchforms.

Word n-grams over the token sequence plus character n-grams inside each
token, all hashed into a fixed-size count vector.  Hashing uses seeded
blake2b, never the builtin ``hash`` (which is salted per process and would
break run-to-run determinism).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .textproc import Token

__all__ = ["EncoderConfig", "HashedNgramEncoder", "encode", "feature_index"]


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 1 << 18
    word_orders: tuple[int, ...] = (1, 2)
    char_orders: tuple[int, ...] = (3, 4)
    seed: int = 0
    l2_normalize: bool = True

    def __post_init__(self) -> None:
        if self.dim < 2 or (self.dim & (self.dim - 1)) != 0:
            raise ValueError("dim must be a power of two >= 2")
        object.__setattr__(self, "word_orders", tuple(self.word_orders))
        object.__setattr__(self, "char_orders", tuple(self.char_orders))
        if not self.word_orders and not self.char_orders:
            raise ValueError("at least one n-gram order is required")
        if any(n < 1 for n in self.word_orders + self.char_orders):
            raise ValueError("n-gram orders must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "word_orders": list(self.word_orders),
            "char_orders": list(self.char_orders),
            "seed": self.seed,
            "l2_normalize": self.l2_normalize,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "EncoderConfig":
        base = cls()
        return cls(
            dim=int(raw.get("dim", base.dim)),
            word_orders=tuple(raw.get("word_orders", base.word_orders)),
            char_orders=tuple(raw.get("char_orders", base.char_orders)),
            seed=int(raw.get("seed", base.seed)),
            l2_normalize=bool(raw.get("l2_normalize", base.l2_normalize)),
        )


def feature_index(kind: str, gram: str, seed: int, dim: int) -> int:
    """Bucket for one n-gram.  ``kind`` separates feature families."""
    key = seed.to_bytes(8, "big", signed=True)
    digest = hashlib.blake2b(
        f"{kind}:{gram}".encode("utf-8"), digest_size=8, key=key
    ).digest()
    return int.from_bytes(digest, "big") % dim


class HashedNgramEncoder:
    """Encoder with a per-instance memo of n-gram buckets."""

    def __init__(self, config: EncoderConfig):
        self.config = config
        self._memo: dict[tuple[str, str], int] = {}

    def _bucket(self, kind: str, gram: str) -> int:
        key = (kind, gram)
        idx = self._memo.get(key)
        if idx is None:
            idx = feature_index(kind, gram, self.config.seed, self.config.dim)
            self._memo[key] = idx
        return idx

    def _counts(self, forms: Sequence[str]) -> dict[int, float]:
        counts: dict[int, float] = {}
        cfg = self.config
        for n in cfg.word_orders:
            kind = f"w{n}"
            for i in range(len(forms) - n + 1):
                gram = " ".join(forms[i : i + n])
                idx = self._bucket(kind, gram)
                counts[idx] = counts.get(idx, 0.0) + 1.0
        for n in cfg.char_orders:
            kind = f"c{n}"
            for form in forms:
                if len(form) < n:
                    continue
                for i in range(len(form) - n + 1):
                    idx = self._bucket(kind, form[i : i + n])
                    counts[idx] = counts.get(idx, 0.0) + 1.0
        return counts

    def encode_forms(self, forms: Sequence[str]) -> sparse.csr_matrix:
        counts = self._counts(forms)
        return self._to_csr([counts])

    def encode(self, tokens: Sequence[Token]) -> sparse.csr_matrix:
        """One (1 x dim) sparse row; tokens are assumed pre-truncated."""
        return self.encode_forms([t.matchform for t in tokens])

    def encode_many(self, token_seqs: Sequence[Sequence[Token]]) -> sparse.csr_matrix:
        rows = [self._counts([t.matchform for t in seq]) for seq in token_seqs]
        return self._to_csr(rows)

    def _to_csr(self, rows: list[dict[int, float]]) -> sparse.csr_matrix:
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for counts in rows:
            keys = sorted(counts)
            vals = np.array([counts[k] for k in keys], dtype=np.float64)
            if self.config.l2_normalize and len(vals):
                norm = float(np.sqrt(np.sum(vals * vals)))
                if norm > 0.0:
                    vals = vals / norm
            indices.extend(keys)
            data.extend(vals.tolist())
            indptr.append(len(indices))
        return sparse.csr_matrix(
            (
                np.asarray(data, dtype=np.float64),
                np.asarray(indices, dtype=np.int64),
                np.asarray(indptr, dtype=np.int64),
            ),
            shape=(len(rows), self.config.dim),
        )


def encode(tokens: Sequence[Token], config: EncoderConfig) -> sparse.csr_matrix:
    """Stateless convenience wrapper around :class:`HashedNgramEncoder`."""
    return HashedNgramEncoder(config).encode(tokens)
