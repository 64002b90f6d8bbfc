"""Tokenization and sentence segmentation for German report text.

Tokens are maximal runs of letters/digits plus single punctuation marks.
Matchforms are lowercased surfaces; umlauts and eszett are kept as-is since
ASCII folding would merge distinct German words.  Hyphenated compounds
("Pleura-Erguss") therefore split into [pleura, -, erguss], which lets phrase
patterns match both the hyphenated and the spaced spelling.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

__all__ = [
    "Token",
    "Sentence",
    "NormalizerConfig",
    "tokenize",
    "split_sentences",
    "truncate",
    "DEFAULT_ABBREVIATIONS",
]

# Letter/digit runs (underscore excluded) or one punctuation character.
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]")
_BLANK_LINE_RE = re.compile(r"\n[^\S\n]*\n")
_TERMINALS = frozenset({".", "!", "?"})

# Abbreviations whose trailing period must not end a sentence.  Pulled from
# common German radiology usage; configs may replace the list entirely.
DEFAULT_ABBREVIATIONS: tuple[str, ...] = (
    "V.a.",
    "Vd.a.",
    "Z.n.",
    "z.B.",
    "bds.",
    "ggf.",
    "bzw.",
    "ca.",
    "i.v.",
    "a.e.",
    "u.a.",
    "o.B.",
    "re.",
    "li.",
    "evtl.",
    "inkl.",
    "max.",
    "min.",
    "Dr.",
    "sog.",
)


@dataclass(frozen=True)
class Token:
    surface: str
    matchform: str
    span: tuple[int, int]  # half-open character interval into the input text


@dataclass(frozen=True)
class Sentence:
    token_range: tuple[int, int]  # half-open token index interval
    span: tuple[int, int]  # character span from first to last token


@dataclass(frozen=True)
class NormalizerConfig:
    max_tokens: int = 512
    abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        object.__setattr__(self, "abbreviations", tuple(self.abbreviations))

    @classmethod
    def from_json_file(cls, path: str | Path) -> "NormalizerConfig":
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        if not isinstance(raw, dict):
            raise ValueError("normalizer config must be a JSON object")
        kwargs = {}
        if "max_tokens" in raw:
            kwargs["max_tokens"] = int(raw["max_tokens"])
        if "abbreviations" in raw:
            abbrevs = raw["abbreviations"]
            if not isinstance(abbrevs, list) or not all(
                isinstance(a, str) for a in abbrevs
            ):
                raise ValueError("abbreviations must be a list of strings")
            kwargs["abbreviations"] = tuple(abbrevs)
        return cls(**kwargs)


DEFAULT_NORMALIZER = NormalizerConfig()


def tokenize(text: str) -> list[Token]:
    """Split text into tokens with exact character spans.

    The empty string is rejected; whitespace-only input yields no tokens.
    """
    if text == "":
        raise ValueError("cannot tokenize empty text")
    tokens = []
    for match in _TOKEN_RE.finditer(text):
        surface = match.group(0)
        tokens.append(
            Token(surface=surface, matchform=surface.lower(), span=match.span())
        )
    return tokens


def _abbreviation_matchforms(config: NormalizerConfig) -> list[tuple[str, ...]]:
    out = []
    for abbrev in config.abbreviations:
        forms = tuple(t.matchform for t in tokenize(abbrev)) if abbrev else ()
        if forms:
            out.append(forms)
    return out


def _covered_by_abbreviation(
    tokens: Sequence[Token], abbrevs: list[tuple[str, ...]]
) -> set[int]:
    """Indices of tokens that are part of an abbreviation occurrence."""
    forms = [t.matchform for t in tokens]
    covered: set[int] = set()
    for abbrev in abbrevs:
        k = len(abbrev)
        first = abbrev[0]
        for i in range(len(forms) - k + 1):
            if forms[i] == first and tuple(forms[i : i + k]) == abbrev:
                covered.update(range(i, i + k))
    return covered


def split_sentences(
    tokens: Sequence[Token],
    config: NormalizerConfig = DEFAULT_NORMALIZER,
    text: str | None = None,
) -> list[Sentence]:
    """Group tokens into sentences.

    A sentence ends after ".", "!" or "?" unless the period belongs to a
    listed abbreviation, and after any blank line (a pair of newlines in the
    gap between consecutive tokens, only checkable when the original text is
    supplied).  The returned ranges partition the token sequence in order.
    """
    if not tokens:
        return []
    covered = _covered_by_abbreviation(tokens, _abbreviation_matchforms(config))
    breaks: list[int] = []  # indices of sentence-final tokens
    last = len(tokens) - 1
    for i, token in enumerate(tokens):
        if i == last:
            breaks.append(i)
            continue
        if token.matchform in _TERMINALS and i not in covered:
            breaks.append(i)
            continue
        if text is not None:
            gap = text[token.span[1] : tokens[i + 1].span[0]]
            if _BLANK_LINE_RE.search(gap):
                breaks.append(i)
    sentences = []
    start = 0
    for end_inclusive in breaks:
        end = end_inclusive + 1
        sentences.append(
            Sentence(
                token_range=(start, end),
                span=(tokens[start].span[0], tokens[end - 1].span[1]),
            )
        )
        start = end
    return sentences


def truncate(
    tokens: Sequence[Token], config: NormalizerConfig = DEFAULT_NORMALIZER
) -> list[Token]:
    """Keep the first min(len, max_tokens) tokens."""
    return list(tokens[: config.max_tokens])
