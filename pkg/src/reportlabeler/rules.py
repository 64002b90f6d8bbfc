"""Rule-based weak labeler: phrase matching plus negation/uncertainty cues.

Patterns are short token-matchform sequences.  The final element of a phrase
pattern may carry a trailing ``*`` and then matches any token whose folded
matchform starts with the folded stem; folding maps umlauts to their base
vowels (and eszett to ``ss``) so that ``erguss*`` also covers the plural
``Ergüsse``.  Exact (non-wildcard) elements never fold.  When matching a
multi-token pattern against text, bare hyphen tokens inside the candidate
span are skipped, so ``pleura erguss`` covers both "Pleura Erguss" and
"Pleura-Erguss".
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .schema import FINDINGS, Finding, LabelValue, ReportLabels
from .textproc import (
    DEFAULT_NORMALIZER,
    NormalizerConfig,
    Sentence,
    Token,
    split_sentences,
    tokenize,
)

__all__ = [
    "Pattern",
    "PhraseLexicon",
    "CueLexicon",
    "NormalcyLexicon",
    "Lexicon",
    "Mention",
    "compile_pattern",
    "extract_mentions",
    "classify_mention",
    "aggregate",
    "label_report",
    "load_lexicon",
    "default_lexicon",
]

_FOLD_TABLE = str.maketrans({"ä": "a", "ö": "o", "ü": "u", "ß": "ss"})


def fold(form: str) -> str:
    """Umlaut folding used only for wildcard stem comparison."""
    return form.translate(_FOLD_TABLE)


@dataclass(frozen=True)
class Pattern:
    """Compiled pattern: matchform elements, optional suffix wildcard."""

    elements: tuple[str, ...]
    wildcard: bool = False
    folded_stem: str = ""

    def __post_init__(self) -> None:
        if not self.elements:
            raise ValueError("pattern must have at least one element")
        if self.wildcard and not self.elements[-1]:
            raise ValueError("wildcard pattern needs a non-empty stem")
        if self.wildcard and not self.folded_stem:
            object.__setattr__(self, "folded_stem", fold(self.elements[-1]))


def compile_pattern(raw: str) -> Pattern:
    """Compile a whitespace-separated pattern string.

    Each piece is tokenized with the report tokenizer, so "v.a." becomes the
    four elements (v, ., a, .).  Hyphens are dropped (the matcher skips them
    in text as well).  Only the final piece may end in ``*``.
    """
    pieces = raw.split()
    if not pieces:
        raise ValueError("empty pattern")
    elements: list[str] = []
    wildcard = False
    for idx, piece in enumerate(pieces):
        starred = piece.endswith("*")
        core = piece[:-1] if starred else piece
        if starred and idx != len(pieces) - 1:
            raise ValueError(f"wildcard allowed only on the final element: {raw!r}")
        if starred and not core:
            raise ValueError(f"wildcard pattern needs a stem: {raw!r}")
        if not core:
            continue
        forms = [t.matchform for t in tokenize(core.lower()) if t.matchform != "-"]
        if starred and not forms:
            raise ValueError(f"wildcard pattern needs a stem: {raw!r}")
        elements.extend(forms)
        if starred:
            wildcard = True
    if not elements:
        raise ValueError(f"pattern has no matchable elements: {raw!r}")
    return Pattern(elements=tuple(elements), wildcard=wildcard)


def _match_at(
    forms: Sequence[str],
    folded: Sequence[str],
    start: int,
    end: int,
    pattern: Pattern,
) -> int | None:
    """Match a pattern at token index ``start``; return the exclusive end.

    Hyphen tokens between elements are skipped (but counted into the span).
    """
    j = start
    last = len(pattern.elements) - 1
    for k, elem in enumerate(pattern.elements):
        if k > 0:
            while j < end and forms[j] == "-":
                j += 1
        if j >= end:
            return None
        if k == last and pattern.wildcard:
            if not folded[j].startswith(pattern.folded_stem):
                return None
        elif forms[j] != elem:
            return None
        j += 1
    return j


@dataclass(frozen=True)
class PhraseLexicon:
    """Finding -> phrase patterns.  NoFinding carries none by design."""

    patterns: Mapping[Finding, tuple[Pattern, ...]]

    def __post_init__(self) -> None:
        for finding in FINDINGS:
            pats = self.patterns.get(finding, ())
            if finding.is_no_finding:
                if pats:
                    raise ValueError("NoFinding must not have phrase patterns")
            elif not pats:
                raise ValueError(f"finding {finding.value} has no patterns")
        exact: dict[str, list[tuple[int, Pattern]]] = {}
        wild_first: list[tuple[int, Pattern]] = []
        for finding, pats in self.patterns.items():
            fidx = FINDINGS.index(finding)
            for pat in pats:
                if len(pat.elements) == 1 and pat.wildcard:
                    wild_first.append((fidx, pat))
                else:
                    exact.setdefault(pat.elements[0], []).append((fidx, pat))
        object.__setattr__(self, "_exact_index", exact)
        object.__setattr__(self, "_wildcard_first", tuple(wild_first))

    def candidates_at(self, form: str, folded_form: str):
        cands = self._exact_index.get(form, ())
        if self._wildcard_first:
            extra = [
                fp
                for fp in self._wildcard_first
                if folded_form.startswith(fp[1].folded_stem)
            ]
            if extra:
                return list(cands) + extra
        return cands


@dataclass(frozen=True)
class CueLexicon:
    pre_negation: tuple[Pattern, ...]
    post_negation: tuple[Pattern, ...]
    uncertainty: tuple[Pattern, ...]
    pre_window: int = 5
    post_window: int = 5

    def __post_init__(self) -> None:
        if self.pre_window < 1 or self.post_window < 1:
            raise ValueError("cue windows must be >= 1")
        for name in ("pre_negation", "post_negation", "uncertainty"):
            if not getattr(self, name):
                raise ValueError(f"cue list {name} must be non-empty")


@dataclass(frozen=True)
class NormalcyLexicon:
    patterns: tuple[Pattern, ...]

    def __post_init__(self) -> None:
        if not self.patterns:
            raise ValueError("normalcy lexicon must be non-empty")


@dataclass(frozen=True)
class Lexicon:
    phrases: PhraseLexicon
    cues: CueLexicon
    normalcy: NormalcyLexicon


@dataclass(frozen=True)
class Mention:
    finding: Finding
    sentence_index: int
    token_span: tuple[int, int]
    polarity: LabelValue = LabelValue.POSITIVE


def extract_mentions(
    tokens: Sequence[Token],
    sentences: Sequence[Sentence],
    phrases: PhraseLexicon,
) -> list[Mention]:
    """Scan each sentence left to right for maximal non-overlapping matches.

    At a position the longest match wins; several findings matching the same
    winning span each produce one mention.  Scanning resumes after the span.
    """
    forms = [t.matchform for t in tokens]
    folded = [fold(f) for f in forms]
    mentions: list[Mention] = []
    for s_idx, sentence in enumerate(sentences):
        start, end = sentence.token_range
        i = start
        while i < end:
            best_end = -1
            winners: set[int] = set()
            for fidx, pat in phrases.candidates_at(forms[i], folded[i]):
                m_end = _match_at(forms, folded, i, end, pat)
                if m_end is None:
                    continue
                if m_end > best_end:
                    best_end = m_end
                    winners = {fidx}
                elif m_end == best_end:
                    winners.add(fidx)
            if best_end < 0:
                i += 1
                continue
            for fidx in sorted(winners):
                mentions.append(
                    Mention(
                        finding=FINDINGS[fidx],
                        sentence_index=s_idx,
                        token_span=(i, best_end),
                    )
                )
            i = best_end
    return mentions


def _cue_in_range(
    forms: Sequence[str],
    folded: Sequence[str],
    lo: int,
    hi: int,
    cues: Iterable[Pattern],
) -> bool:
    """True when any cue occurrence lies fully inside [lo, hi)."""
    if lo >= hi:
        return False
    for i in range(lo, hi):
        for cue in cues:
            if _match_at(forms, folded, i, hi, cue) is not None:
                return True
    return False


def classify_mention(
    mention: Mention,
    tokens: Sequence[Token],
    sentence: Sentence,
    cues: CueLexicon,
) -> LabelValue:
    """Window-limited cue scan; uncertainty outranks negation."""
    forms = [t.matchform for t in tokens]
    folded = [fold(f) for f in forms]
    s_start, s_end = sentence.token_range
    m_start, m_end = mention.token_span
    pre_lo = max(s_start, m_start - cues.pre_window)
    post_hi = min(s_end, m_end + cues.post_window)
    if _cue_in_range(forms, folded, pre_lo, m_start, cues.uncertainty) or _cue_in_range(
        forms, folded, m_end, post_hi, cues.uncertainty
    ):
        return LabelValue.UNCERTAIN
    if _cue_in_range(forms, folded, pre_lo, m_start, cues.pre_negation) or _cue_in_range(
        forms, folded, m_end, post_hi, cues.post_negation
    ):
        return LabelValue.NEGATIVE
    return LabelValue.POSITIVE


def _normalcy_matches(tokens: Sequence[Token], normalcy: NormalcyLexicon) -> bool:
    forms = [t.matchform for t in tokens]
    folded = [fold(f) for f in forms]
    n = len(forms)
    for pat in normalcy.patterns:
        for i in range(n):
            if _match_at(forms, folded, i, n, pat) is not None:
                return True
    return False


def aggregate(
    mentions: Sequence[Mention],
    normalcy: NormalcyLexicon,
    tokens: Sequence[Token],
) -> ReportLabels:
    """Combine classified mentions into one label per finding.

    Per finding: positive > uncertain > negative; no mentions means blank.
    NoFinding turns positive only when a normalcy pattern matches the report
    and no other finding came out positive or uncertain.
    """
    labels = {f: LabelValue.BLANK for f in FINDINGS}
    for finding in FINDINGS:
        polarities = {m.polarity for m in mentions if m.finding is finding}
        if not polarities:
            continue
        if LabelValue.POSITIVE in polarities:
            labels[finding] = LabelValue.POSITIVE
        elif LabelValue.UNCERTAIN in polarities:
            labels[finding] = LabelValue.UNCERTAIN
        else:
            labels[finding] = LabelValue.NEGATIVE
    any_present = any(
        v in (LabelValue.POSITIVE, LabelValue.UNCERTAIN)
        for f, v in labels.items()
        if not f.is_no_finding
    )
    if not any_present and _normalcy_matches(tokens, normalcy):
        labels[Finding.NO_FINDING] = LabelValue.POSITIVE
    return ReportLabels.from_mapping(labels)


def label_report(
    text: str,
    lexicon: Lexicon,
    config: NormalizerConfig = DEFAULT_NORMALIZER,
) -> ReportLabels:
    """tokenize -> split_sentences -> extract -> classify -> aggregate."""
    tokens = tokenize(text)
    sentences = split_sentences(tokens, config, text)
    raw_mentions = extract_mentions(tokens, sentences, lexicon.phrases)
    classified = [
        Mention(
            finding=m.finding,
            sentence_index=m.sentence_index,
            token_span=m.token_span,
            polarity=classify_mention(
                m, tokens, sentences[m.sentence_index], lexicon.cues
            ),
        )
        for m in raw_mentions
    ]
    return aggregate(classified, lexicon.normalcy, tokens)


# ---------------------------------------------------------------------------
# Lexicon files
# ---------------------------------------------------------------------------

_FINDING_BY_NAME = {f.value: f for f in FINDINGS}
_DATA_DIR = Path(__file__).parent / "data"
_DEFAULT_LEXICON_PATH = _DATA_DIR / "default_lexicon.json"
_default_lexicon_cache: Lexicon | None = None


def _compile_list(raws, context: str) -> tuple[Pattern, ...]:
    if not isinstance(raws, list) or not all(isinstance(r, str) for r in raws):
        raise ValueError(f"{context} must be a list of strings")
    try:
        return tuple(compile_pattern(raw) for raw in raws)
    except ValueError as exc:
        raise ValueError(f"{context}: {exc}") from exc


def load_lexicon(path: str | Path) -> Lexicon:
    """Load and compile a lexicon JSON file."""
    with open(path, encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: lexicon must be a JSON object")
    for key in ("phrases", "cues", "normalcy"):
        if key not in raw:
            raise ValueError(f"{path}: missing key {key!r}")
    phrase_map: dict[Finding, tuple[Pattern, ...]] = {}
    if not isinstance(raw["phrases"], dict):
        raise ValueError(f"{path}: phrases must be an object")
    for name, pats in raw["phrases"].items():
        finding = _FINDING_BY_NAME.get(name)
        if finding is None:
            raise ValueError(f"{path}: unknown finding {name!r}")
        phrase_map[finding] = _compile_list(pats, f"phrases[{name}]")
    cues_raw = raw["cues"]
    if not isinstance(cues_raw, dict):
        raise ValueError(f"{path}: cues must be an object")
    cues = CueLexicon(
        pre_negation=_compile_list(cues_raw.get("pre_negation", []), "pre_negation"),
        post_negation=_compile_list(cues_raw.get("post_negation", []), "post_negation"),
        uncertainty=_compile_list(cues_raw.get("uncertainty", []), "uncertainty"),
        pre_window=int(cues_raw.get("pre_window", 5)),
        post_window=int(cues_raw.get("post_window", 5)),
    )
    normalcy = NormalcyLexicon(patterns=_compile_list(raw["normalcy"], "normalcy"))
    return Lexicon(
        phrases=PhraseLexicon(patterns=phrase_map), cues=cues, normalcy=normalcy
    )


def default_lexicon() -> Lexicon:
    global _default_lexicon_cache
    if _default_lexicon_cache is None:
        _default_lexicon_cache = load_lexicon(_DEFAULT_LEXICON_PATH)
    return _default_lexicon_cache
