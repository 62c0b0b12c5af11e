"""Title cleaning and distant labeling of text by gazetteer lookup."""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidInputError
from .tokenizer import DEFAULT_SCHEME, TagScheme, split_words

logger = logging.getLogger(__name__)

# letter/digit mixtures such as "x00", "lga-775", "i7-8700"
DEFAULT_TECHNICAL_PATTERNS = (r"(?=[a-z0-9\-]*\d)(?=[a-z0-9\-]*[a-z])[a-z0-9\-]{1,8}",)

_NUMERIC = re.compile(r"\d+(?:[.,\-]\d+)*")

RULES = ("empty", "common_word", "numeric", "technical", "single_word", "ngram_range", "duplicate")


def is_numeric_token(token: str) -> bool:
    return _NUMERIC.fullmatch(token) is not None


def read_lines(path) -> list:
    """Read a one-entry-per-line UTF-8 file, dropping blank lines."""
    text = Path(path).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


def normalize_title(title: str) -> str:
    return " ".join(split_words(title.replace("_", " ")))


@dataclass
class CleaningConfig:
    """Parameters of the title-cleaning rules.

    ``any_numeric_token`` switches the numeric rule from "every token is a
    number" to "some token is a number", which would also drop titles such as
    "article 370".
    """

    common_words: frozenset = field(default_factory=lambda: frozenset(ENGLISH_STOP_WORDS))
    location_whitelist: frozenset = frozenset()
    technical_patterns: tuple = DEFAULT_TECHNICAL_PATTERNS
    keep_ngram_range: tuple = (1, 5)
    any_numeric_token: bool = False
    use_common_words: bool = True

    def __post_init__(self):
        self.common_words = frozenset(w.lower() for w in self.common_words)
        self.location_whitelist = frozenset(normalize_title(w) for w in self.location_whitelist)
        self.technical_patterns = tuple(self.technical_patterns)
        lo, hi = self.keep_ngram_range
        if lo < 1 or hi < lo:
            raise InvalidInputError(f"invalid keep_ngram_range {self.keep_ngram_range}")
        self.keep_ngram_range = (int(lo), int(hi))
        if self.use_common_words and not self.common_words:
            raise InvalidInputError("common-word rule enabled with an empty stoplist")
        self._compiled = [re.compile(p) for p in self.technical_patterns]

    def is_technical(self, token: str) -> bool:
        return any(p.fullmatch(token) for p in self._compiled)


class Gazetteer:
    """Cleaned, lower-cased title set indexed for longest-match lookup."""

    def __init__(self, titles: Iterable[str] = ()):
        normalized = {normalize_title(t) for t in titles}
        normalized.discard("")
        self.titles = frozenset(normalized)
        self._tuples = frozenset(tuple(t.split(" ")) for t in self.titles)
        index = {}
        for words in self._tuples:
            index.setdefault(words[0], set()).add((words, len(words)))
        self.index = index
        self.max_len = max((len(w) for w in self._tuples), default=0)
        # per first word, candidate lengths longest first
        self._lengths = {
            first: sorted({n for _, n in entries}, reverse=True) for first, entries in index.items()
        }

    def __len__(self):
        return len(self.titles)

    def __contains__(self, title):
        return normalize_title(title) in self.titles

    def __iter__(self):
        return iter(sorted(self.titles))

    def __repr__(self):
        return f"Gazetteer(n_titles={len(self)}, max_len={self.max_len})"

    def longest_match(self, words: Sequence[str], start: int) -> int:
        """Length in words of the longest title starting at ``start`` (0 if none)."""
        for n in self._lengths.get(words[start], ()):
            if start + n <= len(words) and tuple(words[start:start + n]) in self._tuples:
                return n
        return 0

    @classmethod
    def load(cls, path) -> "Gazetteer":
        return cls(read_lines(path))

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in sorted(self.titles)), encoding="utf-8")


def _rejection_rule(title: str, config: CleaningConfig):
    raw_tokens = title.replace("_", " ").lower().split()
    words = split_words(title.replace("_", " "))
    if not words:
        return "empty"
    joined = " ".join(words)
    if config.use_common_words and (joined in config.common_words or " ".join(raw_tokens) in config.common_words):
        return "common_word"
    for tokens in (raw_tokens, words):
        if config.any_numeric_token:
            numeric = any(is_numeric_token(t) for t in tokens)
        else:
            numeric = all(is_numeric_token(t) for t in tokens)
        if numeric:
            return "numeric"
    if any(config.is_technical(t) for t in raw_tokens) or any(config.is_technical(t) for t in words):
        return "technical"
    if len(words) == 1 and joined not in config.location_whitelist:
        return "single_word"
    lo, hi = config.keep_ngram_range
    if not lo <= len(words) <= hi:
        return "ngram_range"
    return None


def clean_titles_with_stats(raw_titles: Iterable[str], config: CleaningConfig | None = None):
    """Clean raw titles and count removals per rule.

    Rules are checked in the order of ``RULES``; each rejected title is charged
    to the first rule it violates.

    Returns:
        ``(Gazetteer, stats)`` where ``stats`` maps ``"input"``, ``"kept"`` and
        every rule name to a count.
    """
    config = config or CleaningConfig()
    stats = Counter({rule: 0 for rule in RULES})
    kept = set()
    n_input = 0
    for title in raw_titles:
        n_input += 1
        rule = _rejection_rule(title, config)
        if rule is None:
            norm = normalize_title(title)
            if norm in kept:
                rule = "duplicate"
            else:
                kept.add(norm)
        if rule is not None:
            stats[rule] += 1
    out = dict(stats)
    out["input"] = n_input
    out["kept"] = len(kept)
    return Gazetteer(kept), out


def clean_titles(raw_titles: Iterable[str], config: CleaningConfig | None = None) -> Gazetteer:
    """Filter a raw title list down to a topic gazetteer.

    Removes titles equal to a common word, numeric titles, titles containing
    part/model numbers, 1-word titles that are not whitelisted locations, and
    titles outside ``config.keep_ngram_range``. Survivors are lower-cased,
    punctuation-split and deduplicated.
    """
    return clean_titles_with_stats(raw_titles, config)[0]


def weak_label(words: Sequence[str], gaz: Gazetteer, scheme: TagScheme = DEFAULT_SCHEME) -> list:
    """Tag words by leftmost-longest gazetteer matching.

    Every word of a matched title gets the first non-outside tag of ``scheme``;
    all other words get the outside tag.
    """
    outside = scheme.outside_id
    inside = next(i for i, lab in enumerate(scheme.labels) if lab != scheme.outside_label)
    tags = [outside] * len(words)
    i = 0
    while i < len(words):
        n = gaz.longest_match(words, i)
        if n:
            tags[i:i + n] = [inside] * n
            i += n
        else:
            i += 1
    return tags


class GazetteerLabeler(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` cleans raw titles, ``transform`` labels sentences.

    Args:
        config: cleaning rules; ``None`` uses the defaults.
        clean: if False, titles passed to ``fit`` are used as-is.
        scheme: tag scheme for the emitted tag ids.
    """

    def __init__(self, config=None, clean=True, scheme=DEFAULT_SCHEME):
        self.config = config
        self.clean = clean
        self.scheme = scheme

    def fit(self, X, y=None):
        titles = list(X)
        if self.clean:
            self.gazetteer_, self.cleaning_stats_ = clean_titles_with_stats(titles, self.config)
        else:
            self.gazetteer_ = Gazetteer(titles)
            self.cleaning_stats_ = None
        return self

    def transform(self, X):
        check_is_fitted(self, "gazetteer_")
        out = []
        for sentence in X:
            words = split_words(sentence) if isinstance(sentence, str) else list(sentence)
            out.append(weak_label(words, self.gazetteer_, self.scheme))
        return out
