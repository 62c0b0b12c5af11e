"""Greedy longest-match-first subword tokenization with tag propagation.

Words are split into a root piece followed by continuation pieces that carry
a leading ``##`` marker. When a word is tokenized together with its tag, the
tag is repeated once per piece so that the piece and tag sequences stay the
same length::

    sexual harassment      ->  sexual har ##ass ##ment
    NER    NER             ->  NER    NER NER   NER
"""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .exceptions import InvalidInputError

CONTINUATION = "##"
DEFAULT_UNK = "[UNK]"
MAX_WORD_CHARS = 100

_UPPER_ASCII = re.compile(r"[A-Z]")


@dataclass(frozen=True)
class TagScheme:
    """Ordered tag labels plus the label used for non-topic tokens."""

    labels: tuple = ("0", "NER")
    outside_label: str = "0"

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise InvalidInputError(f"duplicate tag labels: {self.labels}")
        if self.outside_label not in self.labels:
            raise InvalidInputError(f"outside label {self.outside_label!r} not in {self.labels}")

    @property
    def outside_id(self) -> int:
        return self.labels.index(self.outside_label)

    @property
    def n_tags(self) -> int:
        return len(self.labels)

    def id_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidInputError(f"unknown tag label {label!r}") from None

    def label_of(self, tag_id: int) -> str:
        self.check_ids([tag_id])
        return self.labels[tag_id]

    def check_ids(self, tag_ids: Iterable[int]) -> None:
        n = len(self.labels)
        for t in tag_ids:
            if not 0 <= int(t) < n:
                raise InvalidInputError(f"tag id {t} out of range for {n} labels")


DEFAULT_SCHEME = TagScheme()


class Vocabulary:
    """Immutable subword inventory mapping pieces to dense integer ids."""

    def __init__(self, pieces: Sequence[str], unk_piece: str = DEFAULT_UNK):
        pieces = tuple(pieces)
        piece_to_id = {}
        for i, p in enumerate(pieces):
            if not p or p.strip() != p or any(c.isspace() for c in p):
                raise InvalidInputError(f"invalid vocabulary piece at line {i}: {p!r}")
            if p == CONTINUATION:
                raise InvalidInputError("bare continuation marker is not a piece")
            if p in piece_to_id:
                raise InvalidInputError(f"duplicate vocabulary piece {p!r}")
            piece_to_id[p] = i
        if unk_piece not in piece_to_id:
            raise InvalidInputError(f"unknown piece {unk_piece!r} missing from vocabulary")
        self._pieces = pieces
        self._piece_to_id = piece_to_id
        self.unk_piece = unk_piece

    @property
    def pieces(self) -> tuple:
        return self._pieces

    @property
    def piece_to_id(self) -> dict:
        return dict(self._piece_to_id)

    @property
    def unk_id(self) -> int:
        return self._piece_to_id[self.unk_piece]

    def __len__(self):
        return len(self._pieces)

    def __contains__(self, piece):
        return piece in self._piece_to_id

    def __eq__(self, other):
        return (
            isinstance(other, Vocabulary)
            and self._pieces == other._pieces
            and self.unk_piece == other.unk_piece
        )

    def __hash__(self):
        return hash((self._pieces, self.unk_piece))

    def __repr__(self):
        return f"Vocabulary(n_pieces={len(self)}, unk_piece={self.unk_piece!r})"

    def id_of(self, piece: str) -> int:
        return self._piece_to_id.get(piece, self.unk_id)

    def ids(self, pieces: Iterable[str]) -> list:
        return [self.id_of(p) for p in pieces]

    def piece_of(self, piece_id: int) -> str:
        if not 0 <= piece_id < len(self._pieces):
            raise InvalidInputError(f"piece id {piece_id} out of range")
        return self._pieces[piece_id]

    @property
    def fingerprint(self) -> str:
        """SHA-256 over the serialized inventory; identifies the vocabulary a model was trained on."""
        h = hashlib.sha256()
        h.update(self.unk_piece.encode("utf-8") + b"\0")
        h.update("\n".join(self._pieces).encode("utf-8"))
        return h.hexdigest()

    @classmethod
    def load(cls, path, unk_piece: str = DEFAULT_UNK) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines, unk_piece=unk_piece)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self._pieces) + "\n", encoding="utf-8")


def is_continuation(piece: str) -> bool:
    return piece.startswith(CONTINUATION)


def _is_punctuation(ch: str) -> bool:
    cp = ord(ch)
    # ASCII symbols such as "$" and "^" are not Unicode "P*" but are split all the same.
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def split_words(text: str) -> list:
    """Normalize raw text into lower-cased words with punctuation split out.

    NFC-normalizes, lower-cases, and makes every punctuation character a word
    of its own, then splits on whitespace.
    """
    text = unicodedata.normalize("NFC", text).lower()
    words = []
    for chunk in text.split():
        current = []
        for ch in chunk:
            if _is_punctuation(ch):
                if current:
                    words.append("".join(current))
                    current = []
                words.append(ch)
            else:
                current.append(ch)
        if current:
            words.append("".join(current))
    return words


def tokenize_word(word: str, vocab: Vocabulary) -> list:
    """Split one word into pieces by greedy longest-prefix matching.

    Falls back to the single unknown piece when some suffix of the word has no
    matching piece, or when the word is longer than ``MAX_WORD_CHARS``.

    Raises:
        InvalidInputError: if the word is empty, contains whitespace or
            upper-case ASCII.
    """
    if not word:
        raise InvalidInputError("cannot tokenize an empty word")
    if any(c.isspace() for c in word):
        raise InvalidInputError(f"word contains whitespace: {word!r}")
    if _UPPER_ASCII.search(word):
        raise InvalidInputError(f"word must be lower-cased: {word!r}")
    if len(word) > MAX_WORD_CHARS:
        return [vocab.unk_piece]

    pieces = []
    start = 0
    n = len(word)
    while start < n:
        end = n
        match = None
        while end > start:
            candidate = word[start:end]
            if start > 0:
                candidate = CONTINUATION + candidate
            if candidate in vocab:
                match = candidate
                break
            end -= 1
        if match is None:
            return [vocab.unk_piece]
        pieces.append(match)
        start = end
    return pieces


@dataclass
class TaggedSequence:
    """Aligned pieces, piece ids and tag ids for one sentence or chunk."""

    pieces: list
    piece_ids: list
    tags: list
    word_boundaries: list = field(default_factory=list)
    doc_id: str | None = None

    def __post_init__(self):
        if not len(self.pieces) == len(self.piece_ids) == len(self.tags):
            raise InvalidInputError(
                f"length mismatch: {len(self.pieces)} pieces, {len(self.piece_ids)} ids, "
                f"{len(self.tags)} tags"
            )

    def __len__(self):
        return len(self.pieces)

    @property
    def words(self) -> list:
        return detokenize(self.pieces)

    def word_tags(self) -> list:
        return [self.tags[b] for b in self.word_boundaries]


def boundaries_of(pieces: Sequence[str]) -> list:
    return [i for i, p in enumerate(pieces) if not is_continuation(p)]


def tokenize_tagged(
    words: Sequence[str],
    word_tags: Sequence[int],
    vocab: Vocabulary,
    scheme: TagScheme = DEFAULT_SCHEME,
) -> TaggedSequence:
    """Tokenize a word sequence, repeating each word's tag over its pieces."""
    if len(words) != len(word_tags):
        raise InvalidInputError(f"{len(words)} words but {len(word_tags)} tags")
    scheme.check_ids(word_tags)
    pieces, tags, boundaries = [], [], []
    for word, tag in zip(words, word_tags):
        word_pieces = tokenize_word(word, vocab)
        boundaries.append(len(pieces))
        pieces.extend(word_pieces)
        tags.extend([int(tag)] * len(word_pieces))
    return TaggedSequence(pieces, vocab.ids(pieces), tags, boundaries)


def detokenize(pieces: Sequence[str]) -> list:
    """Join continuation pieces back onto their root pieces.

    Raises:
        InvalidInputError: if the first piece is a continuation piece.
    """
    words = []
    for piece in pieces:
        if is_continuation(piece):
            if not words:
                raise InvalidInputError(f"sequence starts with continuation piece {piece!r}")
            words[-1] += piece[len(CONTINUATION):]
        else:
            words.append(piece)
    return words
