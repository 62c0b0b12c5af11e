"""Document reduction (near-duplicate removal, n-gram coverage) and parallel-corpus output."""

from __future__ import annotations

import hashlib
import heapq
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import InvalidInputError
from .gazetteer import Gazetteer, weak_label
from .tokenizer import (
    DEFAULT_SCHEME,
    TaggedSequence,
    TagScheme,
    Vocabulary,
    boundaries_of,
    split_words,
    tokenize_tagged,
)

logger = logging.getLogger(__name__)

DEFAULT_DIM = 1024
DEFAULT_THRESHOLD = 0.9
DEFAULT_NGRAM_RANGE = (2, 5)
# slack for float round-off when comparing cosines against the threshold
_SIM_TOL = 1e-9


@dataclass
class Document:
    id: str
    text: str
    words: list = field(default=None)
    vector: np.ndarray | None = None

    def __post_init__(self):
        if self.words is None:
            self.words = split_words(self.text)


def _hash_word(word: str, dim: int):
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    h = int.from_bytes(digest, "little")
    return h % dim, (1.0 if (h >> 63) & 1 else -1.0)


def embed_document(doc, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Signed feature-hashed bag of words, L2-normalized.

    Accepts a :class:`Document` or a word list.
    """
    words = doc.words if isinstance(doc, Document) else list(doc)
    if dim < 1:
        raise InvalidInputError(f"dimension must be positive, got {dim}")
    if not words:
        raise InvalidInputError("cannot embed an empty document")
    vec = np.zeros(dim, dtype=np.float64)
    for word in words:
        idx, sign = _hash_word(word, dim)
        vec[idx] += sign
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        # every word cancelled out through sign collisions; fall back to unsigned counts
        for word in words:
            vec[_hash_word(word, dim)[0]] += 1.0
        norm = np.linalg.norm(vec)
    return vec / norm


def dedup(docs: Sequence[Document], threshold: float = DEFAULT_THRESHOLD) -> list:
    """Drop near-duplicates, keeping the earliest document of each group.

    A document is dropped when its cosine similarity to an already kept
    document is at least ``threshold``.
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"threshold must be in [0, 1], got {threshold}")
    kept = []
    kept_vecs = []
    for doc in docs:
        if doc.vector is None:
            raise InvalidInputError(f"document {doc.id!r} has no vector")
        if kept_vecs:
            sims = np.stack(kept_vecs) @ doc.vector
            if sims.max() >= threshold - _SIM_TOL:
                continue
        kept.append(doc)
        kept_vecs.append(doc.vector)
    return kept


def doc_ngrams(words: Sequence[str], ngram_range=DEFAULT_NGRAM_RANGE) -> set:
    lo, hi = ngram_range
    out = set()
    for n in range(lo, hi + 1):
        for i in range(len(words) - n + 1):
            out.add(tuple(words[i:i + n]))
    return out


def select_min_cover(docs: Sequence[Document], ngram_range=DEFAULT_NGRAM_RANGE) -> list:
    """Greedy set cover of the corpus n-grams.

    Repeatedly picks the document adding the most uncovered n-grams, ties going
    to the earlier document, until every n-gram of the corpus is covered.
    Selected documents are returned in input order.
    """
    if not docs:
        raise InvalidInputError("no documents to select from")
    lo, hi = ngram_range
    if lo < 1 or hi < lo:
        raise InvalidInputError(f"invalid ngram range {ngram_range}")
    sets = [doc_ngrams(d.words, ngram_range) for d in docs]
    covered = set()
    # lazy greedy: gains only shrink, so a re-checked top entry that kept its key is optimal
    heap = [(-len(s), i) for i, s in enumerate(sets) if s]
    heapq.heapify(heap)
    chosen = []
    while heap:
        neg_gain, i = heapq.heappop(heap)
        gain = len(sets[i] - covered)
        if gain == 0:
            continue
        if gain == -neg_gain:
            chosen.append(i)
            covered |= sets[i]
        else:
            heapq.heappush(heap, (-gain, i))
    return [docs[i] for i in sorted(chosen)]


def chunk_sequence(seq: TaggedSequence, seq_len: int) -> list:
    """Split a tagged sequence into chunks of at most ``seq_len`` pieces at word boundaries.

    Returns ``None`` if a single word is longer than ``seq_len`` pieces.
    """
    if seq_len < 1:
        raise InvalidInputError(f"seq_len must be positive, got {seq_len}")
    bounds = list(seq.word_boundaries) + [len(seq)]
    chunks = []
    start = 0
    w = 0
    while start < len(seq):
        end = start
        while w + 1 < len(bounds) and bounds[w + 1] - start <= seq_len:
            w += 1
            end = bounds[w]
        if end == start:
            return None
        chunks.append(
            TaggedSequence(
                seq.pieces[start:end],
                seq.piece_ids[start:end],
                seq.tags[start:end],
                boundaries_of(seq.pieces[start:end]),
                doc_id=seq.doc_id,
            )
        )
        start = end
    return chunks


def emit_parallel_corpus(
    docs: Iterable[Document],
    gaz: Gazetteer,
    vocab: Vocabulary,
    scheme: TagScheme = DEFAULT_SCHEME,
    seq_len: int = 512,
) -> Iterator[TaggedSequence]:
    """Label, tokenize and chunk each document, yielding one record per chunk."""
    for doc in docs:
        if not doc.words:
            continue
        tags = weak_label(doc.words, gaz, scheme)
        seq = tokenize_tagged(doc.words, tags, vocab, scheme)
        seq.doc_id = doc.id
        chunks = chunk_sequence(seq, seq_len)
        if chunks is None:
            logger.warning("skipping document %s: a word exceeds %d pieces", doc.id, seq_len)
            continue
        yield from chunks


class NearDuplicateFilter(TransformerMixin, BaseEstimator):
    """Embed documents and drop near-duplicates; stateless between calls."""

    def __init__(self, threshold=DEFAULT_THRESHOLD, dim=DEFAULT_DIM):
        self.threshold = threshold
        self.dim = dim

    def fit(self, X, y=None):
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidInputError(f"threshold must be in [0, 1], got {self.threshold}")
        return self

    def transform(self, X):
        docs = []
        for doc in X:
            if doc.vector is None or doc.vector.shape != (self.dim,):
                doc.vector = embed_document(doc, self.dim)
            docs.append(doc)
        return dedup(docs, self.threshold)


# -- file formats -----------------------------------------------------------


def load_documents(path) -> list:
    """Load documents from a directory of ``*.txt`` files or a JSON-lines file of ``{id, text}``."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.txt"))
        return [Document(f.stem, f.read_text(encoding="utf-8")) for f in files]
    docs = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc_id = rec.get("id", rec.get("doc_id"))
                text = rec["text"]
            except (ValueError, KeyError, AttributeError):
                raise InvalidInputError(f"{path}:{lineno}: expected an {{id, text}} record") from None
            if doc_id is None:
                raise InvalidInputError(f"{path}:{lineno}: record has no id")
            docs.append(Document(str(doc_id), text))
    return docs


def write_conll(records: Iterable[TaggedSequence], path, scheme: TagScheme = DEFAULT_SCHEME) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            for piece, tag in zip(rec.pieces, rec.tags):
                fh.write(f"{piece}\t{scheme.labels[tag]}\n")
            fh.write("\n")
            n += 1
    return n


def _make_record(pieces, labels, vocab, scheme, where):
    if pieces and pieces[0].startswith("##"):
        raise InvalidInputError(f"{where}: record starts with a continuation piece")
    tags = [scheme.id_of(lab) for lab in labels]
    return TaggedSequence(list(pieces), vocab.ids(pieces), tags, boundaries_of(pieces))


def read_conll(path, vocab: Vocabulary, scheme: TagScheme = DEFAULT_SCHEME) -> list:
    records = []
    pieces, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                if pieces:
                    records.append(_make_record(pieces, labels, vocab, scheme, f"{path}:{lineno}"))
                    pieces, labels = [], []
                continue
            try:
                piece, label = line.split("\t")
            except ValueError:
                raise InvalidInputError(f"{path}:{lineno}: expected 'piece<TAB>tag'") from None
            pieces.append(piece)
            labels.append(label)
    if pieces:
        records.append(_make_record(pieces, labels, vocab, scheme, str(path)))
    return records


def write_two_line(records: Iterable[TaggedSequence], path, scheme: TagScheme = DEFAULT_SCHEME) -> int:
    """Write records as a space-joined pieces line followed by a space-joined tags line."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(" ".join(rec.pieces) + "\n")
            fh.write(" ".join(scheme.labels[t] for t in rec.tags) + "\n")
            n += 1
    return n


def read_two_line(path, vocab: Vocabulary, scheme: TagScheme = DEFAULT_SCHEME) -> list:
    lines = [line for line in Path(path).read_text(encoding="utf-8").split("\n") if line]
    if len(lines) % 2:
        raise InvalidInputError(f"{path}: odd number of lines in two-line corpus")
    records = []
    for k in range(0, len(lines), 2):
        pieces, labels = lines[k].split(" "), lines[k + 1].split(" ")
        if len(pieces) != len(labels):
            raise InvalidInputError(f"{path}:{k + 1}: {len(pieces)} pieces but {len(labels)} tags")
        records.append(_make_record(pieces, labels, vocab, scheme, f"{path}:{k + 1}"))
    return records


def manifest_entries(records: Iterable[TaggedSequence]) -> list:
    """Per-document ``{id, n_records, n_pieces}`` in first-seen order."""
    entries = {}
    for rec in records:
        e = entries.setdefault(rec.doc_id, {"id": rec.doc_id, "n_records": 0, "n_pieces": 0})
        e["n_records"] += 1
        e["n_pieces"] += len(rec)
    return list(entries.values())


def write_manifest(entries: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(json.dumps(e, sort_keys=True) + "\n")
