"""Bi-GRU + CRF topic tagger: training, windowed inference, spans and model files."""

from __future__ import annotations

import copy
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import crf as crf_ops
from . import neural
from ._validation import check_fraction, check_positive_int, check_same_length
from .crf import CrfParams
from .exceptions import IncompatibleModelError, InvalidInputError, TrainingDivergedError
from .gazetteer import is_numeric_token
from .neural import LOOKUP, PRECOMPUTED, EncoderConfig, GruParams
from .tokenizer import (
    DEFAULT_SCHEME,
    TaggedSequence,
    TagScheme,
    Vocabulary,
    boundaries_of,
    detokenize,
    is_continuation,
    split_words,
    tokenize_tagged,
)

logger = logging.getLogger(__name__)

LONG_CONTEXT = "long-context"
SHORT_CONTEXT = "short-context"
MERGED = "merged"

MODEL_MAGIC = b"TPSQ"
MODEL_VERSION = 1

DEFAULT_STRIDE = 32


@dataclass
class TaggerModel:
    encoder_cfg: EncoderConfig
    embedding: np.ndarray
    gru: GruParams
    crf: CrfParams
    scheme: TagScheme = DEFAULT_SCHEME
    seq_len: int = 64
    vocab_fingerprint: str = ""

    def __post_init__(self):
        if self.seq_len < 2:
            raise InvalidInputError(f"seq_len must be >= 2, got {self.seq_len}")
        if self.gru.n_tags != self.scheme.n_tags or self.crf.n_tags != self.scheme.n_tags:
            raise InvalidInputError("tag count of GRU head, CRF and scheme disagree")
        if self.embedding.shape[1] != self.encoder_cfg.embed_dim or self.gru.embed_dim != self.encoder_cfg.embed_dim:
            raise InvalidInputError("embedding width does not match the GRU input size")

    @classmethod
    def init(
        cls,
        vocab: Vocabulary | int,
        seq_len: int = 64,
        embed_dim: int = 128,
        hidden_dim: int = 256,
        scheme: TagScheme = DEFAULT_SCHEME,
        seed=0,
        embeddings_path=None,
        vocab_fingerprint: str | None = None,
    ) -> "TaggerModel":
        """Fresh model with Glorot-uniform weights and zero biases/CRF scores.

        ``embeddings_path`` switches to a frozen precomputed-embedding table;
        its width overrides ``embed_dim``.
        """
        rng = np.random.default_rng(seed)
        if isinstance(vocab, Vocabulary):
            vocab_size = len(vocab)
            fingerprint = vocab.fingerprint
        else:
            vocab_size = int(vocab)
            fingerprint = vocab_fingerprint or ""
        if embeddings_path is not None:
            table = neural.read_embedding_file(embeddings_path)
            cfg = EncoderConfig(PRECOMPUTED, table.shape[1], file_path=str(embeddings_path))
        else:
            cfg = EncoderConfig(LOOKUP, embed_dim, vocab_size=vocab_size)
            table = neural.glorot(rng, (vocab_size, embed_dim))
        gru = GruParams.init(cfg.embed_dim, hidden_dim, scheme.n_tags, rng)
        return cls(cfg, table, gru, CrfParams.zeros(scheme.n_tags), scheme, seq_len, fingerprint)

    @property
    def trainable_embedding(self) -> bool:
        return self.encoder_cfg.mode == LOOKUP

    def tensors(self) -> dict:
        out = {}
        if self.trainable_embedding:
            out["embedding"] = self.embedding
        out.update(self.gru.tensors())
        out.update(self.crf.tensors())
        return out


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    max_epochs: int = 16
    precision_stop: float = 0.70
    recall_stop: float = 0.90
    eval_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        check_fraction("learning_rate", self.learning_rate, 0.0, np.inf, low_open=True)
        check_positive_int("batch_size", self.batch_size)
        check_positive_int("max_epochs", self.max_epochs)
        # 0 is accepted so the stopping rule can be made vacuous
        check_fraction("precision_stop", self.precision_stop)
        check_fraction("recall_stop", self.recall_stop)
        check_fraction("eval_fraction", self.eval_fraction, low_open=True, high_open=True)


@dataclass(frozen=True, order=True)
class Span:
    word_start: int
    word_end: int
    text: str
    source: str = MERGED

    def __post_init__(self):
        if not self.word_start < self.word_end:
            raise InvalidInputError(f"empty span [{self.word_start}, {self.word_end})")


# -- forward / decode -------------------------------------------------------


def _emissions(model: TaggerModel, piece_ids):
    return neural.forward(piece_ids, model.encoder_cfg, model.embedding, model.gru)


def decode_window(piece_ids: Sequence[int], model: TaggerModel) -> list:
    """Viterbi tags for one window of at most ``model.seq_len`` pieces."""
    if len(piece_ids) == 0:
        raise InvalidInputError("cannot decode an empty window")
    if len(piece_ids) > model.seq_len:
        raise InvalidInputError(f"window of {len(piece_ids)} pieces exceeds seq_len {model.seq_len}")
    E, _ = _emissions(model, piece_ids)
    tags, _ = crf_ops.viterbi(E, model.crf)
    return tags


def token_precision_recall(gold: Iterable[Sequence[int]], pred: Iterable[Sequence[int]], scheme: TagScheme):
    """Token-level precision and recall of the non-outside tags (0.0 when undefined)."""
    outside = scheme.outside_id
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        g = np.asarray(g) != outside
        p = np.asarray(p) != outside
        tp += int(np.sum(g & p))
        fp += int(np.sum(~g & p))
        fn += int(np.sum(g & ~p))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall


# -- training ---------------------------------------------------------------


def record_gradients(model: TaggerModel, record: TaggedSequence):
    """CRF NLL of one record and gradients for every trainable tensor."""
    E, cache = _emissions(model, record.piece_ids)
    loss, g = crf_ops.nll_and_gradients(E, record.tags, model.crf)
    grads = neural.backward(g["E"].astype(E.dtype), cache)
    grads["crf.trans"] = g["trans"]
    grads["crf.start"] = g["start"]
    grads["crf.end"] = g["end"]
    return loss, grads


def _split(n, eval_fraction, rng):
    order = rng.permutation(n)
    if n < 2:
        return order, order
    n_eval = min(n - 1, max(1, int(round(eval_fraction * n))))
    return order[n_eval:], order[:n_eval]


def train(corpus: Iterable[TaggedSequence], cfg: TrainConfig, model: TaggerModel, metrics_path=None):
    """Mini-batch gradient descent on the mean CRF negative log-likelihood.

    After each epoch the held-out split is decoded and token-level precision
    and recall of the topic tag are measured; training stops as soon as both
    reach their thresholds, or after ``cfg.max_epochs``.

    Returns:
        ``(trained_model, metrics)`` where ``metrics`` holds one
        ``{epoch, mean_nll, precision, recall}`` dict per epoch. The input
        model is not modified.
    """
    records = list(corpus)
    if not records:
        raise InvalidInputError("training corpus is empty")
    for rec in records:
        if len(rec) == 0:
            raise InvalidInputError("training corpus contains an empty record")
        if len(rec) > model.seq_len:
            raise InvalidInputError(f"record of {len(rec)} pieces exceeds seq_len {model.seq_len}")
        model.scheme.check_ids(rec.tags)

    model = copy.deepcopy(model)
    rng = np.random.default_rng(cfg.seed)
    train_idx, eval_idx = _split(len(records), cfg.eval_fraction, rng)
    params = model.tensors()
    metrics = []
    log_fh = open(metrics_path, "w", encoding="utf-8", newline="\n") if metrics_path else None
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            total = 0.0
            perm = rng.permutation(train_idx)
            for b in range(0, len(perm), cfg.batch_size):
                batch = perm[b:b + cfg.batch_size]
                acc = {}
                emb_ids, emb_rows = [], []
                for i in batch:
                    loss, grads = record_gradients(model, records[i])
                    if not np.isfinite(loss):
                        raise TrainingDivergedError(epoch)
                    total += loss
                    if model.trainable_embedding:
                        emb_ids.append(grads["piece_ids"])
                        emb_rows.append(grads["X"])
                    for name in params:
                        if name == "embedding":
                            continue
                        g = grads[name]
                        if name in acc:
                            acc[name] += g
                        else:
                            acc[name] = g.astype(np.float64)
                step = cfg.learning_rate / len(batch)
                for name, g in acc.items():
                    params[name] -= (step * g).astype(params[name].dtype)
                if emb_ids:
                    rows = np.concatenate(emb_rows).astype(np.float64)
                    np.add.at(params["embedding"], np.concatenate(emb_ids), (-step * rows).astype(np.float32))
            mean_nll = total / len(train_idx)
            if not np.isfinite(mean_nll) or not all(np.all(np.isfinite(v)) for v in params.values()):
                raise TrainingDivergedError(epoch)
            gold = [records[i].tags for i in eval_idx]
            pred = [decode_window(records[i].piece_ids, model) for i in eval_idx]
            precision, recall = token_precision_recall(gold, pred, model.scheme)
            entry = {"epoch": epoch, "mean_nll": float(mean_nll), "precision": precision, "recall": recall}
            metrics.append(entry)
            logger.info("epoch %d: mean_nll=%.4f precision=%.4f recall=%.4f", epoch, mean_nll, precision, recall)
            if log_fh:
                log_fh.write(json.dumps(entry, sort_keys=True) + "\n")
                log_fh.flush()
            if precision >= cfg.precision_stop and recall >= cfg.recall_stop:
                break
    finally:
        if log_fh:
            log_fh.close()
    return model, metrics


# -- spans ------------------------------------------------------------------


def extract_spans(words: Sequence[str], tags: Sequence[int], scheme: TagScheme = DEFAULT_SCHEME, source=MERGED) -> list:
    """One span per maximal run of non-outside tags."""
    check_same_length(words=words, tags=tags)
    outside = scheme.outside_id
    spans = []
    start = None
    for i, tag in enumerate(list(tags) + [outside]):
        if tag != outside and start is None:
            start = i
        elif tag == outside and start is not None:
            spans.append(Span(start, i, " ".join(words[start:i]), source))
            start = None
    return spans


def _merge_intervals(intervals):
    """Union of half-open intervals; only strictly overlapping ones are joined."""
    merged = []
    for a, b in sorted(intervals):
        if merged and a < merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [tuple(m) for m in merged]


def window_starts(n: int, seq_len: int, stride: int) -> list:
    """Window offsets ``0, stride, 2*stride, ...`` plus a right-aligned final window."""
    if n <= seq_len:
        return [0]
    starts = list(range(0, n - seq_len + 1, stride))
    if starts[-1] != n - seq_len:
        starts.append(n - seq_len)
    return starts


def window_piece_runs(tags: Sequence[int], offset: int, is_boundary, outside: int) -> list:
    """Non-outside runs of one window as global piece intervals trimmed to whole words."""
    runs = []
    start = None
    for i, tag in enumerate(list(tags) + [outside]):
        if tag != outside and start is None:
            start = i
        elif tag == outside and start is not None:
            a, b = offset + start, offset + i
            while a < b and not is_boundary(a):
                a += 1
            while b > a and not is_boundary(b):
                b -= 1
            if a < b:
                runs.append((a, b))
            start = None
    return runs


def sliding_infer(
    pieces: Sequence[str],
    model: TaggerModel,
    stride: int | None = None,
    vocab: Vocabulary | None = None,
    piece_ids: Sequence[int] | None = None,
    source: str | None = None,
) -> set:
    """Decode overlapping windows over a long piece sequence and collect topic spans.

    Window runs are trimmed so they never start or end inside a word, mapped to
    word intervals, and overlapping intervals from different windows are
    merged. Either ``vocab`` or ``piece_ids`` must be given.
    """
    pieces = list(pieces)
    if not pieces:
        return set()
    if is_continuation(pieces[0]):
        raise InvalidInputError("piece sequence starts with a continuation piece")
    stride = model.seq_len // 2 if stride is None else stride
    if not 1 <= stride <= model.seq_len:
        raise InvalidInputError(f"stride must be in [1, {model.seq_len}], got {stride}")
    if piece_ids is None:
        if vocab is None:
            raise InvalidInputError("sliding_infer needs a vocabulary or piece ids")
        piece_ids = vocab.ids(pieces)
    check_same_length(pieces=pieces, piece_ids=piece_ids)
    if source is None:
        source = SHORT_CONTEXT if model.seq_len <= 64 else LONG_CONTEXT

    n = len(pieces)
    bounds = boundaries_of(pieces)
    boundary_set = set(bounds) | {n}
    word_of = np.cumsum([0 if is_continuation(p) else 1 for p in pieces]) - 1
    words = detokenize(pieces)
    outside = model.scheme.outside_id

    intervals = []
    for s in window_starts(n, model.seq_len, stride):
        tags = decode_window(piece_ids[s:s + model.seq_len], model)
        for a, b in window_piece_runs(tags, s, boundary_set.__contains__, outside):
            intervals.append((int(word_of[a]), int(word_of[b - 1]) + 1))
    return {Span(a, b, " ".join(words[a:b]), source) for a, b in _merge_intervals(intervals)}


def dual_union(spans_long: Iterable[Span], spans_short: Iterable[Span]) -> set:
    """Union two span sets over the same text, merging overlapping word intervals.

    A merged group keeps its source when all members share it, otherwise it
    becomes ``"merged"``. Texts are rebuilt word by word from the members.
    """
    spans = sorted(set(spans_long) | set(spans_short))
    out = set()
    group = []
    group_end = None

    def flush():
        words = {}
        for sp in group:
            for k, w in enumerate(sp.text.split(" ")):
                words.setdefault(sp.word_start + k, w)
        a = group[0].word_start
        b = max(sp.word_end for sp in group)
        sources = {sp.source for sp in group}
        src = sources.pop() if len(sources) == 1 else MERGED
        out.add(Span(a, b, " ".join(words[i] for i in range(a, b)), src))

    for sp in spans:
        if group and sp.word_start < group_end:
            group.append(sp)
            group_end = max(group_end, sp.word_end)
        else:
            if group:
                flush()
            group = [sp]
            group_end = sp.word_end
    if group:
        flush()
    return out


def filter_numeric_spans(spans: Iterable[Span]) -> set:
    """Drop spans made only of numbers (and punctuation between them)."""
    kept = set()
    for sp in spans:
        words = sp.text.split(" ")
        numeric = [is_numeric_token(w) for w in words]
        only_punct = [not any(ch.isalnum() for ch in w) for w in words]
        if any(numeric) and all(n or p for n, p in zip(numeric, only_punct)):
            continue
        kept.add(sp)
    return kept


# -- serialization ----------------------------------------------------------


def _metadata(model: TaggerModel) -> dict:
    cfg = model.encoder_cfg
    return {
        "version": MODEL_VERSION,
        "scheme": {"labels": list(model.scheme.labels), "outside_label": model.scheme.outside_label},
        "encoder": {
            "mode": cfg.mode,
            "embed_dim": cfg.embed_dim,
            "vocab_size": cfg.vocab_size,
            "file_path": cfg.file_path,
        },
        "hidden_dim": model.gru.hidden_dim,
        "n_tags": model.scheme.n_tags,
        "seq_len": model.seq_len,
        "vocab_fingerprint": model.vocab_fingerprint,
    }


def save_model(model: TaggerModel, path) -> None:
    """Write ``TPSQ`` magic, version, JSON metadata and named little-endian f32 tensors."""
    meta = json.dumps(_metadata(model), sort_keys=True).encode("utf-8")
    tensors = model.tensors()
    parts = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(meta)), meta, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        bname = name.encode("utf-8")
        parts.append(struct.pack("<I", len(bname)) + bname)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise IncompatibleModelError(f"{self.path}: truncated model file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_model(path, vocab: Vocabulary | None = None, expected_fingerprint: str | None = None) -> TaggerModel:
    """Read a model written by :func:`save_model`.

    Raises:
        IncompatibleModelError: on bad magic, unsupported version, malformed
            payload, or a vocabulary fingerprint different from ``vocab``'s.
    """
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != MODEL_MAGIC:
        raise IncompatibleModelError(f"{path}: bad magic, not a tagger model")
    version = r.u32()
    if version != MODEL_VERSION:
        raise IncompatibleModelError(f"{path}: unsupported model version {version}")
    try:
        meta = json.loads(r.take(r.u32()).decode("utf-8"))
        scheme = TagScheme(tuple(meta["scheme"]["labels"]), meta["scheme"]["outside_label"])
        enc = meta["encoder"]
        seq_len = int(meta["seq_len"])
        fingerprint = meta["vocab_fingerprint"]
    except (ValueError, KeyError, TypeError, InvalidInputError) as exc:
        raise IncompatibleModelError(f"{path}: corrupt metadata ({exc})") from None
    if meta.get("version") != version:
        raise IncompatibleModelError(f"{path}: metadata version does not match header")
    if expected_fingerprint is None and vocab is not None:
        expected_fingerprint = vocab.fingerprint
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise IncompatibleModelError(f"{path}: model was trained with a different vocabulary")

    tensors = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(r.data):
        raise IncompatibleModelError(f"{path}: trailing bytes after tensors")

    try:
        if enc["mode"] == PRECOMPUTED:
            file_path = Path(enc["file_path"])
            if not file_path.is_absolute() and not file_path.exists():
                file_path = path.parent / file_path
            cfg = EncoderConfig(PRECOMPUTED, enc["embed_dim"], file_path=str(enc["file_path"]))
            table = neural.read_embedding_file(file_path)
        else:
            cfg = EncoderConfig(LOOKUP, enc["embed_dim"], vocab_size=enc["vocab_size"])
            table = tensors["embedding"]
        return TaggerModel(
            cfg,
            table,
            GruParams.from_tensors(tensors),
            CrfParams.from_tensors(tensors),
            scheme,
            seq_len,
            fingerprint,
        )
    except (KeyError, InvalidInputError) as exc:
        raise IncompatibleModelError(f"{path}: inconsistent model payload ({exc})") from None


# -- estimator --------------------------------------------------------------


def tag_text(text: str, models: Sequence[TaggerModel], vocab: Vocabulary, stride: int | None = None) -> list:
    """Topic spans of raw text under one or more models, unioned and number-filtered."""
    words = split_words(text)
    if not words:
        return []
    seq = tokenize_tagged(words, [0] * len(words), vocab)
    result = set()
    for m in models:
        s = None if stride is None else min(stride, m.seq_len)
        result = dual_union(result, sliding_infer(seq.pieces, m, s, piece_ids=seq.piece_ids))
    return sorted(filter_numeric_spans(result))


class TopicTagger(BaseEstimator):
    """Scikit-learn style wrapper around :class:`TaggerModel` and :func:`train`.

    ``fit`` takes a list of :class:`TaggedSequence` records, or piece-id
    sequences together with per-piece tag sequences as ``y``. ``predict``
    returns per-piece tags; ``extract`` goes from raw text to topic spans.
    """

    def __init__(
        self,
        vocab=None,
        seq_len=64,
        embed_dim=128,
        hidden_dim=256,
        embeddings_path=None,
        learning_rate=0.05,
        batch_size=32,
        max_epochs=16,
        precision_stop=0.70,
        recall_stop=0.90,
        eval_fraction=0.1,
        stride=DEFAULT_STRIDE,
        seed=0,
    ):
        self.vocab = vocab
        self.seq_len = seq_len
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.embeddings_path = embeddings_path
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.precision_stop = precision_stop
        self.recall_stop = recall_stop
        self.eval_fraction = eval_fraction
        self.stride = stride
        self.seed = seed

    def _records(self, X, y=None):
        X = list(X)
        if y is None:
            if not all(isinstance(x, TaggedSequence) for x in X):
                raise InvalidInputError("fit needs TaggedSequence records or an explicit y")
            return X
        y = list(y)
        check_same_length(X=X, y=y)
        out = []
        for ids, tags in zip(X, y):
            ids = [int(i) for i in ids]
            check_same_length(piece_ids=ids, tags=tags)
            pieces = [self.vocab.piece_of(i) for i in ids] if self.vocab is not None else [""] * len(ids)
            out.append(TaggedSequence(pieces, ids, [int(t) for t in tags], boundaries_of(pieces)))
        return out

    def fit(self, X, y=None):
        records = self._records(X, y)
        if self.vocab is not None:
            vocab_arg = self.vocab
        else:
            if not records:
                raise InvalidInputError("training corpus is empty")
            vocab_arg = 1 + max(max(r.piece_ids) for r in records if len(r))
        model = TaggerModel.init(
            vocab_arg,
            seq_len=self.seq_len,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            seed=self.seed,
            embeddings_path=self.embeddings_path,
        )
        cfg = TrainConfig(
            self.learning_rate,
            self.batch_size,
            self.max_epochs,
            self.precision_stop,
            self.recall_stop,
            self.eval_fraction,
            self.seed,
        )
        self.model_, self.history_ = train(records, cfg, model)
        self.n_epochs_ = len(self.history_)
        return self

    def _decode(self, ids, boundaries):
        L = self.model_.seq_len
        if len(ids) <= L:
            return decode_window(ids, self.model_)
        cuts = [b for b in boundaries if b > 0] + [len(ids)]
        tags, start = [], 0
        while start < len(ids):
            end = max((c for c in cuts if start < c <= start + L), default=min(start + L, len(ids)))
            tags.extend(decode_window(ids[start:end], self.model_))
            start = end
        return tags

    def predict(self, X):
        """Per-piece tag ids; sequences longer than ``seq_len`` are decoded in word-aligned chunks."""
        check_is_fitted(self, "model_")
        out = []
        for x in X:
            if isinstance(x, TaggedSequence):
                ids, bounds = x.piece_ids, x.word_boundaries
            else:
                ids = [int(i) for i in x]
                if self.vocab is not None:
                    bounds = boundaries_of([self.vocab.piece_of(i) for i in ids])
                else:
                    bounds = list(range(len(ids)))
            out.append(self._decode(ids, bounds) if ids else [])
        return out

    def score(self, X, y=None):
        """Token-level F1 of the topic tag."""
        records = self._records(X, y)
        pred = self.predict(records)
        p, r = token_precision_recall([rec.tags for rec in records], pred, self.model_.scheme)
        return 2 * p * r / (p + r) if p + r else 0.0

    def extract(self, texts):
        """Topic spans for each raw text."""
        check_is_fitted(self, "model_")
        if self.vocab is None:
            raise InvalidInputError("extract needs the estimator's vocab")
        return [tag_text(t, [self.model_], self.vocab, self.stride) for t in texts]
