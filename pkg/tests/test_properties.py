"""Hypothesis property tests for invariants that cut across modules."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from topicseq import crf as crf_ops
from topicseq.corpus import Document, chunk_sequence, dedup, doc_ngrams, embed_document, select_min_cover
from topicseq.crf import CrfParams
from topicseq.tagger import LONG_CONTEXT, SHORT_CONTEXT, Span, dual_union, extract_spans
from topicseq.tokenizer import Vocabulary, tokenize_tagged

scores = st.floats(-5, 5, allow_nan=False, width=64)


@st.composite
def crf_problems(draw):
    T = draw(st.integers(1, 6))
    K = draw(st.integers(1, 4))
    E = draw(arrays(np.float64, (T, K), elements=scores))
    p = CrfParams(
        draw(arrays(np.float64, (K, K), elements=scores)),
        draw(arrays(np.float64, (K,), elements=scores)),
        draw(arrays(np.float64, (K,), elements=scores)),
    )
    y = draw(st.lists(st.integers(0, K - 1), min_size=T, max_size=T))
    return E, p, y


@given(crf_problems())
def test_crf_score_ordering(problem):
    E, p, y = problem
    gold = crf_ops.path_score(E, y, p)
    tags, best = crf_ops.viterbi(E, p)
    log_z = crf_ops.log_partition(E, p)
    assert gold <= best + 1e-9
    assert best <= log_z + 1e-9
    assert log_z <= best + E.shape[0] * np.log(E.shape[1]) + 1e-9
    assert crf_ops.path_score(E, tags, p) == best
    assert crf_ops.nll_and_gradients(E, y, p)[0] >= 0


@given(crf_problems(), st.floats(-3, 3), st.integers(0, 5))
def test_constant_row_shift(problem, c, row):
    E, p, _ = problem
    row %= E.shape[0]
    shifted = E.copy()
    shifted[row] += c
    assert abs(crf_ops.log_partition(shifted, p) - crf_ops.log_partition(E, p) - c) < 1e-9
    tags, best = crf_ops.viterbi(shifted, p)
    # the shifted optimum is still optimal for the original problem
    assert abs(crf_ops.path_score(E, tags, p) - crf_ops.viterbi(E, p)[1]) < 1e-9
    assert abs(best - crf_ops.viterbi(E, p)[1] - c) < 1e-9


@given(crf_problems())
def test_gradient_rows_sum_to_zero(problem):
    E, p, y = problem
    _, g = crf_ops.nll_and_gradients(E, y, p)
    np.testing.assert_allclose(g["E"].sum(axis=1), 0.0, atol=1e-9)
    assert abs(g["start"].sum()) < 1e-9 and abs(g["end"].sum()) < 1e-9
    assert abs(g["trans"].sum()) < 1e-9


intervals = st.sets(st.tuples(st.integers(0, 30), st.integers(1, 5)).map(lambda t: (t[0], t[0] + t[1])), max_size=6)


def to_spans(ivs, source):
    return {Span(a, b, " ".join(f"x{i}" for i in range(a, b)), source) for a, b in ivs}


@given(intervals, intervals, intervals)
def test_dual_union_algebra(a, b, c):
    A, B, C = to_spans(a, LONG_CONTEXT), to_spans(b, SHORT_CONTEXT), to_spans(c, SHORT_CONTEXT)
    AB = dual_union(A, B)
    assert AB == dual_union(B, A)
    assert dual_union(AB, AB) == AB
    assert dual_union(dual_union(A, B), C) == dual_union(A, dual_union(B, C))
    # output intervals never overlap and every input span lies inside one of them
    out = sorted((s.word_start, s.word_end) for s in AB)
    assert all(b1 <= a2 for (_, b1), (a2, _) in zip(out, out[1:]))
    for s in A | B:
        assert any(x <= s.word_start and s.word_end <= y for x, y in out)


@given(st.lists(st.integers(0, 1), max_size=30))
def test_extract_spans_cover_exactly_the_tagged_positions(tags):
    words = [f"w{i}" for i in range(len(tags))]
    spans = extract_spans(words, tags)
    covered = {i for s in spans for i in range(s.word_start, s.word_end)}
    assert covered == {i for i, t in enumerate(tags) if t == 1}
    assert all(s.word_end == len(tags) or tags[s.word_end] == 0 for s in spans)


VOCAB = Vocabulary(["[UNK]", "a", "b", "ab", "##a", "##b", "##ab"])


@given(st.lists(st.tuples(st.text("ab", min_size=1, max_size=5), st.integers(0, 1)), min_size=1, max_size=25),
       st.integers(1, 12))
def test_chunks_concatenate_to_the_record(pairs, seq_len):
    words, tags = zip(*pairs)
    rec = tokenize_tagged(list(words), list(tags), VOCAB)
    chunks = chunk_sequence(rec, seq_len)
    if chunks is None:
        # only possible when some word alone exceeds the limit
        assert any(len(b) > seq_len for b in _word_lengths(rec))
        return
    assert sum((c.pieces for c in chunks), []) == rec.pieces
    assert sum((c.tags for c in chunks), []) == rec.tags
    assert all(0 < len(c) <= seq_len and not c.pieces[0].startswith("##") for c in chunks)


def _word_lengths(rec):
    bounds = list(rec.word_boundaries) + [len(rec)]
    return [range(a, b) for a, b in zip(bounds, bounds[1:])]


docs_strategy = st.lists(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=8), min_size=1, max_size=8)


@settings(max_examples=50)
@given(docs_strategy, st.floats(0.5, 1.0))
def test_dedup_output_is_pairwise_dissimilar_and_stable(word_lists, threshold):
    docs = [Document(str(i), " ".join(w)) for i, w in enumerate(word_lists)]
    for d in docs:
        d.vector = embed_document(d, 256)
    kept = dedup(docs, threshold)
    assert kept and kept[0] is docs[0]
    for i, x in enumerate(kept):
        for y in kept[i + 1:]:
            assert float(x.vector @ y.vector) < threshold
    assert dedup(kept, threshold) == kept


@settings(max_examples=50)
@given(docs_strategy)
def test_cover_preserves_ngram_union(word_lists):
    docs = [Document(str(i), " ".join(w)) for i, w in enumerate(word_lists)]
    chosen = select_min_cover(docs, (2, 3))
    union = set().union(*(doc_ngrams(d.words, (2, 3)) for d in docs))
    got = set().union(*(doc_ngrams(d.words, (2, 3)) for d in chosen)) if chosen else set()
    assert got == union
    ids = [d.id for d in chosen]
    assert ids == sorted(ids, key=int)
