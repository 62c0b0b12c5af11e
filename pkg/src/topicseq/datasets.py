"""Synthetic planted-topic corpora for smoke tests and desk-scale training runs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .gazetteer import CleaningConfig, Gazetteer, clean_titles, weak_label
from .tokenizer import DEFAULT_SCHEME, DEFAULT_UNK, TaggedSequence, Vocabulary, tokenize_tagged

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class PlantedCorpus:
    vocab: Vocabulary
    gazetteer: Gazetteer
    titles: list
    sentences: list
    records: list

    @property
    def texts(self) -> list:
        return [" ".join(s) for s in self.sentences]


def make_planted_topic_corpus(
    n_sentences: int = 2000,
    n_topics: int = 50,
    n_filler_words: int = 250,
    n_topic_words: int = 80,
    topic_word_as_filler: float = 0.05,
    sentence_len=(6, 16),
    seed: int = 0,
) -> PlantedCorpus:
    """Generate pseudo-word sentences with gazetteer topics planted at random positions.

    Words are a three-letter root piece optionally followed by a two-letter
    continuation piece, so a share of them tokenize into two pieces. Topic
    words also appear outside topics with probability ``topic_word_as_filler``
    per filler slot, so labels depend on context and not only on word identity.
    Tags come from :func:`weak_label` against the cleaned title list.
    """
    rng = np.random.default_rng(seed)
    roots = ["".join(t) for t in itertools.product(_CONSONANTS, _VOWELS, _CONSONANTS)]
    conts = ["".join(t) for t in itertools.product(_VOWELS, _CONSONANTS)]
    roots = [roots[i] for i in rng.permutation(len(roots))[:320]]
    conts = [conts[i] for i in rng.permutation(len(conts))[:40]]

    n_words = n_filler_words + n_topic_words
    words = set()
    while len(words) < n_words:
        w = roots[rng.integers(len(roots))]
        if rng.random() < 0.4:
            w += conts[rng.integers(len(conts))]
        words.add(w)
    words = sorted(words)
    words = [words[i] for i in rng.permutation(len(words))]
    filler, topic_words = words[:n_filler_words], words[n_filler_words:]

    raw_titles = set()
    while len(raw_titles) < n_topics:
        k = int(rng.integers(2, 4))
        idx = rng.choice(len(topic_words), size=k, replace=False)
        raw_titles.add(" ".join(topic_words[i] for i in idx))
    titles = sorted(raw_titles)
    gaz = clean_titles(titles, CleaningConfig())

    pieces = [DEFAULT_UNK, ".", ","] + sorted(roots) + ["##" + c for c in sorted(conts)]
    vocab = Vocabulary(pieces)

    sentences, records = [], []
    for _ in range(n_sentences):
        length = int(rng.integers(sentence_len[0], sentence_len[1] + 1))
        sent = []
        for _ in range(length):
            if rng.random() < topic_word_as_filler:
                sent.append(topic_words[rng.integers(len(topic_words))])
            else:
                sent.append(filler[rng.integers(len(filler))])
        for _ in range(int(rng.integers(1, 3))):
            pos = int(rng.integers(0, len(sent) + 1))
            sent[pos:pos] = titles[rng.integers(len(titles))].split(" ")
        if rng.random() < 0.3:
            sent.insert(int(rng.integers(1, len(sent))), ",")
        sent.append(".")
        tags = weak_label(sent, gaz, DEFAULT_SCHEME)
        sentences.append(sent)
        records.append(tokenize_tagged(sent, tags, vocab, DEFAULT_SCHEME))
    return PlantedCorpus(vocab, gaz, titles, sentences, records)
