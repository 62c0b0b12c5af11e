import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicseq.exceptions import InvalidInputError
from topicseq.tokenizer import (
    DEFAULT_SCHEME,
    TagScheme,
    Vocabulary,
    detokenize,
    split_words,
    tokenize_tagged,
    tokenize_word,
)

from .conftest import METOO_NER_TAGS, METOO_TEXT, METOO_TOKENIZED_TAGS, METOO_TOKENIZED_TEXT

SMALL = Vocabulary(["[UNK]", "a", "ab", "b", "c", "##a", "##b", "##bc", "##c", "abc", "##ca"])


def tag_ids(row):
    return [DEFAULT_SCHEME.id_of(t) for t in row.split()]


def test_vocabulary_ids_dense_and_bijective():
    assert [SMALL.id_of(p) for p in SMALL.pieces] == list(range(len(SMALL)))
    assert SMALL.piece_of(3) == "b"


@pytest.mark.parametrize(
    "pieces,unk",
    [
        (["a", "a", "[UNK]"], "[UNK]"),
        (["a", "b"], "[UNK]"),
        (["a b", "[UNK]"], "[UNK]"),
        (["##", "[UNK]"], "[UNK]"),
    ],
)
def test_vocabulary_rejects_invalid_inventories(pieces, unk):
    with pytest.raises(InvalidInputError):
        Vocabulary(pieces, unk)


def test_vocabulary_file_round_trip(tmp_path):
    path = tmp_path / "vocab.txt"
    SMALL.save(path)
    assert path.read_bytes().count(b"\n") == len(SMALL)
    assert Vocabulary.load(path) == SMALL
    assert Vocabulary.load(path).fingerprint == SMALL.fingerprint


def test_default_scheme():
    assert DEFAULT_SCHEME.labels == ("0", "NER")
    assert DEFAULT_SCHEME.outside_label == "0"
    with pytest.raises(InvalidInputError):
        TagScheme(("0", "0"))
    with pytest.raises(InvalidInputError):
        TagScheme(("A", "B"), "0")


def test_harassment_splits_like_metoo(metoo_vocab):
    assert tokenize_word("harassment", metoo_vocab) == ["har", "##ass", "##ment"]


def test_whole_word_hit(metoo_vocab):
    assert tokenize_word("the", metoo_vocab) == ["the"]


def test_unknown_word_collapses_to_unk(metoo_vocab):
    assert tokenize_word("zzqx", metoo_vocab) == ["[UNK]"]


def test_partial_match_then_dead_end_is_unk():
    # "abx": "ab" matches, then "##x" has no piece
    assert tokenize_word("abx", SMALL) == ["[UNK]"]


def test_overlong_word_is_unk():
    assert tokenize_word("a" * 101, SMALL) == ["[UNK]"]
    assert tokenize_word("a" * 100, SMALL) != ["[UNK]"]


@pytest.mark.parametrize("bad", ["", "a b", "Abc"])
def test_tokenize_word_rejects(bad):
    with pytest.raises(InvalidInputError):
        tokenize_word(bad, SMALL)


def test_tokenize_tagged_repeats_tags(metoo_vocab):
    seq = tokenize_tagged(["sexual", "harassment"], [1, 1], metoo_vocab)
    assert seq.pieces == ["sexual", "har", "##ass", "##ment"]
    assert seq.tags == [1, 1, 1, 1]
    assert seq.word_boundaries == [0, 1]


def test_tokenize_tagged_single_piece(metoo_vocab):
    seq = tokenize_tagged(["movement"], [0], metoo_vocab)
    assert seq.pieces == ["movement"] and seq.tags == [0]


def test_tokenize_tagged_metoo_sentence(metoo_vocab):
    words = METOO_TEXT.split()
    assert len(words) == 25
    seq = tokenize_tagged(words, tag_ids(METOO_NER_TAGS), metoo_vocab)
    assert len(seq) == 27
    assert " ".join(seq.pieces) == METOO_TOKENIZED_TEXT
    assert " ".join(DEFAULT_SCHEME.labels[t] for t in seq.tags) == METOO_TOKENIZED_TAGS


def test_tokenize_tagged_errors():
    with pytest.raises(InvalidInputError):
        tokenize_tagged(["a"], [0, 1], SMALL)
    with pytest.raises(InvalidInputError):
        tokenize_tagged(["a"], [2], SMALL)


def test_unk_word_keeps_its_tag(metoo_vocab):
    seq = tokenize_tagged(["the", "zzqx"], [0, 1], metoo_vocab)
    assert seq.pieces == ["the", "[UNK]"] and seq.tags == [0, 1]


def test_detokenize():
    assert detokenize(["har", "##ass", "##ment"]) == ["harassment"]
    assert detokenize(["me", "too", "movement"]) == ["me", "too", "movement"]
    assert detokenize(["new", "york", ".", "##s"]) == ["new", "york", ".s"]
    with pytest.raises(InvalidInputError):
        detokenize(["##s", "new"])


def test_split_words_separates_punctuation():
    assert split_words("Names, is  a  Movement.") == ["names", ",", "is", "a", "movement", "."]
    assert split_words("lga-775") == ["lga", "-", "775"]
    assert split_words("   ") == []


def _random_vocab(rnd):
    roots = {"".join(rnd.choices("abcd", k=rnd.randint(1, 3))) for _ in range(12)}
    conts = {"##" + "".join(rnd.choices("abcd", k=rnd.randint(1, 2))) for _ in range(8)}
    return Vocabulary(["[UNK]"] + sorted(roots) + sorted(conts)), sorted(roots), sorted(conts)


def test_round_trip_on_random_vocab_covered_words():
    rnd = random.Random(7)
    checked = 0
    while checked < 1000:
        vocab, roots, conts = _random_vocab(rnd)
        for _ in range(50):
            word = rnd.choice(roots) + "".join(c[2:] for c in rnd.choices(conts, k=rnd.randint(0, 3)))
            pieces = tokenize_word(word, vocab)
            if pieces == ["[UNK]"]:
                continue
            assert detokenize(pieces) == [word]
            checked += 1


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="abc", min_size=1, max_size=12))
def test_tokenize_word_properties(word):
    pieces = tokenize_word(word, SMALL)
    assert pieces == tokenize_word(word, SMALL)
    if pieces != ["[UNK]"]:
        assert "".join(p.removeprefix("##") for p in pieces) == word
        assert not pieces[0].startswith("##")
        assert all(p.startswith("##") for p in pieces[1:])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.text(alphabet="abc", min_size=1, max_size=6), st.integers(0, 1)), max_size=10))
def test_tag_conservation_and_length(pairs):
    words = [w for w, _ in pairs]
    tags = [t for _, t in pairs]
    seq = tokenize_tagged(words, tags, SMALL)
    assert seq.word_tags() == tags
    assert len(seq.pieces) >= len(words)
    for i, piece in enumerate(seq.pieces):
        if i not in seq.word_boundaries:
            assert piece.startswith("##")
            assert seq.tags[i] == seq.tags[i - 1]
