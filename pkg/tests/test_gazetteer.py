import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicseq.gazetteer import (
    CleaningConfig,
    Gazetteer,
    GazetteerLabeler,
    clean_titles,
    clean_titles_with_stats,
    is_numeric_token,
    weak_label,
)
from topicseq.exceptions import InvalidInputError
from topicseq.tokenizer import DEFAULT_SCHEME

from .conftest import METOO_NER_TAGS, METOO_TEXT, METOO_TITLES

CFG = CleaningConfig(location_whitelist={"delhi"})


@pytest.mark.parametrize(
    "title,kept",
    [
        ("which", False),
        ("are", False),
        ("The", False),
        ("29", False),
        ("101", False),
        ("1,000", False),
        ("lga-775", False),
        ("X00", False),
        ("me too movement", True),
        ("Me_Too_Movement", True),
        ("delhi", True),
        ("apple", False),
        ("article 370", True),
        ("international monetary fund annual meeting", True),
        ("a b c d e f", False),
    ],
)
def test_cleaning_rules(title, kept):
    assert (title in clean_titles([title], CFG)) is kept


def test_any_numeric_token_flag():
    cfg = CleaningConfig(any_numeric_token=True)
    assert "article 370" not in clean_titles(["article 370"], cfg)


def test_keep_ngram_range_configurable():
    cfg = CleaningConfig(keep_ngram_range=(1, 8))
    assert "a b c d e f" not in clean_titles(["a b c d e f"], CFG)
    assert "alpha beta gamma delta epsilon zeta" in clean_titles(["alpha beta gamma delta epsilon zeta"], cfg)


def test_invalid_config():
    with pytest.raises(InvalidInputError):
        CleaningConfig(keep_ngram_range=(0, 3))
    with pytest.raises(InvalidInputError):
        CleaningConfig(keep_ngram_range=(3, 2))
    with pytest.raises(InvalidInputError):
        CleaningConfig(common_words=frozenset())


def test_stats_charge_first_rule():
    _, stats = clean_titles_with_stats(["which", "29", "x00", "apple", "me too movement", "Me Too Movement"], CFG)
    assert stats["common_word"] == 1
    assert stats["numeric"] == 1
    assert stats["technical"] == 1
    assert stats["single_word"] == 1
    assert stats["duplicate"] == 1
    assert stats["kept"] == 1 and stats["input"] == 6


def test_numeric_token():
    assert is_numeric_token("29") and is_numeric_token("1,000") and is_numeric_token("1.5")
    assert is_numeric_token("2019-20")
    assert not is_numeric_token("-5") and not is_numeric_token("x00")


def test_gazetteer_invariants(tmp_path):
    gaz = Gazetteer(["New  York", "me too movement"])
    assert gaz.titles == {"new york", "me too movement"}
    assert gaz.max_len == 3
    path = tmp_path / "g.txt"
    gaz.save(path)
    assert path.read_text() == "me too movement\nnew york\n"
    assert Gazetteer.load(path).titles == gaz.titles


def test_cleaning_is_idempotent():
    raw = ["me too movement", "delhi", "u.s. open", "five-year plan", "which", "Sheila Dikshit"]
    first = clean_titles(raw, CFG)
    assert clean_titles(sorted(first.titles), CFG).titles == first.titles


def test_weak_label_metoo():
    gaz = clean_titles(METOO_TITLES)
    assert "movement" not in gaz
    tags = weak_label(METOO_TEXT.split(), gaz)
    assert " ".join(DEFAULT_SCHEME.labels[t] for t in tags) == METOO_NER_TAGS


def test_weak_label_empty_gazetteer():
    assert weak_label(["a", "b"], Gazetteer()) == [0, 0]


def test_longest_match_wins():
    assert weak_label(["a", "b", "c"], Gazetteer(["a b", "a b c"])) == [1, 1, 1]


def _oracle_leftmost_longest(words, titles):
    """Enumerate every segmentation into titles and single unmatched words and
    return the tags of the lexicographically greatest one, where at each segment
    a longer match beats a shorter one and a match beats no match."""
    n = len(words)

    def segmentations(i):
        if i == n:
            yield []
            return
        for rest in segmentations(i + 1):
            yield [(1, 0)] + rest
        for L in range(1, n - i + 1):
            if " ".join(words[i:i + L]) in titles:
                for rest in segmentations(i + L):
                    yield [(L, 1)] + rest

    best = max(segmentations(0), key=lambda seg: [(L, m) for L, m in seg])
    tags = []
    for L, m in best:
        tags.extend([m] * L)
    return tags


def test_weak_label_matches_brute_force_oracle():
    rnd = random.Random(3)
    alphabet = ["a", "b", "c"]
    for _ in range(300):
        n = rnd.randint(0, 6)
        words = rnd.choices(alphabet, k=n)
        titles = set()
        for _ in range(rnd.randint(0, 5)):
            titles.add(" ".join(rnd.choices(alphabet, k=rnd.randint(1, 3))))
        assert weak_label(words, Gazetteer(titles)) == _oracle_leftmost_longest(words, titles)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.sampled_from("abcd"), max_size=12),
    st.lists(st.lists(st.sampled_from("abcd"), min_size=1, max_size=3), max_size=5),
)
def test_weak_label_properties(words, titles):
    gaz = Gazetteer(" ".join(t) for t in titles)
    tags = weak_label(words, gaz)
    assert len(tags) == len(words)
    assert tags == weak_label(words, gaz)
    # every NER run is a concatenation of titles
    i = 0
    while i < len(words):
        if tags[i]:
            j = i
            while j < len(words) and tags[j]:
                j += 1
            run = words[i:j]
            ok = [False] * (len(run) + 1)
            ok[0] = True
            for a in range(len(run)):
                if ok[a]:
                    for b in range(a + 1, len(run) + 1):
                        if " ".join(run[a:b]) in gaz.titles:
                            ok[b] = True
            assert ok[-1]
            i = j
        else:
            i += 1


def test_adding_disjoint_title_never_reduces_tagging():
    words = "x y a b z".split()
    before = sum(weak_label(words, Gazetteer(["a b"])))
    after = sum(weak_label(words, Gazetteer(["a b", "x y"])))
    assert after >= before


def test_labeler_estimator():
    lab = GazetteerLabeler(config=CFG).fit(["me too movement", "which", "delhi"])
    assert lab.gazetteer_.titles == {"me too movement", "delhi"}
    assert lab.transform(["The Me Too movement in Delhi"]) == [[0, 1, 1, 1, 0, 1]]
    assert lab.get_params()["clean"] is True
