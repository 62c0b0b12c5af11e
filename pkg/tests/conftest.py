import numpy as np
import pytest

from topicseq.tokenizer import Vocabulary

# Reference rows for the me-too sentence. The source text row drops the comma
# after "movement" (24 words against 25 tags); METOO_TEXT restores it.
METOO_TEXT = (
    "the me too movement , with a large variety of local and international related "
    "names , is a movement against sexual harassment and sexual assault"
)
METOO_NER_TAGS = "0 NER NER NER 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 NER NER 0 NER NER"
METOO_TOKENIZED_TAGS = "0 NER NER NER 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 NER NER NER NER 0 NER NER"
METOO_TOKENIZED_TEXT = (
    "the me too movement , with a large variety of local and international related "
    "names , is a movement against sexual har ##ass ##ment and sexual assault"
)
METOO_TITLES = ["me too movement", "sexual harassment", "sexual assault", "movement"]


@pytest.fixture
def metoo_vocab():
    words = sorted(set(METOO_TEXT.split()) - {"harassment"})
    # decoy pieces make the longest-match choice observable
    pieces = ["[UNK]"] + words + ["har", "ha", "##a", "##as", "##ass", "##s", "##ment", "##men"]
    return Vocabulary(pieces)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
