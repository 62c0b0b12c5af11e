"""Builds a small on-disk pipeline workspace for CLI tests."""

from pathlib import Path

import numpy as np

NEWS_TEXT = (
    "wearing the aam aadmi party's trademark cap and with copies of the party's five-year report card in hand, "
    "sunita kejriwal appears completely at ease. it's a cold winter afternoon in delhi, as the former indian "
    "revenue service (irs) officer hits the campaign trail to support her husband and batchmate, chief minister "
    "arvind kejriwal. emerging from the background for the first time, she is lending her shoulder to the aap "
    "bandwagon in the new delhi assembly constituency from where the cm, then a political novice, had emerged "
    "as the giant killer by defeating congress incumbent sheila dikshit in 2013."
)

TOPICS = [
    "aam aadmi party",
    "sunita kejriwal",
    "arvind kejriwal",
    "sheila dikshit",
    "giant killer",
    "winter afternoon",
    "political novice",
    "aap bandwagon",
]

# raw titles with junk each cleaning rule should drop
RAW_TITLES = TOPICS + ["which", "the", "2013", "lga-775", "x00", "kejriwal", "report card", "delhi"]

FILLER = (
    "the a of in to and with from for as by at on her she is it was had then where while "
    "news report card copies hand cold season city former officer hits campaign trail support husband "
    "chief minister emerging background first time lending shoulder new seat leader emerged defeating "
    "incumbent rally voters people street speech crowd morning evening capital state election result "
    "member office senior young group plan week month year local national public"
).split()


def vocab_pieces():
    words = set(FILLER) | {w for t in TOPICS for w in t.split()}
    from topicseq.tokenizer import split_words

    words |= set(split_words(NEWS_TEXT))
    words |= {"##s", "##ed", "##ing"}
    return ["[UNK]"] + sorted(words)


def make_documents(n_docs, seed=0):
    rng = np.random.default_rng(seed)
    topic_words = {w for t in TOPICS for w in t.split()}
    filler = [w for w in FILLER if w not in topic_words]
    docs = []
    for _ in range(n_docs):
        words = [filler[i] for i in rng.integers(len(filler), size=int(rng.integers(8, 18)))]
        for _ in range(int(rng.integers(1, 3))):
            pos = int(rng.integers(0, len(words) + 1))
            words[pos:pos] = TOPICS[int(rng.integers(len(TOPICS)))].split()
        if rng.random() < 0.15:
            # topic words also occur outside topics
            words.insert(int(rng.integers(len(words))), "party")
        docs.append(" ".join(words) + " .")
    return docs


def write_workspace(root, n_docs=120, seq_lens=(32, 16), max_epochs=6, dims=16, seed=0,
                    precision_stop=1.0, recall_stop=1.0, lr=0.1):
    root = Path(root)
    (root / "docs").mkdir(parents=True, exist_ok=True)
    (root / "titles.txt").write_text("\n".join(RAW_TITLES) + "\n")
    (root / "stoplist.txt").write_text("which\nthe\na\nof\n")
    (root / "locations.txt").write_text("delhi\n")
    (root / "vocab.txt").write_text("\n".join(vocab_pieces()) + "\n")
    for i, text in enumerate(make_documents(n_docs, seed)):
        (root / "docs" / f"doc{i:04d}.txt").write_text(text + "\n")
    (root / "news.txt").write_text(NEWS_TEXT + "\n")
    (root / "config.toml").write_text(
        f"""[paths]
titles = "titles.txt"
stoplist = "stoplist.txt"
locations = "locations.txt"
gazetteer = "out/gazetteer.txt"
vocab = "vocab.txt"
corpus_in = "docs"
corpus_out = "out/corpus"
model_out = "out/models"

[train]
learning_rate = {lr}
batch_size = 8
max_epochs = {max_epochs}
precision_stop = {precision_stop}
recall_stop = {recall_stop}

[pipeline]
seq_lens = {list(seq_lens)}
stride = 8
embed_dim = {dims}
hidden_dim = {dims}
"""
    )
    return root / "config.toml"
