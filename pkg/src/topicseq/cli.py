"""Command-line front end: clean-titles, build-corpus, train, tag, eval.

Exit codes: 0 success, 1 internal error, 2 input error, 3 model
incompatibility, 4 document alignment error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from threadpoolctl import threadpool_limits

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import corpus as corpus_ops
from .evaluation import evaluate_run, write_report, write_span_file
from .exceptions import AlignmentError, IncompatibleModelError, InvalidInputError, UndefinedRecallError
from .gazetteer import CleaningConfig, Gazetteer, clean_titles_with_stats, read_lines
from .tagger import TaggerModel, TrainConfig, load_model, save_model, tag_text, train
from .tokenizer import DEFAULT_SCHEME, Vocabulary

logger = logging.getLogger("topicseq")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_MODEL, EXIT_ALIGN = 0, 1, 2, 3, 4

PATH_KEYS = (
    "titles",
    "stoplist",
    "locations",
    "gazetteer",
    "vocab",
    "corpus_in",
    "corpus_out",
    "model_out",
    "embeddings",
)


class InputError(Exception):
    pass


@dataclass
class PipelineConfig:
    """All settings of a pipeline run, usually read from a TOML file.

    Relative paths are resolved against the directory of the config file.
    """

    paths: dict = field(default_factory=dict)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seq_lens: list = field(default_factory=lambda: [512, 64])
    dedup_threshold: float = corpus_ops.DEFAULT_THRESHOLD
    hash_dim: int = corpus_ops.DEFAULT_DIM
    ngram_range: tuple = corpus_ops.DEFAULT_NGRAM_RANGE
    stride: int = 32
    embed_dim: int = 128
    hidden_dim: int = 256

    def __post_init__(self):
        if not self.seq_lens:
            raise InvalidInputError("seq_lens must not be empty")

    def path(self, key, required=True):
        value = self.paths.get(key)
        if not value:
            if required:
                raise InputError(f"no '{key}' path configured")
            return None
        return Path(value)

    def existing(self, key, required=True):
        p = self.path(key, required)
        if p is not None and not p.exists():
            raise InputError(f"{key} path does not exist: {p}")
        return p


def load_config(path=None, seed=None) -> PipelineConfig:
    raw = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise InputError(f"config file not found: {path}")
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"{path}: {exc}") from None
        base = path.parent
    unknown = set(raw) - {"paths", "cleaning", "train", "pipeline"}
    if unknown:
        raise InputError(f"unknown config sections: {sorted(unknown)}")

    paths = {}
    for key, value in raw.get("paths", {}).items():
        if key not in PATH_KEYS:
            raise InputError(f"unknown path key {key!r}")
        paths[key] = str(base / value) if value else ""

    cl = dict(raw.get("cleaning", {}))
    if paths.get("stoplist") and Path(paths["stoplist"]).exists():
        cl["common_words"] = frozenset(read_lines(paths["stoplist"]))
    if paths.get("locations") and Path(paths["locations"]).exists():
        cl["location_whitelist"] = frozenset(read_lines(paths["locations"]))
    if "keep_ngram_range" in cl:
        cl["keep_ngram_range"] = tuple(cl["keep_ngram_range"])
    if "technical_patterns" in cl:
        cl["technical_patterns"] = tuple(cl["technical_patterns"])

    tr = dict(raw.get("train", {}))
    if seed is not None:
        tr["seed"] = seed

    pl = dict(raw.get("pipeline", {}))
    if "ngram_range" in pl:
        pl["ngram_range"] = tuple(pl["ngram_range"])
    allowed = {f.name for f in fields(PipelineConfig)} - {"paths", "cleaning", "train"}
    bad = set(pl) - allowed
    if bad:
        raise InputError(f"unknown pipeline keys: {sorted(bad)}")
    try:
        return PipelineConfig(paths=paths, cleaning=CleaningConfig(**cl), train=TrainConfig(**tr), **pl)
    except TypeError as exc:
        raise InputError(f"invalid config: {exc}") from None


# -- commands ---------------------------------------------------------------


def cmd_clean_titles(cfg: PipelineConfig, args) -> dict:
    titles_path = Path(args.titles) if args.titles else cfg.path("titles")
    if not titles_path.exists():
        raise InputError(f"titles file not found: {titles_path}")
    out = Path(args.output) if args.output else cfg.path("gazetteer")
    raw = read_lines(titles_path)
    gaz, stats = clean_titles_with_stats(raw, cfg.cleaning)
    out.parent.mkdir(parents=True, exist_ok=True)
    gaz.save(out)
    Path(str(out) + ".stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return stats


def cmd_build_corpus(cfg: PipelineConfig, args) -> dict:
    corpus_in = Path(args.corpus_in) if args.corpus_in else cfg.existing("corpus_in")
    if not corpus_in.exists():
        raise InputError(f"corpus input not found: {corpus_in}")
    gaz = Gazetteer.load(cfg.existing("gazetteer"))
    vocab = Vocabulary.load(cfg.existing("vocab"))
    out_dir = Path(args.corpus_out) if args.corpus_out else cfg.path("corpus_out")

    docs = [d for d in corpus_ops.load_documents(corpus_in) if d.words]
    if not docs:
        raise InputError(f"no documents found in {corpus_in}")
    for d in docs:
        d.vector = corpus_ops.embed_document(d, cfg.hash_dim)
    kept = corpus_ops.dedup(docs, cfg.dedup_threshold)
    selected = corpus_ops.select_min_cover(kept, cfg.ngram_range)
    if not selected:
        # no document is long enough to hold an n-gram of the configured range
        selected = kept

    out_dir.mkdir(parents=True, exist_ok=True)
    stats = {"n_documents": len(docs), "n_after_dedup": len(kept), "n_selected": len(selected), "records": {}}
    for L in cfg.seq_lens:
        records = list(corpus_ops.emit_parallel_corpus(selected, gaz, vocab, DEFAULT_SCHEME, L))
        corpus_ops.write_conll(records, out_dir / f"corpus_{L}.conll")
        corpus_ops.write_two_line(records, out_dir / f"corpus_{L}.txt")
        corpus_ops.write_manifest(corpus_ops.manifest_entries(records), out_dir / f"manifest_{L}.jsonl")
        stats["records"][str(L)] = len(records)
    return stats


def cmd_train(cfg: PipelineConfig, args) -> dict:
    vocab = Vocabulary.load(cfg.existing("vocab"))
    corpus_dir = cfg.existing("corpus_out")
    out_dir = Path(args.model_out) if args.model_out else cfg.path("model_out")
    embeddings = cfg.existing("embeddings", required=False)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for L in cfg.seq_lens:
        path = corpus_dir / f"corpus_{L}.conll"
        if not path.exists():
            raise InputError(f"corpus file not found: {path}")
        records = corpus_ops.read_conll(path, vocab)
        model = TaggerModel.init(
            vocab,
            seq_len=L,
            embed_dim=cfg.embed_dim,
            hidden_dim=cfg.hidden_dim,
            seed=cfg.train.seed,
            embeddings_path=embeddings,
        )
        model, metrics = train(records, cfg.train, model, metrics_path=out_dir / f"metrics_{L}.jsonl")
        save_model(model, out_dir / f"model_{L}.tpsq")
        summary[str(L)] = metrics[-1] if metrics else None
    return summary


def _read_tag_input(path: Path):
    if path.suffix == ".jsonl":
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc_id = rec.get("doc_id", rec.get("id"))
                text = rec["text"]
            except (ValueError, KeyError, AttributeError):
                raise InputError(f"{path}:{lineno}: expected a {{doc_id, text}} record") from None
            if doc_id is None:
                raise InputError(f"{path}:{lineno}: record has no doc_id")
            yield str(doc_id), text
    else:
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if line.strip():
                yield str(lineno), line


def cmd_tag(cfg: PipelineConfig, args) -> int:
    src = Path(args.input)
    if not src.exists():
        raise InputError(f"input file not found: {src}")
    vocab = Vocabulary.load(cfg.existing("vocab"))
    model_dir = Path(args.model_out) if args.model_out else cfg.existing("model_out")
    models = []
    for L in cfg.seq_lens:
        path = model_dir / f"model_{L}.tpsq"
        if not path.exists():
            raise InputError(f"model file not found: {path}")
        models.append(load_model(path, vocab=vocab))
    results = [
        (doc_id, [sp.text for sp in tag_text(text, models, vocab, cfg.stride)])
        for doc_id, text in _read_tag_input(src)
    ]
    if args.output:
        write_span_file(results, args.output)
    else:
        for doc_id, spans in results:
            sys.stdout.write(json.dumps({"doc_id": doc_id, "spans": spans}) + "\n")
    return len(results)


def cmd_eval(cfg: PipelineConfig, args) -> dict:
    for p in (args.pred, args.ref):
        if not Path(p).exists():
            raise InputError(f"file not found: {p}")
    report, breakdown = evaluate_run(args.pred, args.ref, partial=args.partial)
    doc = report.to_dict()
    doc["breakdown"] = breakdown
    if args.output:
        write_report(report, breakdown, args.output)
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topicseq", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML pipeline configuration")
    parser.add_argument("--seed", type=int, help="override train.seed")
    parser.add_argument("--deterministic", action="store_true", help="single-threaded, fixed reduction order")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean-titles", help="clean a raw title list into a gazetteer")
    p.add_argument("--titles", help="raw titles file (overrides paths.titles)")
    p.add_argument("--output", help="gazetteer output (overrides paths.gazetteer)")

    p = sub.add_parser("build-corpus", help="dedup, select and label documents into parallel corpora")
    p.add_argument("--corpus-in", dest="corpus_in")
    p.add_argument("--corpus-out", dest="corpus_out")

    p = sub.add_parser("train", help="train one model per configured sequence length")
    p.add_argument("--model-out", dest="model_out")

    p = sub.add_parser("tag", help="extract topic spans from text")
    p.add_argument("input", help="text file (one document per line) or JSON lines {doc_id, text}")
    p.add_argument("--output", help="write JSON lines here instead of stdout")
    p.add_argument("--model-out", dest="model_out", help="directory holding model_<len>.tpsq files")

    p = sub.add_parser("eval", help="score predicted spans against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--partial", action="store_true", help="count references contained in a prediction")
    p.add_argument("--output", help="also write the report here")
    return parser


COMMANDS = {
    "clean-titles": cmd_clean_titles,
    "build-corpus": cmd_build_corpus,
    "train": cmd_train,
    "tag": cmd_tag,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    # one BLAS thread keeps reduction order fixed
    limiter = threadpool_limits(limits=1) if args.deterministic else None
    try:
        cfg = load_config(args.config, seed=args.seed)
        result = COMMANDS[args.command](cfg, args)
        if args.command in ("clean-titles", "build-corpus", "train"):
            sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
        return EXIT_OK
    except IncompatibleModelError as exc:
        logger.error("%s", exc)
        return EXIT_MODEL
    except AlignmentError as exc:
        logger.error("%s", exc)
        return EXIT_ALIGN
    except (InputError, InvalidInputError, UndefinedRecallError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
