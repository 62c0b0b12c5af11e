"""Topic n-gram detection with a gazetteer-supervised Bi-GRU + CRF tagger."""

from .corpus import (
    Document,
    NearDuplicateFilter,
    dedup,
    embed_document,
    emit_parallel_corpus,
    select_min_cover,
)
from .crf import CrfParams, log_partition, nll_and_gradients, path_score, viterbi
from .evaluation import EvalReport, evaluate_run, match_sets
from .exceptions import (
    AlignmentError,
    IncompatibleModelError,
    InvalidInputError,
    InvalidStateError,
    TrainingDivergedError,
    UndefinedRecallError,
)
from .gazetteer import CleaningConfig, Gazetteer, GazetteerLabeler, clean_titles, weak_label
from .neural import EncoderConfig, GruParams, backward, bigru_forward, emissions, encode
from .tagger import (
    Span,
    TaggerModel,
    TopicTagger,
    TrainConfig,
    decode_window,
    dual_union,
    extract_spans,
    load_model,
    save_model,
    sliding_infer,
    train,
)
from .tokenizer import TaggedSequence, TagScheme, Vocabulary, detokenize, tokenize_tagged, tokenize_word

__version__ = "0.1.0"
