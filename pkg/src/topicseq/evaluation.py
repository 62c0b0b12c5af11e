"""Precision/recall/F1 of predicted topic strings against reference strings.

Two matching protocols:

* exact: a prediction matches only an identical reference string;
* partial: a prediction also matches when some reference occurs inside it as
  a contiguous run of words ("president of nrgi" matches "nrgi", but "rg"
  matches nothing).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

from .exceptions import AlignmentError, InvalidInputError, UndefinedRecallError

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    n_pred: int
    n_ref: int
    n_matched_pred: int
    n_matched_ref: int
    partial_match: bool

    def to_dict(self) -> dict:
        return asdict(self)


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def _normalize(s: str) -> str:
    return " ".join(s.lower().split())


def contains_words(outer: str, inner: str) -> bool:
    """True if ``inner``'s words appear contiguously in ``outer``'s words."""
    o, i = outer.split(" "), inner.split(" ")
    n = len(i)
    return any(o[k:k + n] == i for k in range(len(o) - n + 1))


def match_counts(pred: Iterable[str], ref: Iterable[str], partial: bool = False):
    """``(n_pred, n_ref, n_matched_pred, n_matched_ref)`` over deduplicated strings."""
    pred = {_normalize(p) for p in pred} - {""}
    ref = {_normalize(r) for r in ref} - {""}
    if partial:
        matched_pred = sum(1 for p in pred if any(contains_words(p, r) for r in ref))
        matched_ref = sum(1 for r in ref if any(contains_words(p, r) for p in pred))
    else:
        common = len(pred & ref)
        matched_pred = matched_ref = common
    return len(pred), len(ref), matched_pred, matched_ref


def _report(n_pred, n_ref, m_pred, m_ref, partial) -> EvalReport:
    precision = m_pred / n_pred if n_pred else 0.0
    recall = m_ref / n_ref if n_ref else 0.0
    return EvalReport(precision, recall, f1_score(precision, recall), n_pred, n_ref, m_pred, m_ref, partial)


def match_sets(pred: Iterable[str], ref: Iterable[str], partial: bool = False) -> EvalReport:
    """Score one prediction set against one reference set.

    Raises:
        UndefinedRecallError: if ``ref`` is empty.
    """
    counts = match_counts(pred, ref, partial)
    if counts[1] == 0:
        raise UndefinedRecallError("reference set is empty; recall is undefined")
    if counts[0] == 0:
        logger.warning("empty prediction set; precision reported as 0")
    return _report(*counts, partial)


def read_span_file(path) -> dict:
    """``doc_id -> list of span strings`` from a JSON-lines file of ``{doc_id, spans}``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc_id = str(rec["doc_id"])
                spans = rec["spans"]
            except (ValueError, KeyError, TypeError):
                raise InvalidInputError(f"{path}:{lineno}: expected {{doc_id, spans}} record") from None
            if doc_id in out:
                raise InvalidInputError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
            out[doc_id] = [str(s) for s in spans]
    return out


def write_span_file(records: Iterable[tuple], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc_id, spans in records:
            fh.write(json.dumps({"doc_id": doc_id, "spans": list(spans)}) + "\n")


def evaluate_docs(pred: dict, ref: dict, partial: bool = False):
    """Micro-averaged report plus per-document breakdown for id-aligned span dicts."""
    mismatched = set(pred) ^ set(ref)
    if mismatched:
        raise AlignmentError(mismatched)
    totals = [0, 0, 0, 0]
    breakdown = []
    for doc_id in sorted(ref):
        counts = match_counts(pred[doc_id], ref[doc_id], partial)
        totals = [a + b for a, b in zip(totals, counts)]
        entry = {"doc_id": doc_id}
        entry.update(_report(*counts, partial).to_dict())
        breakdown.append(entry)
    if totals[1] == 0:
        raise UndefinedRecallError("reference files contain no spans; recall is undefined")
    return _report(*totals, partial), breakdown


def evaluate_run(pred_file, ref_file, partial: bool = False):
    """Score a prediction file against a reference file (both JSON lines)."""
    return evaluate_docs(read_span_file(pred_file), read_span_file(ref_file), partial)


def write_report(report: EvalReport, breakdown: list, path) -> None:
    doc = report.to_dict()
    doc["breakdown"] = breakdown
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
