"""Linear-chain CRF: path scores, forward algorithm, NLL gradients and Viterbi.

Scores of a tag path ``y`` over an emission matrix ``E`` (T x K)::

    start[y_0] + sum_t E[t, y_t] + sum_{t>0} trans[y_{t-1}, y_t] + end[y_{T-1}]

Everything is computed in float64 log space regardless of the input dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError


@dataclass
class CrfParams:
    trans: np.ndarray
    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        K = self.trans.shape[0]
        if self.trans.shape != (K, K) or self.start.shape != (K,) or self.end.shape != (K,):
            raise InvalidInputError(
                f"inconsistent CRF shapes {self.trans.shape}, {self.start.shape}, {self.end.shape}"
            )

    @property
    def n_tags(self) -> int:
        return self.trans.shape[0]

    @classmethod
    def zeros(cls, n_tags, dtype=np.float32):
        return cls(np.zeros((n_tags, n_tags), dtype), np.zeros(n_tags, dtype), np.zeros(n_tags, dtype))

    def tensors(self) -> dict:
        return {"crf.trans": self.trans, "crf.start": self.start, "crf.end": self.end}

    @classmethod
    def from_tensors(cls, tensors: dict) -> "CrfParams":
        return cls(tensors["crf.trans"], tensors["crf.start"], tensors["crf.end"])


def logsumexp(a, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else out.item()


def _check(E, p: CrfParams):
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] < 1:
        raise InvalidInputError(f"emission matrix must be T x K with T >= 1, got shape {E.shape}")
    if E.shape[1] != p.n_tags:
        raise InvalidInputError(f"emissions have {E.shape[1]} tags, CRF has {p.n_tags}")
    return E, p.trans.astype(np.float64), p.start.astype(np.float64), p.end.astype(np.float64)


def _check_tags(y, T, K):
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (T,):
        raise InvalidInputError(f"tag sequence of length {y.size} for {T} positions")
    if y.size and (y.min() < 0 or y.max() >= K):
        raise InvalidInputError(f"tag ids must be in [0, {K})")
    return y


def path_score(E, y, p: CrfParams) -> float:
    E, trans, start, end = _check(E, p)
    T, K = E.shape
    y = _check_tags(y, T, K)
    score = start[y[0]] + E[np.arange(T), y].sum() + end[y[-1]]
    if T > 1:
        score += trans[y[:-1], y[1:]].sum()
    return float(score)


def _forward_table(E, trans, start):
    T, K = E.shape
    alpha = np.empty((T, K))
    alpha[0] = start + E[0]
    for t in range(1, T):
        alpha[t] = E[t] + logsumexp(alpha[t - 1][:, None] + trans, axis=0)
    return alpha


def _backward_table(E, trans, end):
    T, K = E.shape
    beta = np.empty((T, K))
    beta[-1] = end
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(trans + (E[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(E, p: CrfParams) -> float:
    """Log of the summed exponentiated scores of all ``K**T`` tag paths."""
    E, trans, start, end = _check(E, p)
    alpha = _forward_table(E, trans, start)
    return float(logsumexp(alpha[-1] + end))


def marginals(E, p: CrfParams):
    """Posterior tag marginals ``(T x K)`` and pairwise marginals ``(T-1 x K x K)``."""
    E, trans, start, end = _check(E, p)
    alpha = _forward_table(E, trans, start)
    beta = _backward_table(E, trans, end)
    log_z = logsumexp(alpha[-1] + end)
    unary = np.exp(alpha + beta - log_z)
    pair = np.exp(
        alpha[:-1, :, None] + trans[None, :, :] + (E[1:] + beta[1:])[:, None, :] - log_z
    )
    return unary, pair, float(log_z)


def nll_and_gradients(E, y_gold, p: CrfParams):
    """Negative log-likelihood of the gold path and its gradients.

    Returns:
        ``(loss, grads)`` with ``grads`` keyed ``"E"``, ``"trans"``, ``"start"``
        and ``"end"``; each is expected count minus gold count.
    """
    E64, trans, start, end = _check(E, p)
    T, K = E64.shape
    y = _check_tags(y_gold, T, K)
    unary, pair, log_z = marginals(E64, p)
    gold = start[y[0]] + E64[np.arange(T), y].sum() + end[y[-1]]
    if T > 1:
        gold += trans[y[:-1], y[1:]].sum()
    loss = max(log_z - float(gold), 0.0)

    dE = unary.copy()
    dE[np.arange(T), y] -= 1.0
    dtrans = pair.sum(axis=0)
    if T > 1:
        np.add.at(dtrans, (y[:-1], y[1:]), -1.0)
    dstart = unary[0].copy()
    dstart[y[0]] -= 1.0
    dend = unary[-1].copy()
    dend[y[-1]] -= 1.0
    return loss, {"E": dE, "trans": dtrans, "start": dstart, "end": dend}


def viterbi(E, p: CrfParams):
    """Highest-scoring tag path and its score.

    Ties resolve to the lowest tag index at every backtracking step.
    """
    E, trans, start, end = _check(E, p)
    T, K = E.shape
    delta = start + E[0]
    back = np.zeros((T, K), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(K)] + E[t]
    final = delta + end
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(final))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path.tolist(), path_score(E, path, p)
