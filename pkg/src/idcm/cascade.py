"""End-to-end document scoring: select windows, score the selected ones
with the expensive scorer, aggregate the top scores linearly.

Selectors:
  ck / ck_small   trained selection model (full / reduced dimensions)
  static_first    first k windows by position
  static_top_tf   k windows with the most exact query-term matches
  all             every window goes to the expensive scorer (no cascade)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from idcm.ck import CkModel, forward_windows
from idcm.config import CascadeConfig, ConfigError
from idcm.corpus import Corpus, CandidateList, Query, TokenizedDocument
from idcm.teacher import ExpensiveScorer, score_passages
from idcm.windows import PassageWindow, segment


@dataclass
class DocumentScore:
    """One scored document with its selection diagnostics."""

    doc_id: str
    score: float
    selected_windows: list[int]  # ranked: descending selection score, ties by index
    etm_scores: list[float]  # parallel to selected_windows
    window_count: int


def select_top_k(esm_scores: Sequence[float], k: int) -> list[int]:
    """Indices of the min(k, n) largest scores, ties broken by smaller index.

    The result is ranked (best first); treat it as a set where only
    membership matters.
    """
    if k < 1:
        raise ConfigError(f"selection count k must be >= 1, got {k}")
    scores = np.asarray(esm_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot select from an empty score sequence")
    order = np.argsort(-scores, kind="stable")
    return [int(i) for i in order[: min(k, scores.size)]]


def aggregate(
    etm_scores: Sequence[float],
    l: int,
    w_ps: Sequence[float],
    bias: float,
    fill: str = "repeat_last",
) -> float:
    """Dot the l largest expensive scores (descending) with the learned weights.

    Documents with fewer than l scores fill the remaining slots with the
    smallest available score (default) or zeros, keeping the weight vector
    dimension fixed.
    """
    scores = sorted((float(s) for s in etm_scores), reverse=True)
    if not scores:
        raise ValueError("cannot aggregate an empty score sequence")
    if len(w_ps) != l:
        raise ConfigError(f"w_ps has {len(w_ps)} entries, expected l={l}")
    if len(scores) < l:
        if fill == "repeat_last":
            scores = scores + [scores[-1]] * (l - len(scores))
        elif fill == "zero":
            scores = scores + [0.0] * (l - len(scores))
        else:
            raise ConfigError(f"unknown aggregation fill rule {fill!r}")
    top = np.asarray(scores[:l], dtype=np.float64)
    return float(top @ np.asarray(w_ps, dtype=np.float64) + bias)


def filled_top_l(etm_scores: Sequence[float], l: int, fill: str = "repeat_last") -> np.ndarray:
    """The vector `aggregate` dots with the weights; used by aggregation training."""
    scores = sorted((float(s) for s in etm_scores), reverse=True)
    if not scores:
        raise ValueError("cannot aggregate an empty score sequence")
    if len(scores) < l:
        pad = scores[-1] if fill == "repeat_last" else 0.0
        scores = scores + [pad] * (l - len(scores))
    return np.asarray(scores[:l], dtype=np.float64)


def _tf_counts(query: Query, windows: Sequence[PassageWindow]) -> list[int]:
    terms = set(int(t) for t in query.tokens)
    counts = []
    for window in windows:
        real = window.real_tokens()
        counts.append(int(sum(np.count_nonzero(real == t) for t in terms)))
    return counts


def _select_windows(
    query: Query,
    windows: Sequence[PassageWindow],
    ck_model: Optional[CkModel],
    config: CascadeConfig,
) -> list[int]:
    n = len(windows)
    selector = config.selector
    if selector == "all":
        return list(range(n))
    if selector == "static_first":
        return list(range(min(config.k, n)))
    if selector == "static_top_tf":
        return select_top_k(_tf_counts(query, windows), config.k)
    if selector in ("ck", "ck_small"):
        if ck_model is None:
            raise ConfigError(f"selector {selector!r} requires a selection model")
        tokens = np.stack([w.tokens for w in windows])
        masks = np.stack([w.pad_mask for w in windows])
        scores, _, _ = forward_windows(ck_model, query.tokens, tokens, passage_mask=masks)
        return select_top_k(scores, config.k)
    raise ConfigError(f"unknown selector {selector!r}")


def score_document(
    query: Query,
    doc: TokenizedDocument,
    ck_model: Optional[CkModel],
    scorer: ExpensiveScorer,
    config: CascadeConfig,
) -> DocumentScore:
    """Window the document, select, score selected windows, aggregate."""
    windows = segment(doc, config.w, config.o, config.max_doc_tokens)
    selected = _select_windows(query, windows, ck_model, config)
    scored = score_passages(scorer, query, doc, [windows[i] for i in selected])
    etm_scores = [value for _, value in scored]
    score = aggregate(
        etm_scores, config.l, config.w_ps, config.w_ps_bias, config.aggregation_fill
    )
    return DocumentScore(
        doc_id=doc.doc_id,
        score=score,
        selected_windows=selected,
        etm_scores=etm_scores,
        window_count=len(windows),
    )


def rank_candidates(
    query: Query,
    candidates: CandidateList,
    corpus: Corpus,
    ck_model: Optional[CkModel],
    scorer: ExpensiveScorer,
    config: CascadeConfig,
) -> list[DocumentScore]:
    """Score every candidate; order descending by score, ties by doc_id."""
    scored = []
    for doc_id in candidates.doc_ids:
        doc = corpus.get(doc_id)
        scored.append(score_document(query, doc, ck_model, scorer, config))
    scored.sort(key=lambda d: (-d.score, d.doc_id))
    return scored
