"""IR effectiveness metrics and intra-document selection analyses.

Conventions (matching common trec-eval behavior):
  - nDCG gain is 2^grade - 1, discount log2(1 + rank), rank 1-based;
  - queries without relevant documents contribute 0 and are counted;
  - MRR/MAP binarize graded judgments at the binarization point; when the
    qrels carry no grade reaching that point (binary judgments), grade >= 1
    counts as relevant instead.

A run is a mapping query_id -> ranked doc_id sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from idcm.cascade import select_top_k
from idcm.corpus import Qrels

Run = Mapping[str, Sequence[str]]


@dataclass
class MetricReport:
    ndcg10: dict[str, float]
    mrr10: dict[str, float]
    map100: dict[str, float]
    mean_ndcg10: float
    mean_mrr10: float
    mean_map100: float
    query_count: int


def _dcg(grades: Sequence[int]) -> float:
    grades = np.asarray(grades, dtype=np.float64)
    if grades.size == 0:
        return 0.0
    ranks = np.arange(1, grades.size + 1)
    return float(np.sum((np.power(2.0, grades) - 1.0) / np.log2(1.0 + ranks)))


def ndcg_at(run: Run, qrels: Qrels, cutoff: int = 10) -> tuple[dict[str, float], float]:
    """Per-query nDCG@cutoff and the arithmetic mean over run queries."""
    per_query: dict[str, float] = {}
    for qid, doc_ids in run.items():
        gains = [qrels.grade(qid, d) for d in doc_ids[:cutoff]]
        ideal = sorted(qrels.doc_grades(qid).values(), reverse=True)[:cutoff]
        idcg = _dcg(ideal)
        per_query[qid] = _dcg(gains) / idcg if idcg > 0 else 0.0
    mean = float(np.mean(list(per_query.values()))) if per_query else 0.0
    return per_query, mean


def _binarization_threshold(qrels: Qrels, binarization: int) -> int:
    # graded qrels binarize at the given point; purely binary qrels fall
    # back to grade >= 1 so nothing is ever judged unreachable
    return binarization if qrels.max_grade >= binarization else 1


def mrr_at(
    run: Run, qrels: Qrels, cutoff: int = 10, binarization: int = 2
) -> tuple[dict[str, float], float]:
    """Reciprocal rank of the first relevant document within the cutoff."""
    threshold = _binarization_threshold(qrels, binarization)
    per_query: dict[str, float] = {}
    for qid, doc_ids in run.items():
        value = 0.0
        for rank, doc_id in enumerate(doc_ids[:cutoff], start=1):
            if qrels.grade(qid, doc_id) >= threshold:
                value = 1.0 / rank
                break
        per_query[qid] = value
    mean = float(np.mean(list(per_query.values()))) if per_query else 0.0
    return per_query, mean


def map_at(
    run: Run, qrels: Qrels, cutoff: int = 100, binarization: int = 2
) -> tuple[dict[str, float], float]:
    """Average precision within the cutoff; denominator counts all relevant."""
    threshold = _binarization_threshold(qrels, binarization)
    per_query: dict[str, float] = {}
    for qid, doc_ids in run.items():
        total_relevant = sum(1 for g in qrels.doc_grades(qid).values() if g >= threshold)
        if total_relevant == 0:
            per_query[qid] = 0.0
            continue
        hits = 0
        precision_sum = 0.0
        for rank, doc_id in enumerate(doc_ids[:cutoff], start=1):
            if qrels.grade(qid, doc_id) >= threshold:
                hits += 1
                precision_sum += hits / rank
        per_query[qid] = precision_sum / total_relevant
    mean = float(np.mean(list(per_query.values()))) if per_query else 0.0
    return per_query, mean


def evaluate_run(run: Run, qrels: Qrels, binarization: int = 2) -> MetricReport:
    ndcg, mean_ndcg = ndcg_at(run, qrels, cutoff=10)
    mrr, mean_mrr = mrr_at(run, qrels, cutoff=10, binarization=binarization)
    ap, mean_ap = map_at(run, qrels, cutoff=100, binarization=binarization)
    return MetricReport(
        ndcg10=ndcg,
        mrr10=mrr,
        map100=ap,
        mean_ndcg10=mean_ndcg,
        mean_mrr10=mean_mrr,
        mean_map100=mean_ap,
        query_count=len(run),
    )


def selection_recall(
    student_selected: Iterable[int], teacher_scores: Sequence[float], teacher_top: int = 3
) -> float:
    """Fraction of the teacher's top windows the student selection captured.

    The denominator is min(teacher_top, window_count) so short documents
    are not penalized; the teacher top set uses the same tie rule as the
    selection stage (higher score first, then lower window index).
    """
    n = len(teacher_scores)
    if n == 0:
        raise ValueError("teacher_scores must cover at least one window")
    teacher_set = set(select_top_k(teacher_scores, teacher_top))
    captured = len(teacher_set & set(int(i) for i in student_selected))
    return captured / min(teacher_top, n)


@dataclass
class SelectionEntry:
    """One (query, document) row of a ranking diagnostics dump."""

    query_id: str
    doc_id: str
    window_count: int
    selected_windows: list[int]
    etm_scores: list[float]


def recall_by_grade(
    entries: Sequence[SelectionEntry],
    teacher_table,
    qrels: Qrels,
    teacher_top: int = 3,
) -> dict[int, float]:
    """Mean selection recall split by the document's relevance grade.

    `teacher_table` must cover every window of every entry's document (a
    full precomputed table), since the teacher's top windows are defined
    over the whole document.
    """
    sums: dict[int, list[float]] = {}
    for entry in entries:
        full = teacher_table.get(entry.query_id, entry.doc_id)
        if len(full) != entry.window_count:
            raise ValueError(
                f"teacher table covers {len(full)} windows for "
                f"({entry.query_id}, {entry.doc_id}), diagnostics say {entry.window_count}"
            )
        grade = qrels.grade(entry.query_id, entry.doc_id)
        value = selection_recall(entry.selected_windows, full, teacher_top)
        sums.setdefault(grade, []).append(value)
    return {grade: float(np.mean(values)) for grade, values in sorted(sums.items())}


def position_histogram(
    entries: Sequence[SelectionEntry], l: int = 3
) -> dict[str, np.ndarray]:
    """Aligned histograms over window positions.

    available: windows that existed, selected: windows the selection stage
    forwarded, teacher_top: the top-l of the forwarded windows by expensive
    score (the ones that formed document scores).
    """
    max_windows = max((e.window_count for e in entries), default=0)
    available = np.zeros(max_windows, dtype=np.int64)
    selected = np.zeros(max_windows, dtype=np.int64)
    teacher_top = np.zeros(max_windows, dtype=np.int64)
    for entry in entries:
        available[: entry.window_count] += 1
        for idx in entry.selected_windows:
            selected[idx] += 1
        top = select_top_k(entry.etm_scores, min(l, len(entry.etm_scores)))
        for pos in top:
            teacher_top[entry.selected_windows[pos]] += 1
    return {"available": available, "selected": selected, "teacher_top": teacher_top}
