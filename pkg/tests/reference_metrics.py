"""Independent straight-line implementations of the retrieval metrics.

Plain dict/loop code with math.log2; the package's vectorized metrics are
required to agree with these to 1e-9 on randomized instances.
"""

import math


def ref_threshold(all_grades, binarization):
    """Binarize graded judgments at the point; purely binary ones at >= 1."""
    return binarization if any(g >= binarization for g in all_grades) else 1


def ref_ndcg(ranked_doc_ids, grades, cutoff=10):
    """grades: doc_id -> grade for this query (absent means 0)."""
    dcg = 0.0
    for rank, doc_id in enumerate(ranked_doc_ids[:cutoff], start=1):
        gain = (2.0 ** grades.get(doc_id, 0)) - 1.0
        dcg += gain / math.log2(1.0 + rank)
    ideal = sorted(grades.values(), reverse=True)[:cutoff]
    idcg = 0.0
    for rank, grade in enumerate(ideal, start=1):
        idcg += ((2.0**grade) - 1.0) / math.log2(1.0 + rank)
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def ref_mrr(ranked_doc_ids, grades, cutoff, threshold):
    for rank, doc_id in enumerate(ranked_doc_ids[:cutoff], start=1):
        if grades.get(doc_id, 0) >= threshold:
            return 1.0 / rank
    return 0.0


def ref_map(ranked_doc_ids, grades, cutoff, threshold):
    total_relevant = sum(1 for g in grades.values() if g >= threshold)
    if total_relevant == 0:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for rank, doc_id in enumerate(ranked_doc_ids[:cutoff], start=1):
        if grades.get(doc_id, 0) >= threshold:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / total_relevant
