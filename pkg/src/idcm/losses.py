"""Ranking and distillation losses with analytic gradients.

All functions take float64 vectors and return (loss, gradient) pairs; the
gradient is with respect to the student scores.  Distillation losses treat
the expensive scorer's per-window scores as fixed labels.
"""

from __future__ import annotations

import warnings

import numpy as np

from idcm.cascade import select_top_k


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def _softplus(x) -> np.ndarray:
    # log(1 + exp(x)), stable for large |x|
    return np.logaddexp(0.0, x)


def ranknet_loss(s_pos: float, s_neg: float) -> tuple[float, float, float]:
    """Pairwise binary cross-entropy -log sigmoid(s_pos - s_neg).

    Returns (loss, d loss / d s_pos, d loss / d s_neg).
    """
    margin = float(s_pos) - float(s_neg)
    loss = float(_softplus(-margin))
    sig = _sigmoid(margin)
    return loss, sig - 1.0, 1.0 - sig


def kd_mse_loss(student, teacher) -> tuple[float, np.ndarray]:
    """Mean squared error over a document's window scores."""
    s = np.asarray(student, dtype=np.float64)
    t = np.asarray(teacher, dtype=np.float64)
    if s.shape != t.shape or s.ndim != 1 or s.size < 1:
        raise ValueError(f"student/teacher shape mismatch: {s.shape} vs {t.shape}")
    diff = s - t
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / s.size


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max()
    e = np.exp(shifted)
    return e / e.sum()


def kd_ce_loss(student, teacher) -> tuple[float, np.ndarray]:
    """Cross entropy between softmax distributions over a document's windows."""
    s = np.asarray(student, dtype=np.float64)
    t = np.asarray(teacher, dtype=np.float64)
    if s.shape != t.shape or s.ndim != 1:
        raise ValueError(f"student/teacher shape mismatch: {s.shape} vs {t.shape}")
    if s.size < 2:
        raise ValueError("cross-entropy distillation needs at least 2 windows")
    p_teacher = _softmax(t)
    log_p_student = s - s.max()
    log_p_student = log_p_student - np.log(np.exp(log_p_student).sum())
    loss = float(-(p_teacher * log_p_student).sum())
    grad = _softmax(s) - p_teacher
    return loss, grad


def kd_ndcg2_loss(student, teacher, top_k: int) -> tuple[float, np.ndarray]:
    """Pairwise gain/discount loss that pushes the teacher's top windows up.

    Gains are binary: 1 for the teacher's top_k windows (ties broken by
    lower index), 0 elsewhere.  For each (gain-1 i, gain-0 j) pair the
    contribution is delta_ij * -log sigmoid(s_i - s_j) with

        delta_ij = |1/log2(1 + rank_i) - 1/log2(1 + rank_j)|

    where ranks come from the student's current descending sort; the sum
    is normalized by the maximum DCG of the gain vector.  The discounts
    are treated as constants when differentiating, so the gradient is
    exact between sort-order changes.

    Only the identity of the top_k set matters: any teacher rescaling that
    preserves it leaves the loss unchanged.  If every window carries the
    same gain (top_k >= n) the loss is identically zero.
    """
    s = np.asarray(student, dtype=np.float64)
    t = np.asarray(teacher, dtype=np.float64)
    if s.shape != t.shape or s.ndim != 1 or s.size < 1:
        raise ValueError(f"student/teacher shape mismatch: {s.shape} vs {t.shape}")
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    n = s.size
    gains = np.zeros(n)
    gains[select_top_k(t, top_k)] = 1.0
    if gains.all() or not gains.any():
        warnings.warn(
            f"degenerate gain vector (top_k={top_k}, windows={n}): loss is identically zero",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.0, np.zeros(n)

    order = np.argsort(-s, kind="stable")
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(1, n + 1)
    inv_discount = 1.0 / np.log2(1.0 + ranks)

    m = int(gains.sum())
    max_dcg = float(np.sum(1.0 / np.log2(1.0 + np.arange(1, m + 1))))

    ones = np.flatnonzero(gains == 1.0)
    zeros = np.flatnonzero(gains == 0.0)
    delta = np.abs(inv_discount[ones][:, None] - inv_discount[zeros][None, :]) / max_dcg
    margins = s[ones][:, None] - s[zeros][None, :]
    loss = float(np.sum(delta * _softplus(-margins)))

    sig = 1.0 / (1.0 + np.exp(-np.clip(margins, -500, 500)))
    pair_grad = delta * (sig - 1.0)  # d/d s_i for each (i, j)
    grad = np.zeros(n)
    np.add.at(grad, ones, pair_grad.sum(axis=1))
    np.add.at(grad, zeros, -pair_grad.sum(axis=0))
    return loss, grad
