"""Intra-document cascaded document re-ranking.

A cheap trainable kernel-pooling scorer triages the passages of each
candidate document; only the most promising passages are routed to an
expensive pluggable scorer whose outputs are linearly aggregated into the
document score.  The package also ships the distillation training regime
for the cheap scorer, IR evaluation metrics, selection diagnostics and a
latency/cost benchmarking harness.
"""

__version__ = "0.1.0"

from idcm.config import CascadeConfig, TrainConfig
from idcm.windows import PassageWindow, segment
from idcm.ck import CkModel, KernelBank, ck_forward, ck_backward, init_ck
from idcm.cascade import DocumentScore, aggregate, rank_candidates, score_document, select_top_k

__all__ = [
    "CascadeConfig",
    "TrainConfig",
    "PassageWindow",
    "segment",
    "CkModel",
    "KernelBank",
    "ck_forward",
    "ck_backward",
    "init_ck",
    "DocumentScore",
    "aggregate",
    "rank_candidates",
    "score_document",
    "select_top_k",
    "__version__",
]
