"""Training procedures for the cascade.

Three stages are supported:
  - standalone: pairwise RankNet training of the selection model on
    document-level relevance, document score = max window score;
  - aggregate: fitting the linear aggregation weights over frozen
    expensive-scorer vectors with pairwise RankNet;
  - distill: training the selection model to mimic the expensive scorer's
    per-window scores (MSE, cross-entropy or the gain/discount pairwise
    loss), the expensive scorer being the only training signal.

All stages run deterministic mini-batch Adam with a fixed shuffle seed and
fixed accumulation order, validate at a fixed interval, keep the best
checkpoint, and stop early after `patience` non-improving validations.
Relevance judgments reach only the early-stop evaluator, never a loss.
"""

from __future__ import annotations

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from idcm.cascade import filled_top_l, rank_candidates
from idcm.ck import CkModel, backward_windows, forward_windows
from idcm.config import CascadeConfig, TrainConfig
from idcm.corpus import (
    Corpus,
    CandidateList,
    Qrels,
    Query,
    TeacherScoreTable,
    TrainTriple,
)
from idcm.losses import kd_ce_loss, kd_mse_loss, kd_ndcg2_loss, ranknet_loss
from idcm.metrics import mrr_at, ndcg_at
from idcm.teacher import ExpensiveScorer
from idcm.windows import segment

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; training aborted."""


class Adam:
    """Per-tensor Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, shapes: dict[str, tuple], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros(shape) for name, shape in shapes.items()}
        self.v = {name: np.zeros(shape) for name, shape in shapes.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, param in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / correction1
            v_hat = v / correction2
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _EarlyStopper:
    def __init__(self, patience: int):
        self.patience = patience
        self.best_metric = -np.inf
        self.stale = 0

    def update(self, metric: float) -> bool:
        """Returns True when `metric` improves on the best seen so far."""
        if metric > self.best_metric:
            self.best_metric = metric
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


def _metric_fn(name: str):
    if name == "ndcg@10":
        return lambda run, qrels: ndcg_at(run, qrels, cutoff=10)[1]
    if name == "mrr@10":
        return lambda run, qrels: mrr_at(run, qrels, cutoff=10)[1]
    raise ValueError(f"unknown early-stop metric {name!r}")


class CascadeValidator:
    """Ranks validation candidates with the full cascade and scores the run.

    The deployed object is the cascade, so early stopping watches the
    cascade's retrieval metric rather than the selection model alone.
    """

    def __init__(
        self,
        queries: dict[str, Query],
        candidates: Sequence[CandidateList],
        corpus: Corpus,
        scorer: ExpensiveScorer,
        config: CascadeConfig,
        qrels: Qrels,
        metric: str = "ndcg@10",
    ):
        self.queries = queries
        self.candidates = [c for c in candidates if c.query_id in queries]
        self.corpus = corpus
        self.scorer = scorer
        self.config = config
        self.qrels = qrels
        self.metric = _metric_fn(metric)

    def __call__(self, model: CkModel) -> float:
        run = {}
        for candidate_list in self.candidates:
            ranked = rank_candidates(
                self.queries[candidate_list.query_id],
                candidate_list,
                self.corpus,
                model,
                self.scorer,
                self.config,
            )
            run[candidate_list.query_id] = [d.doc_id for d in ranked]
        return self.metric(run, self.qrels)


class CkOnlyValidator:
    """Ranks validation candidates by max window score of the selection model.

    Used by standalone training, which has no expensive scorer in the loop.
    """

    def __init__(
        self,
        queries: dict[str, Query],
        candidates: Sequence[CandidateList],
        corpus: Corpus,
        config: CascadeConfig,
        qrels: Qrels,
        metric: str = "ndcg@10",
    ):
        self.queries = queries
        self.candidates = [c for c in candidates if c.query_id in queries]
        self.corpus = corpus
        self.config = config
        self.qrels = qrels
        self.metric = _metric_fn(metric)

    def __call__(self, model: CkModel) -> float:
        run = {}
        for candidate_list in self.candidates:
            query = self.queries[candidate_list.query_id]
            scored = []
            for doc_id in candidate_list.doc_ids:
                value, _ = _ck_document_score(model, query, self.corpus.get(doc_id), self.config)
                scored.append((doc_id, value))
            scored.sort(key=lambda e: (-e[1], e[0]))
            run[candidate_list.query_id] = [doc_id for doc_id, _ in scored]
        return self.metric(run, self.qrels)


def _doc_window_arrays(corpus: Corpus, doc_id: str, config: CascadeConfig, cache: dict):
    if doc_id not in cache:
        windows = segment(corpus.get(doc_id), config.w, config.o, config.max_doc_tokens)
        cache[doc_id] = (
            np.stack([w.tokens for w in windows]),
            np.stack([w.pad_mask for w in windows]),
        )
    return cache[doc_id]


def _ck_document_score(model: CkModel, query: Query, doc, config: CascadeConfig):
    windows = segment(doc, config.w, config.o, config.max_doc_tokens)
    tokens = np.stack([w.tokens for w in windows])
    masks = np.stack([w.pad_mask for w in windows])
    scores, _, _ = forward_windows(model, query.tokens, tokens, passage_mask=masks)
    return float(scores.max()), int(np.argmax(scores))


def _check_finite(loss: float, step: int) -> None:
    if not np.isfinite(loss):
        raise TrainingDiverged(f"loss became {loss} at step {step}; aborting")


def _batches(items: list, batch_size: int, max_steps: int, rng: np.random.Generator):
    """Yield mini-batches indefinitely, reshuffling each epoch, up to max_steps."""
    step = 0
    while step < max_steps:
        order = rng.permutation(len(items))
        for lo in range(0, len(items), batch_size):
            if step >= max_steps:
                return
            yield step, [items[i] for i in order[lo : lo + batch_size]]
            step += 1


class _TrainLoop:
    """Shared validation / early-stopping / logging mechanics."""

    def __init__(self, train_cfg: TrainConfig, validator):
        self.cfg = train_cfg
        self.validator = validator
        self.stopper = _EarlyStopper(train_cfg.patience)
        self.log: list[dict] = []
        self.loss_window: list[float] = []
        self.best_payload = None

    def record_loss(self, loss: float) -> None:
        self.loss_window.append(loss)

    def maybe_validate(self, step: int, snapshot: Callable[[], object]) -> bool:
        """Validate on the interval boundary; returns True when training should stop."""
        if (step + 1) % self.cfg.validation_interval:
            return False
        mean_loss = float(np.mean(self.loss_window)) if self.loss_window else 0.0
        self.loss_window = []
        metric = None
        improved = False
        if self.validator is not None:
            payload = snapshot()
            metric = float(self.validator(payload))
            improved = self.stopper.update(metric)
            if improved:
                self.best_payload = payload
        self.log.append(
            {"step": step + 1, "loss": mean_loss, "val_metric": metric, "best": improved}
        )
        return self.validator is not None and self.stopper.should_stop

    def finish(self, step_count: int, fallback) :
        if self.loss_window:
            self.log.append(
                {
                    "step": step_count,
                    "loss": float(np.mean(self.loss_window)),
                    "val_metric": None,
                    "best": False,
                }
            )
        return self.best_payload if self.best_payload is not None else fallback


def train_ck_distill(
    model: CkModel,
    teacher_table: TeacherScoreTable,
    train_queries: dict[str, Query],
    corpus: Corpus,
    cascade_cfg: CascadeConfig,
    train_cfg: TrainConfig,
    validator: Optional[Callable[[CkModel], float]] = None,
) -> tuple[CkModel, list[dict]]:
    """Distill the expensive scorer's window ordering into the selection model.

    Training pairs are the (query, document) keys of the teacher table
    restricted to `train_queries`; the table is the only training signal.
    Per-document losses average over windows, the batch averages over
    documents.  Returns the best checkpoint under the validator (the final
    model when no validator is given) plus the training log.
    """
    train_cfg.validate()
    model = model.copy()
    top_k = train_cfg.resolved_kd_top_k(cascade_cfg)

    def loss_fn(student: np.ndarray, teacher: np.ndarray):
        if train_cfg.loss == "kd_mse":
            return kd_mse_loss(student, teacher)
        if train_cfg.loss == "kd_ce":
            return kd_ce_loss(student, teacher)
        if train_cfg.loss == "kd_ndcg2":
            return kd_ndcg2_loss(student, teacher, top_k)
        raise ValueError(f"loss {train_cfg.loss!r} is not a distillation loss")

    pairs = sorted(key for key in teacher_table.keys() if key[0] in train_queries)
    if not pairs:
        raise ValueError("teacher table contains no rows for the training queries")

    params = model.parameters()
    adam = Adam({n: p.shape for n, p in params.items()}, lr=train_cfg.lr_ck)
    rng = np.random.default_rng(train_cfg.seed)
    loop = _TrainLoop(train_cfg, validator)
    window_cache: dict = {}
    steps_taken = 0

    for step, batch in _batches(pairs, train_cfg.batch_size, train_cfg.max_steps, rng):
        grads = {name: np.zeros_like(p) for name, p in params.items()}
        batch_loss = 0.0
        contributing = 0
        for qid, doc_id in batch:
            query = train_queries[qid]
            tokens, masks = _doc_window_arrays(corpus, doc_id, cascade_cfg, window_cache)
            teacher = np.asarray(teacher_table.get(qid, doc_id), dtype=np.float64)
            if len(teacher) != tokens.shape[0]:
                raise ValueError(
                    f"teacher vector for ({qid}, {doc_id}) has {len(teacher)} entries, "
                    f"document has {tokens.shape[0]} windows"
                )
            if train_cfg.loss == "kd_ce" and tokens.shape[0] < 2:
                continue  # a one-window distribution is degenerate for cross entropy
            scores, _, cache = forward_windows(
                model, query.tokens, tokens, passage_mask=masks, need_cache=True
            )
            loss_value, d_scores = loss_fn(scores, teacher)
            batch_loss += loss_value
            contributing += 1
            doc_grads = backward_windows(model, cache, d_scores)
            for name in grads:
                grads[name] += doc_grads[name]
        steps_taken = step + 1
        if contributing:
            mean_loss = batch_loss / contributing
            _check_finite(mean_loss, step)
            for name in grads:
                grads[name] /= contributing
            adam.step(params, grads)
            loop.record_loss(mean_loss)
        if loop.maybe_validate(step, model.copy):
            break

    best = loop.finish(steps_taken, model)
    return best, loop.log


def train_ck_standalone(
    model: CkModel,
    triples: Sequence[TrainTriple],
    queries: dict[str, Query],
    corpus: Corpus,
    cascade_cfg: CascadeConfig,
    train_cfg: TrainConfig,
    validator: Optional[Callable[[CkModel], float]] = None,
) -> tuple[CkModel, list[dict]]:
    """Pairwise RankNet training of the selection model on document labels.

    The document score is the max over its window scores, so each pair's
    gradient flows only into the two argmax windows.
    """
    train_cfg.validate()
    model = model.copy()
    if not triples:
        raise ValueError("no training triples provided")

    params = model.parameters()
    adam = Adam({n: p.shape for n, p in params.items()}, lr=train_cfg.lr_ck)
    rng = np.random.default_rng(train_cfg.seed)
    loop = _TrainLoop(train_cfg, validator)
    window_cache: dict = {}
    steps_taken = 0

    def doc_forward(query: Query, doc_id: str):
        tokens, masks = _doc_window_arrays(corpus, doc_id, cascade_cfg, window_cache)
        scores, _, cache = forward_windows(
            model, query.tokens, tokens, passage_mask=masks, need_cache=True
        )
        return scores, cache

    for step, batch in _batches(list(triples), train_cfg.batch_size, train_cfg.max_steps, rng):
        grads = {name: np.zeros_like(p) for name, p in params.items()}
        batch_loss = 0.0
        for triple in batch:
            query = queries[triple.query_id]
            pos_scores, pos_cache = doc_forward(query, triple.positive_doc_id)
            neg_scores, neg_cache = doc_forward(query, triple.negative_doc_id)
            loss_value, d_pos, d_neg = ranknet_loss(pos_scores.max(), neg_scores.max())
            batch_loss += loss_value
            upstream_pos = np.zeros(len(pos_scores))
            upstream_pos[int(np.argmax(pos_scores))] = d_pos
            upstream_neg = np.zeros(len(neg_scores))
            upstream_neg[int(np.argmax(neg_scores))] = d_neg
            for cache, upstream in ((pos_cache, upstream_pos), (neg_cache, upstream_neg)):
                doc_grads = backward_windows(model, cache, upstream)
                for name in grads:
                    grads[name] += doc_grads[name]
        steps_taken = step + 1
        mean_loss = batch_loss / len(batch)
        _check_finite(mean_loss, step)
        for name in grads:
            grads[name] /= len(batch)
        adam.step(params, grads)
        loop.record_loss(mean_loss)
        if loop.maybe_validate(step, model.copy):
            break

    best = loop.finish(steps_taken, model)
    return best, loop.log


def fit_aggregation(
    w_ps_init: Sequence[float],
    bias_init: float,
    teacher_table: TeacherScoreTable,
    triples: Sequence[TrainTriple],
    cascade_cfg: CascadeConfig,
    train_cfg: TrainConfig,
    validator: Optional[Callable[[tuple[np.ndarray, float]], float]] = None,
) -> tuple[np.ndarray, float, list[dict]]:
    """Fit the aggregation weights over frozen expensive-scorer vectors.

    Each document's score is the filled top-l of its full teacher score
    vector dotted with the weights; only the weights (and, unless frozen,
    the bias) move.  The optional validator receives (w_ps, bias) tuples.
    """
    train_cfg.validate()
    if not triples:
        raise ValueError("no training triples provided")
    w_ps = np.asarray(w_ps_init, dtype=np.float64).copy()
    if len(w_ps) != cascade_cfg.l:
        raise ValueError(f"w_ps has {len(w_ps)} entries, expected l={cascade_cfg.l}")
    bias = np.asarray([bias_init], dtype=np.float64)

    params = {"w_ps": w_ps, "w_ps_bias": bias}
    adam = Adam({n: p.shape for n, p in params.items()}, lr=train_cfg.lr_wps)
    rng = np.random.default_rng(train_cfg.seed)
    loop = _TrainLoop(train_cfg, validator)
    steps_taken = 0

    def top_vector(qid: str, doc_id: str) -> np.ndarray:
        return filled_top_l(
            teacher_table.get(qid, doc_id), cascade_cfg.l, cascade_cfg.aggregation_fill
        )

    def snapshot():
        return (w_ps.copy(), float(bias[0]))

    for step, batch in _batches(list(triples), train_cfg.batch_size, train_cfg.max_steps, rng):
        g_w = np.zeros_like(w_ps)
        g_b = np.zeros_like(bias)
        batch_loss = 0.0
        for triple in batch:
            v_pos = top_vector(triple.query_id, triple.positive_doc_id)
            v_neg = top_vector(triple.query_id, triple.negative_doc_id)
            s_pos = float(v_pos @ w_ps + bias[0])
            s_neg = float(v_neg @ w_ps + bias[0])
            loss_value, d_pos, d_neg = ranknet_loss(s_pos, s_neg)
            batch_loss += loss_value
            g_w += d_pos * v_pos + d_neg * v_neg
            g_b += d_pos + d_neg
        steps_taken = step + 1
        mean_loss = batch_loss / len(batch)
        _check_finite(mean_loss, step)
        g_w /= len(batch)
        g_b /= len(batch)
        if cascade_cfg.freeze_w_ps_bias:
            g_b[:] = 0.0
        adam.step(params, {"w_ps": g_w, "w_ps_bias": g_b})
        loop.record_loss(mean_loss)
        if loop.maybe_validate(step, snapshot):
            break

    best = loop.finish(steps_taken, snapshot())
    best_w, best_b = best
    return best_w, best_b, loop.log


def write_training_log(path: str, entries: list[dict]) -> None:
    """Line-delimited JSON records {step, loss, val_metric, best}."""
    import json

    from idcm.iohelpers import atomic_write

    with atomic_write(path) as handle:
        for entry in entries:
            handle.write(json.dumps(entry, sort_keys=True) + "\n")
