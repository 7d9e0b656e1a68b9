"""Command-line entry point wiring all modules together.

Subcommands: window, teacher-gen, train, rank, eval, recall, positions,
bench.  Every command accepts a shared ``key = value`` config file whose
values CLI flags override, writes outputs atomically, and drops a
``<output>.manifest.json`` reproducibility record beside each primary
output.  Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import logging
import sys
import threading
from typing import Optional, Sequence

import numpy as np

from idcm import __version__
from idcm.bench import CostModel, measure_latency, parse_grid, simulate_cost, summarize
from idcm.cascade import rank_candidates
from idcm.ck import CkModel, init_ck, load_checkpoint, save_checkpoint
from idcm.config import (
    CascadeConfig,
    ConfigError,
    TrainConfig,
    build_configs,
    read_config_file,
    write_config_file,
)
from idcm.corpus import (
    Corpus,
    FormatError,
    Qrels,
    TeacherScoreTable,
    read_queries,
    read_run_file,
    read_teacher_scores,
    read_triples,
    write_run_file,
)
from idcm.iohelpers import atomic_write
from idcm.manifest import build_manifest, write_manifest
from idcm.metrics import SelectionEntry, evaluate_run, position_histogram, recall_by_grade
from idcm.teacher import (
    ExpensiveScorer,
    FileTeacher,
    ProcessTeacher,
    SyntheticTeacher,
    TeacherError,
    precompute_teacher_table,
)
from idcm.train import (
    CascadeValidator,
    CkOnlyValidator,
    TrainingDiverged,
    fit_aggregation,
    train_ck_distill,
    train_ck_standalone,
    write_training_log,
)
from idcm.windows import segment

log = logging.getLogger("idcm")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="seed override for model init and training")
    parser.add_argument("--workers", type=int, default=1, help="parallel query workers")
    parser.add_argument("--w", type=int, help="window core size")
    parser.add_argument("--o", type=int, help="window overlap extension per side")
    parser.add_argument("--max-doc-tokens", type=int, dest="max_doc_tokens")
    parser.add_argument("--k", type=int, help="selection count")
    parser.add_argument("--l", type=int, help="aggregation count")
    parser.add_argument("--selector", choices=("ck", "ck_small", "static_first", "static_top_tf", "all"))
    parser.add_argument("--candidate-depth", type=int, dest="candidate_depth")


def _configs(args) -> tuple[CascadeConfig, TrainConfig]:
    file_values = read_config_file(args.config) if args.config else None
    overrides = {
        "w": args.w,
        "o": args.o,
        "max_doc_tokens": args.max_doc_tokens,
        "k": args.k,
        "l": args.l,
        "selector": args.selector,
        "candidate_depth": args.candidate_depth,
        "seed": args.seed,
    }
    if getattr(args, "loss", None):
        overrides["loss"] = args.loss
    return build_configs(file_values, overrides)


def _make_teacher(spec: str, vocab_size: int) -> ExpensiveScorer:
    kind, _, rest = spec.partition(":")
    if kind == "file" and rest:
        return FileTeacher(TeacherScoreTable.load(rest))
    if kind == "proc" and rest:
        return ProcessTeacher(rest)
    if kind == "synthetic" and rest:
        return SyntheticTeacher.from_seed(vocab_size, int(rest))
    raise ConfigError(
        f"bad --teacher spec {spec!r}; expected file:PATH, proc:CMD or synthetic:SEED"
    )


class _PerWorkerTeachers:
    """One scorer connection per worker thread (process scorers serialize
    requests per connection, so parallel workers each get their own)."""

    def __init__(self, factory):
        self._factory = factory
        self._local = threading.local()
        self._all: list[ExpensiveScorer] = []
        self._lock = threading.Lock()

    def get(self) -> ExpensiveScorer:
        scorer = getattr(self._local, "scorer", None)
        if scorer is None:
            scorer = self._factory()
            self._local.scorer = scorer
            with self._lock:
                self._all.append(scorer)
        return scorer

    def close_all(self) -> None:
        for scorer in self._all:
            scorer.close()


def _load_model(path: Optional[str], config: CascadeConfig, vocab_size: int) -> Optional[CkModel]:
    if config.selector not in ("ck", "ck_small"):
        return None
    if not path:
        raise ConfigError(f"selector {config.selector!r} requires --ck-model")
    model, snapshot = load_checkpoint(path)
    if snapshot.get("vocab_size") not in (None, vocab_size):
        raise ConfigError(
            f"checkpoint vocabulary size {snapshot.get('vocab_size')} does not match "
            f"the collection vocabulary ({vocab_size}); was the model trained on this collection?"
        )
    return model


def _rank_all(queries, candidates, corpus, model, teacher_factory, config, workers: int):
    """Rank every candidate list; results are independent of worker count."""
    results: dict[str, list] = {}

    if workers <= 1:
        scorer = teacher_factory()
        try:
            for candidate_list in candidates:
                query = queries[candidate_list.query_id]
                results[candidate_list.query_id] = rank_candidates(
                    query, candidate_list, corpus, model, scorer, config
                )
        finally:
            scorer.close()
        return results, scorer.windows_scored

    pool = _PerWorkerTeachers(teacher_factory)

    def one(candidate_list):
        query = queries[candidate_list.query_id]
        return candidate_list.query_id, rank_candidates(
            query, candidate_list, corpus, model, pool.get(), config
        )

    try:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            for qid, ranked in executor.map(one, candidates):
                results[qid] = ranked
    finally:
        pool.close_all()
    total = sum(s.windows_scored for s in pool._all)
    return results, total


def _write_diagnostics(path: str, results: dict) -> None:
    """TSV dump: query_id, doc_id, window_count, selected windows, their scores."""
    with atomic_write(path) as handle:
        for qid, ranked in results.items():
            for doc in ranked:
                selected = ",".join(str(i) for i in doc.selected_windows)
                scores = ",".join(repr(s) for s in doc.etm_scores)
                handle.write(f"{qid}\t{doc.doc_id}\t{doc.window_count}\t{selected}\t{scores}\n")


def read_diagnostics(path: str) -> list[SelectionEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise FormatError(path, lineno, f"expected 5 tab-separated columns, got {len(parts)}")
            qid, doc_id, count_s, selected_s, scores_s = parts
            entries.append(
                SelectionEntry(
                    query_id=qid,
                    doc_id=doc_id,
                    window_count=int(count_s),
                    selected_windows=[int(x) for x in selected_s.split(",") if x],
                    etm_scores=[float(x) for x in scores_s.split(",") if x],
                )
            )
    return entries


# --- subcommand handlers ----------------------------------------------------


def cmd_window(args) -> int:
    config, _ = _configs(args)
    corpus = Corpus.from_collection(args.collection, config.min_count)
    wanted = args.docs if args.docs else list(corpus.docs)
    with atomic_write(args.out) as handle:
        for doc_id in wanted:
            doc = corpus.get(doc_id)
            for window in segment(doc, config.w, config.o, config.max_doc_tokens):
                handle.write(
                    f"{doc.doc_id}\t{window.window_index}\t{window.first_real_pos}\t{window.last_real_pos}\n"
                )
    write_manifest(
        args.out,
        build_manifest("window", config.snapshot(), {}, [args.collection, args.config], [args.out]),
    )
    return 0


def cmd_teacher_gen(args) -> int:
    config, train_cfg = _configs(args)
    corpus = Corpus.from_collection(args.collection, config.min_count)
    queries = read_queries(args.queries, corpus.vocab, config.query_max_tokens)
    candidates = read_run_file(args.run_in, config.candidate_depth)
    scorer = _make_teacher(args.teacher, corpus.vocab.size)
    try:
        table = precompute_teacher_table(scorer, queries, candidates, corpus, config)
    finally:
        scorer.close()
    table.save(args.out)
    write_manifest(
        args.out,
        build_manifest(
            "teacher-gen",
            config.snapshot(),
            {"seed": train_cfg.seed},
            [args.collection, args.queries, args.run_in, args.config],
            [args.out],
        ),
    )
    return 0


def cmd_rank(args) -> int:
    config, train_cfg = _configs(args)
    corpus = Corpus.from_collection(args.collection, config.min_count)
    queries = read_queries(args.queries, corpus.vocab, config.query_max_tokens)
    candidates = read_run_file(args.run_in, config.candidate_depth)
    for candidate_list in candidates:
        if candidate_list.query_id not in queries:
            raise KeyError(f"run file references unknown query {candidate_list.query_id!r}")
    model = _load_model(args.ck_model, config, corpus.vocab.size)
    teacher_factory = lambda: _make_teacher(args.teacher, corpus.vocab.size)
    results, _ = _rank_all(queries, candidates, corpus, model, teacher_factory, config, args.workers)
    run = {
        qid: [(doc.doc_id, doc.score) for doc in results[qid]]
        for qid in (c.query_id for c in candidates)
    }
    write_run_file(run, args.tag, args.run_out)
    outputs = [args.run_out]
    if args.diagnostics:
        _write_diagnostics(args.diagnostics, results)
        outputs.append(args.diagnostics)
    write_manifest(
        args.run_out,
        build_manifest(
            "rank",
            config.snapshot(),
            {"seed": train_cfg.seed},
            [args.collection, args.queries, args.run_in, args.ck_model, args.config],
            outputs,
        ),
    )
    return 0


def cmd_train(args) -> int:
    config, train_cfg = _configs(args)
    corpus = Corpus.from_collection(args.collection, config.min_count)
    log_path = args.log or args.out_model + ".trainlog.jsonl"

    if args.stage == "aggregate":
        if not args.teacher_table or not args.triples:
            raise ConfigError("train --stage aggregate requires --teacher-table and --triples")
        table = read_teacher_scores(args.teacher_table, config, corpus)
        triples = read_triples(args.triples)
        w_ps, bias, entries = fit_aggregation(
            config.w_ps, config.w_ps_bias, table, triples, config, train_cfg
        )
        write_config_file(args.out_model, {"w_ps": list(w_ps), "w_ps_bias": float(bias)})
        write_training_log(log_path, entries)
        write_manifest(
            args.out_model,
            build_manifest(
                "train-aggregate",
                config.snapshot(),
                {"seed": train_cfg.seed},
                [args.collection, args.teacher_table, args.triples, args.config],
                [args.out_model, log_path],
            ),
        )
        return 0

    if not args.queries:
        raise ConfigError(f"train --stage {args.stage} requires --queries")
    queries = read_queries(args.queries, corpus.vocab, config.query_max_tokens)
    if args.init_model:
        model, _ = load_checkpoint(args.init_model)
    else:
        model = init_ck(config, corpus.vocab.size, train_cfg.seed)

    table = None
    if args.stage == "distill":
        if not args.teacher_table:
            raise ConfigError("train --stage distill requires --teacher-table")
        table = read_teacher_scores(args.teacher_table, config, corpus)

    validator = None
    if args.val_queries and args.val_qrels:
        val_queries = read_queries(args.val_queries, corpus.vocab, config.query_max_tokens)
        val_qrels = Qrels.from_file(args.val_qrels)
        candidates = read_run_file(args.run_in, config.candidate_depth) if args.run_in else []
        if args.stage == "distill":
            validator = CascadeValidator(
                val_queries, candidates, corpus, FileTeacher(table), config, val_qrels,
                train_cfg.early_stop_metric,
            )
        else:
            validator = CkOnlyValidator(
                val_queries, candidates, corpus, config, val_qrels, train_cfg.early_stop_metric
            )

    if args.stage == "distill":
        trained, entries = train_ck_distill(
            model, table, queries, corpus, config, train_cfg, validator
        )
        inputs = [args.collection, args.queries, args.teacher_table, args.run_in, args.config]
    else:  # standalone
        if not args.triples:
            raise ConfigError("train --stage standalone requires --triples")
        triples = read_triples(args.triples)
        trained, entries = train_ck_standalone(
            model, triples, queries, corpus, config, train_cfg, validator
        )
        inputs = [args.collection, args.queries, args.triples, args.run_in, args.config]

    save_checkpoint(trained, config, args.out_model, corpus.vocab.size)
    write_training_log(log_path, entries)
    write_manifest(
        args.out_model,
        build_manifest(
            f"train-{args.stage}",
            {**config.snapshot(), **train_cfg.snapshot()},
            {"seed": train_cfg.seed},
            inputs,
            [args.out_model, log_path],
        ),
    )
    return 0


def cmd_eval(args) -> int:
    config, _ = _configs(args)
    candidates = read_run_file(args.run, config.candidate_depth)
    run = {c.query_id: c.doc_ids for c in candidates}
    qrels = Qrels.from_file(args.qrels)
    report = evaluate_run(run, qrels, binarization=args.binarization)
    with atomic_write(args.out) as handle:
        handle.write("query_id\tndcg@10\tmrr@10\tmap@100\n")
        for qid in run:
            handle.write(
                f"{qid}\t{report.ndcg10[qid]!r}\t{report.mrr10[qid]!r}\t{report.map100[qid]!r}\n"
            )
        handle.write(
            f"mean\t{report.mean_ndcg10!r}\t{report.mean_mrr10!r}\t{report.mean_map100!r}\n"
        )
    print(f"queries evaluated: {report.query_count}")
    print(f"ndcg@10  {report.mean_ndcg10:.4f}")
    print(f"mrr@10   {report.mean_mrr10:.4f}")
    print(f"map@100  {report.mean_map100:.4f}")
    if args.figure:
        from idcm.figures import save_metric_histogram

        save_metric_histogram(report.ndcg10, "ndcg@10", args.figure)
    write_manifest(
        args.out,
        build_manifest(
            "eval", config.snapshot(), {}, [args.run, args.qrels, args.config],
            [args.out] + ([args.figure] if args.figure else []),
        ),
    )
    return 0


def cmd_recall(args) -> int:
    config, _ = _configs(args)
    entries = read_diagnostics(args.diagnostics)
    table = TeacherScoreTable.load(args.teacher_table)
    qrels = Qrels.from_file(args.qrels)
    per_grade = recall_by_grade(entries, table, qrels, args.teacher_top)
    with atomic_write(args.out) as handle:
        handle.write("grade\tmean_selection_recall\n")
        for grade, value in per_grade.items():
            handle.write(f"{grade}\t{value!r}\n")
    for grade, value in per_grade.items():
        print(f"grade {grade}: recall {value:.4f}")
    if args.figure:
        from idcm.figures import save_recall_bars

        save_recall_bars(per_grade, args.figure)
    write_manifest(
        args.out,
        build_manifest(
            "recall", config.snapshot(), {},
            [args.diagnostics, args.teacher_table, args.qrels, args.config],
            [args.out] + ([args.figure] if args.figure else []),
        ),
    )
    return 0


def cmd_positions(args) -> int:
    config, _ = _configs(args)
    entries = read_diagnostics(args.diagnostics)
    hist = position_histogram(entries, args.l if args.l else config.l)
    with atomic_write(args.out) as handle:
        handle.write("window_index\tavailable\tselected\tteacher_top\n")
        for idx in range(len(hist["available"])):
            handle.write(
                f"{idx}\t{hist['available'][idx]}\t{hist['selected'][idx]}\t{hist['teacher_top'][idx]}\n"
            )
    if args.figure:
        from idcm.figures import save_position_histogram

        save_position_histogram(hist, args.figure)
    write_manifest(
        args.out,
        build_manifest(
            "positions", config.snapshot(), {}, [args.diagnostics, args.config],
            [args.out] + ([args.figure] if args.figure else []),
        ),
    )
    return 0


def cmd_bench(args) -> int:
    config, train_cfg = _configs(args)
    cost_model = CostModel.parse(args.cost_model)
    corpus = Corpus.from_collection(args.collection, config.min_count)
    candidates = read_run_file(args.run_in, config.candidate_depth)

    if args.mode == "sim":
        window_counts = {
            c.query_id: [
                len(segment(corpus.get(d), config.w, config.o, config.max_doc_tokens))
                for d in c.doc_ids
            ]
            for c in candidates
        }
        sims = simulate_cost(window_counts, config.k, cost_model)
        speedups = [s.speedup for s in sims]
        with atomic_write(args.out) as handle:
            handle.write("query_id\tcascade_cost\tall_cost\tspeedup\n")
            for sim in sims:
                handle.write(f"{sim.query_id}\t{sim.cascade_cost!r}\t{sim.all_cost!r}\t{sim.speedup!r}\n")
            handle.write(f"# median_speedup\t{float(np.median(speedups))!r}\n")
            for key, value in summarize([s.cascade_cost for s in sims]).items():
                handle.write(f"# cascade_cost_{key}\t{value!r}\n")
            for key, value in summarize([s.all_cost for s in sims]).items():
                handle.write(f"# all_cost_{key}\t{value!r}\n")
        print(f"median simulated speedup (k={config.k}): {float(np.median(speedups)):.3f}x")
        if args.figure:
            from idcm.figures import save_latency_cdf

            costs = {"cascade": [s.cascade_cost for s in sims], "all": [s.all_cost for s in sims]}
            top = max(max(v) for v in costs.values())
            grid = np.linspace(0.0, top, 200)
            save_latency_cdf(costs, grid, args.figure)
        write_manifest(
            args.out,
            build_manifest(
                "bench-sim", config.snapshot(), {},
                [args.collection, args.run_in, args.config],
                [args.out] + ([args.figure] if args.figure else []),
            ),
        )
        return 0

    # wall mode: strictly single-worker timing
    queries = read_queries(args.queries, corpus.vocab, config.query_max_tokens)
    model = _load_model(args.ck_model, config, corpus.vocab.size)
    scorer = _make_teacher(args.teacher, corpus.vocab.size)
    by_qid = {c.query_id: c for c in candidates}

    def run_query(qid: str) -> tuple[int, int]:
        ranked = rank_candidates(queries[qid], by_qid[qid], corpus, model, scorer, config)
        ck_windows = (
            sum(d.window_count for d in ranked) if config.selector in ("ck", "ck_small") else 0
        )
        etm_windows = sum(len(d.selected_windows) for d in ranked)
        return ck_windows, etm_windows

    try:
        records, summary = measure_latency(
            run_query, list(by_qid), repetitions=args.reps, warmup=args.warmup
        )
    finally:
        scorer.close()
    with atomic_write(args.out) as handle:
        handle.write("query_id\twall_ms\tck_windows_scored\tetm_windows_scored\n")
        for record in records:
            handle.write(
                f"{record.query_id}\t{record.wall_ms!r}\t{record.ck_windows_scored}\t{record.etm_windows_scored}\n"
            )
        for key, value in summary.items():
            handle.write(f"# wall_ms_{key}\t{value!r}\n")
    print("wall-clock summary (ms): " + ", ".join(f"{k}={v:.3f}" for k, v in summary.items()))
    if args.figure:
        from idcm.figures import save_latency_cdf

        grid = parse_grid(args.grid) if args.grid else np.linspace(0, max(r.wall_ms for r in records), 200)
        save_latency_cdf({config.selector: [r.wall_ms for r in records]}, grid, args.figure)
    write_manifest(
        args.out,
        build_manifest(
            "bench-wall", config.snapshot(), {"seed": train_cfg.seed},
            [args.collection, args.queries, args.run_in, args.ck_model, args.config],
            [args.out] + ([args.figure] if args.figure else []),
        ),
    )
    return 0


# --- parser -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="idcm",
        description="Cascaded intra-document re-ranking: select passages cheaply, score few expensively.",
    )
    parser.add_argument("--version", action="version", version=f"idcm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("window", help="dump passage windows for inspection")
    _add_common(p)
    p.add_argument("--collection", required=True)
    p.add_argument("--docs", nargs="*", help="restrict to these doc_ids")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_window)

    p = sub.add_parser("teacher-gen", help="precompute expensive scores for all candidate windows")
    _add_common(p)
    p.add_argument("--collection", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--run-in", required=True, dest="run_in")
    p.add_argument("--teacher", required=True, help="file:PATH | proc:CMD | synthetic:SEED")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_teacher_gen)

    p = sub.add_parser("train", help="train the selection model or the aggregation weights")
    _add_common(p)
    p.add_argument("--stage", required=True, choices=("standalone", "aggregate", "distill"))
    p.add_argument("--loss", choices=("ranknet", "kd_mse", "kd_ce", "kd_ndcg2"))
    p.add_argument("--collection", required=True)
    p.add_argument("--queries", help="training queries TSV (standalone/distill)")
    p.add_argument("--teacher-table", dest="teacher_table", help="precomputed teacher scores")
    p.add_argument("--triples", help="query/positive/negative TSV (standalone/aggregate)")
    p.add_argument("--run-in", dest="run_in", help="candidates for validation ranking")
    p.add_argument("--val-queries", dest="val_queries")
    p.add_argument("--val-qrels", dest="val_qrels")
    p.add_argument("--init-model", dest="init_model")
    p.add_argument("--out-model", required=True, dest="out_model")
    p.add_argument("--log", help="training log path (default: <out-model>.trainlog.jsonl)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("rank", help="re-rank candidate lists with the cascade")
    _add_common(p)
    p.add_argument("--collection", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--run-in", required=True, dest="run_in")
    p.add_argument("--run-out", required=True, dest="run_out")
    p.add_argument("--teacher", required=True, help="file:PATH | proc:CMD | synthetic:SEED")
    p.add_argument("--ck-model", dest="ck_model", help="selection model checkpoint")
    p.add_argument("--diagnostics", help="write per-document selection dump (TSV)")
    p.add_argument("--tag", default="idcm", help="run tag column")
    p.set_defaults(handler=cmd_rank)

    p = sub.add_parser("eval", help="score a run file against qrels")
    _add_common(p)
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--binarization", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--figure", help="also render a per-query metric histogram")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("recall", help="selection recall against the expensive scorer's top windows")
    _add_common(p)
    p.add_argument("--diagnostics", required=True, help="dump written by `rank --diagnostics`")
    p.add_argument("--teacher-table", required=True, dest="teacher_table")
    p.add_argument("--qrels", required=True)
    p.add_argument("--teacher-top", type=int, default=3, dest="teacher_top")
    p.add_argument("--out", required=True)
    p.add_argument("--figure")
    p.set_defaults(handler=cmd_recall)

    p = sub.add_parser("positions", help="histogram of selected window positions")
    _add_common(p)
    p.add_argument("--diagnostics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--figure")
    p.set_defaults(handler=cmd_positions)

    p = sub.add_parser("bench", help="latency measurement or cost-model simulation")
    _add_common(p)
    p.add_argument("--mode", required=True, choices=("wall", "sim"))
    p.add_argument("--collection", required=True)
    p.add_argument("--run-in", required=True, dest="run_in")
    p.add_argument("--queries", help="required for wall mode")
    p.add_argument("--teacher", help="required for wall mode")
    p.add_argument("--ck-model", dest="ck_model")
    p.add_argument("--cost-model", default="ck=1,etm=40,overhead=0", dest="cost_model")
    p.add_argument("--grid", help="CDF grid start:step:stop (ms)")
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--figure")
    p.set_defaults(handler=cmd_bench)

    return parser


def dispatch(argv: Sequence[str]) -> int:
    """Run one CLI invocation; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "bench" and args.mode == "wall":
        missing = [flag for flag, val in (("--queries", args.queries), ("--teacher", args.teacher)) if not val]
        if missing:
            print(f"error: bench --mode wall requires {', '.join(missing)}", file=sys.stderr)
            return 2
    try:
        return args.handler(args)
    except (ConfigError, FormatError, TeacherError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, LookupError, OSError) as exc:
        message = str(exc).strip('"').replace("\n", " ")
        print(f"error: {message}", file=sys.stderr)
        return 1


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
