"""File-backed, synthetic and external-process expensive scorers."""

import sys
import textwrap

import numpy as np
import pytest

from idcm.config import CascadeConfig
from idcm.corpus import Corpus, CandidateList, Query, TeacherScoreTable, TokenizedDocument
from idcm.teacher import (
    FileTeacher,
    ProcessTeacher,
    SyntheticTeacher,
    TeacherError,
    precompute_teacher_table,
    score_passages,
)
from idcm.windows import segment

from synthdata import id_vocab


def small_config():
    return CascadeConfig(
        d_emb=4, d_out=4, w=10, o=2, max_doc_tokens=100, k=2, l=2, w_ps=(0.5, 0.5),
        kernel_mus=(1.0,), kernel_sigmas=(0.1,),
    ).validate()


def doc_and_windows(length=25, config=None):
    config = config or small_config()
    doc = TokenizedDocument("D1", np.arange(2, 2 + length))
    return doc, segment(doc, config.w, config.o, config.max_doc_tokens)


class TestFileTeacher:
    def test_lookup_by_window_index(self):
        doc, windows = doc_and_windows()
        table = TeacherScoreTable({("Q1", "D1"): [0.1, 0.9, 0.4]})
        scorer = FileTeacher(table)
        query = Query("Q1", np.array([2, 3]))
        result = score_passages(scorer, query, doc, [windows[1]])
        assert result == [(1, 0.9)]
        assert scorer.windows_scored == 1

    def test_missing_entry_is_explicit(self):
        doc, windows = doc_and_windows()
        scorer = FileTeacher(TeacherScoreTable({}))
        with pytest.raises(TeacherError):
            score_passages(scorer, Query("Q1", np.array([2])), doc, windows[:1])

    def test_missing_window_is_explicit(self):
        doc, windows = doc_and_windows()
        scorer = FileTeacher(TeacherScoreTable({("Q1", "D1"): [0.1]}))
        with pytest.raises(TeacherError):
            score_passages(scorer, Query("Q1", np.array([2])), doc, [windows[2]])


class TestSyntheticTeacher:
    def test_term_frequency_formula(self):
        config = small_config()
        # one window: 10 real tokens, token 5 appears 3 times
        doc = TokenizedDocument("D1", np.array([5, 5, 5, 6, 7, 8, 9, 10, 11, 12]))
        windows = segment(doc, config.w, config.o, config.max_doc_tokens)
        weights = np.zeros(50)
        weights[5] = 2.0
        scorer = SyntheticTeacher(weights, noise_seed=0)
        query = Query("Q1", np.array([5]))
        ((_, value),) = score_passages(scorer, query, doc, windows)
        assert value == pytest.approx(2.0 * 3 / 10, abs=1.1e-3)

    def test_jitter_bounded_and_deterministic(self):
        doc, windows = doc_and_windows()
        scorer_a = SyntheticTeacher(np.zeros(60), noise_seed=11)
        scorer_b = SyntheticTeacher(np.zeros(60), noise_seed=11)
        query = Query("Q1", np.array([2]))
        values_a = [v for _, v in score_passages(scorer_a, query, doc, windows)]
        values_b = [v for _, v in score_passages(scorer_b, query, doc, windows)]
        assert values_a == values_b
        assert all(abs(v) <= 1e-3 for v in values_a)

    def test_jitter_breaks_ties_totally(self):
        doc, windows = doc_and_windows(length=95)
        scorer = SyntheticTeacher(np.zeros(120), noise_seed=5)
        query = Query("Q1", np.array([2]))
        values = [v for _, v in score_passages(scorer, query, doc, windows)]
        assert len(set(values)) == len(values)

    def test_query_token_multiplicity_counts(self):
        config = small_config()
        doc = TokenizedDocument("D1", np.array([5] * 10))
        windows = segment(doc, config.w, config.o, config.max_doc_tokens)
        weights = np.zeros(50)
        weights[5] = 1.0
        scorer = SyntheticTeacher(weights, noise_seed=0)
        single = score_passages(scorer, Query("Qa", np.array([5])), doc, windows)[0][1]
        double = score_passages(scorer, Query("Qa", np.array([5, 5])), doc, windows)[0][1]
        # same query id means same jitter, so the difference is one base term
        assert double - single == pytest.approx(1.0 * 10 / 10, abs=1e-12)


ECHO_STUB = textwrap.dedent(
    """
    import sys
    line = sys.stdin.readline()
    assert line.strip() == "HELLO idcm/1"
    print("OK echo-stub", flush=True)
    for line in sys.stdin:
        parts = line.rstrip("\\n").split("\\t")
        print(int(parts[3]) / 10.0, flush=True)
    """
)


class TestProcessTeacher:
    def make_stub(self, tmp_path, body=ECHO_STUB):
        path = tmp_path / "stub.py"
        path.write_text(body, encoding="utf-8")
        return [sys.executable, str(path)]

    def test_echo_stub_protocol(self, tmp_path):
        doc, windows = doc_and_windows()
        with ProcessTeacher(self.make_stub(tmp_path)) as scorer:
            assert scorer.name == "echo-stub"
            result = score_passages(scorer, Query("Q1", np.array([2, 3])), doc, [windows[2]])
        assert result == [(2, 0.2)]

    def test_request_order_preserved(self, tmp_path):
        doc, windows = doc_and_windows()
        with ProcessTeacher(self.make_stub(tmp_path)) as scorer:
            result = score_passages(scorer, Query("Q1", np.array([2])), doc, [windows[2], windows[0], windows[1]])
        assert result == [(2, 0.2), (0, 0.0), (1, 0.1)]

    def test_timeout_names_the_scorer(self, tmp_path):
        body = textwrap.dedent(
            """
            import sys, time
            sys.stdin.readline()
            print("OK sleepy", flush=True)
            sys.stdin.readline()
            time.sleep(60)
            """
        )
        doc, windows = doc_and_windows()
        scorer = ProcessTeacher(self.make_stub(tmp_path, body), timeout_s=0.5)
        try:
            with pytest.raises(TeacherError, match="sleepy"):
                score_passages(scorer, Query("Q1", np.array([2])), doc, windows[:1])
        finally:
            scorer._proc.kill()
            scorer._proc.wait()

    def test_bad_handshake_rejected(self, tmp_path):
        body = "import sys\nsys.stdin.readline()\nprint('NOPE', flush=True)\n"
        with pytest.raises(TeacherError, match="handshake"):
            ProcessTeacher(self.make_stub(tmp_path, body))


class TestPrecompute:
    def build_setup(self):
        config = small_config()
        docs = {
            "D1": TokenizedDocument("D1", np.arange(2, 27)),  # 3 windows
            "D2": TokenizedDocument("D2", np.arange(2, 17)),  # 2 windows
        }
        corpus = Corpus(docs, id_vocab(60))
        queries = {
            "Q1": Query("Q1", np.array([2, 3])),
            "Q2": Query("Q2", np.array([4])),
        }
        candidates = [
            CandidateList("Q1", ["D1", "D2"], [2.0, 1.0]),
            CandidateList("Q2", ["D2", "D1"], [2.0, 1.0]),
        ]
        return config, corpus, queries, candidates

    def test_row_cardinality_all_windows(self, tmp_path):
        config, corpus, queries, candidates = self.build_setup()
        scorer = SyntheticTeacher.from_seed(62, seed=3)
        table = precompute_teacher_table(scorer, queries, candidates, corpus, config)
        assert len(table.get("Q1", "D1")) == 3
        assert len(table.get("Q2", "D2")) == 2
        assert scorer.windows_scored == 10

    def test_rerun_is_byte_identical(self, tmp_path):
        config, corpus, queries, candidates = self.build_setup()
        paths = []
        for name in ("a.tsv", "b.tsv"):
            scorer = SyntheticTeacher.from_seed(62, seed=3)
            table = precompute_teacher_table(scorer, queries, candidates, corpus, config)
            path = tmp_path / name
            table.save(str(path))
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_roundtrip_equals_in_memory(self, tmp_path):
        config, corpus, queries, candidates = self.build_setup()
        scorer = SyntheticTeacher.from_seed(62, seed=3)
        table = precompute_teacher_table(scorer, queries, candidates, corpus, config)
        path = tmp_path / "t.tsv"
        table.save(str(path))
        loaded = TeacherScoreTable.load(str(path))
        for key in table.keys():
            assert loaded.get(*key) == pytest.approx(table.get(*key), abs=0)
