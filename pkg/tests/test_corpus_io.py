"""Tokenizer, vocabulary, run files, qrels and teacher-table I/O."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idcm.config import CascadeConfig
from idcm.corpus import (
    OOV_ID,
    Corpus,
    FormatError,
    Qrels,
    TeacherScoreTable,
    TokenizedDocument,
    Vocabulary,
    build_vocabulary,
    read_queries,
    read_run_file,
    read_teacher_scores,
    read_triples,
    tokenize,
    write_run_file,
)

from synthdata import id_vocab


class TestTokenize:
    def test_lowercase_and_punctuation_strip(self):
        vocab = Vocabulary({"the": 2, "cat": 3, "sat": 4})
        assert tokenize("The CAT sat.", vocab) == [2, 3, 4]

    def test_empty_text(self):
        assert tokenize("", Vocabulary({"a": 2})) == []

    def test_oov(self):
        assert tokenize("zyxxyz", Vocabulary({"a": 2})) == [OOV_ID]

    def test_never_emits_pad(self):
        vocab = Vocabulary({"a": 2, "b": 3})
        ids = tokenize("a-b a.b;c 'a'", vocab)
        assert 0 not in ids

    def test_deterministic(self):
        vocab = Vocabulary({"alpha": 2, "beta": 3})
        text = "Alpha, beta! gamma? ALPHA"
        assert tokenize(text, vocab) == tokenize(text, vocab)


class TestBuildVocabulary:
    def test_frequency_then_lexicographic(self):
        vocab = build_vocabulary(["a a b"], min_count=1)
        assert vocab.token_to_id == {"a": 2, "b": 3}

    def test_min_count_threshold(self):
        vocab = build_vocabulary(["a b", "a"], min_count=2)
        assert "a" in vocab.token_to_id and "b" not in vocab.token_to_id

    def test_deterministic(self):
        corpus = ["the quick fox", "the slow fox", "a fox"]
        v1 = build_vocabulary(corpus, 1)
        v2 = build_vocabulary(corpus, 1)
        assert v1.token_to_id == v2.token_to_id

    def test_tie_broken_lexicographically(self):
        vocab = build_vocabulary(["b a", "a b"], min_count=1)
        assert vocab.token_to_id == {"a": 2, "b": 3}

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_vocabulary([], 1)
        with pytest.raises(ValueError):
            build_vocabulary([""], 1)


class TestCollection:
    def test_title_body_joined_and_empty_docs_rejected(self, tmp_path, caplog):
        path = tmp_path / "coll.tsv"
        path.write_text(
            "D1\thttp://a\tGood Title\tbody text here\n"
            "D2\thttp://b\t\t...\n"  # tokenizes to nothing -> rejected
            "D3\thttp://c\tonly title\t\n",
            encoding="utf-8",
        )
        corpus = Corpus.from_collection(str(path))
        assert "D1" in corpus and "D3" in corpus
        assert "D2" not in corpus
        title_ids = tokenize("good title body text here", corpus.vocab)
        np.testing.assert_array_equal(corpus.get("D1").tokens, title_ids)

    def test_malformed_line_raises_with_lineno(self, tmp_path):
        path = tmp_path / "coll.tsv"
        path.write_text("D1\thttp://a\tt\tb\nD2\tonly-two\n", encoding="utf-8")
        with pytest.raises(FormatError) as err:
            Corpus.from_collection(str(path))
        assert ":2:" in str(err.value)


class TestQueries:
    def test_truncated_to_cap_never_rejected(self, tmp_path):
        words = " ".join(f"w{i}" for i in range(50))
        path = tmp_path / "queries.tsv"
        path.write_text(f"Q1\t{words}\n", encoding="utf-8")
        vocab = build_vocabulary([words], 1)
        queries = read_queries(str(path), vocab, max_tokens=30)
        assert len(queries["Q1"].tokens) == 30


class TestRunFiles:
    def test_single_line(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("7 Q0 D12 1 21.5 bm25\n", encoding="utf-8")
        (candidates,) = read_run_file(str(path))
        assert candidates.query_id == "7"
        assert candidates.doc_ids == ["D12"]
        assert candidates.first_stage_scores == [21.5]

    def test_interleaved_queries_grouped_in_rank_order(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text(
            "1 Q0 A 1 9.0 t\n2 Q0 X 1 8.0 t\n1 Q0 B 2 7.0 t\n2 Q0 Y 2 6.0 t\n",
            encoding="utf-8",
        )
        lists = read_run_file(str(path))
        assert [c.query_id for c in lists] == ["1", "2"]
        assert lists[0].doc_ids == ["A", "B"]
        assert lists[1].doc_ids == ["X", "Y"]

    def test_five_column_line_errors_with_lineno(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("1 Q0 A 1 9.0 t\n1 Q0 B 2 7.0\n", encoding="utf-8")
        with pytest.raises(FormatError) as err:
            read_run_file(str(path))
        assert ":2:" in str(err.value)

    def test_depth_truncation_warns(self, tmp_path, caplog):
        path = tmp_path / "run.txt"
        lines = [f"1 Q0 D{i} {i + 1} {100 - i}.0 t" for i in range(120)]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with caplog.at_level("WARNING"):
            (candidates,) = read_run_file(str(path), depth=100)
        assert len(candidates.doc_ids) == 100
        assert any("truncating" in r.message for r in caplog.records)

    def test_duplicate_doc_rejected(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("1 Q0 A 1 9.0 t\n1 Q0 A 2 7.0 t\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_run_file(str(path))

    def test_write_emits_contiguous_ranks_descending_scores(self, tmp_path):
        path = tmp_path / "out.txt"
        write_run_file({"9": [("B", 1.0), ("A", 3.0), ("C", 2.0)]}, "tag", str(path))
        lines = path.read_text().splitlines()
        assert lines == ["9 Q0 A 1 3.0 tag", "9 Q0 C 2 2.0 tag", "9 Q0 B 3 1.0 tag"]

    def test_equal_scores_ordered_by_doc_id(self, tmp_path):
        path = tmp_path / "out.txt"
        write_run_file({"9": [("B", 1.0), ("A", 1.0)]}, "t", str(path))
        lines = path.read_text().splitlines()
        assert [l.split()[2] for l in lines] == ["A", "B"]

    @given(
        rankings=st.dictionaries(
            st.text(alphabet="0123456789", min_size=1, max_size=3),
            st.lists(
                st.tuples(
                    st.text(alphabet="ABCDEF", min_size=1, max_size=4),
                    st.floats(min_value=-100, max_value=100, allow_nan=False),
                ),
                min_size=1,
                max_size=8,
                unique_by=lambda e: e[0],
            ),
            min_size=1,
            max_size=5,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_write_read_write_roundtrip(self, rankings, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("roundtrip")
        first = tmp / "first.txt"
        second = tmp / "second.txt"
        write_run_file(rankings, "t", str(first))
        loaded = read_run_file(str(first))
        write_run_file(
            {c.query_id: list(zip(c.doc_ids, c.first_stage_scores)) for c in loaded},
            "t",
            str(second),
        )
        assert first.read_text() == second.read_text()


class TestQrels:
    def test_parse_and_default_grade(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("1 0 D1 2\n1 0 D2 0\n2 0 D1 1\n", encoding="utf-8")
        qrels = Qrels.from_file(str(path))
        assert qrels.grade("1", "D1") == 2
        assert qrels.grade("1", "D9") == 0
        assert qrels.max_grade == 2
        assert qrels.doc_grades("1") == {"D1": 2, "D2": 0}

    def test_negative_grade_rejected(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("1 0 D1 -1\n", encoding="utf-8")
        with pytest.raises(FormatError):
            Qrels.from_file(str(path))


class TestTeacherScores:
    def make_corpus_one_doc(self, length=100):
        doc = TokenizedDocument("D1", np.arange(2, 2 + length))
        return Corpus({"D1": doc}, id_vocab(200))

    def config(self):
        return CascadeConfig(d_emb=4, d_out=4, kernel_mus=(1.0,), kernel_sigmas=(0.1,), k=4, l=3)

    def test_matching_window_count_accepted(self, tmp_path):
        path = tmp_path / "scores.tsv"
        path.write_text("Q1\tD1\t0\t0.1\nQ1\tD1\t1\t0.9\n", encoding="utf-8")
        table = read_teacher_scores(str(path), self.config(), self.make_corpus_one_doc(100))
        assert table.get("Q1", "D1") == [0.1, 0.9]

    def test_mismatch_rejected_at_load(self, tmp_path):
        path = tmp_path / "scores.tsv"
        path.write_text("Q1\tD1\t0\t0.1\nQ1\tD1\t1\t0.9\nQ1\tD1\t2\t0.5\n", encoding="utf-8")
        with pytest.raises(ValueError) as err:
            read_teacher_scores(str(path), self.config(), self.make_corpus_one_doc(100))
        message = str(err.value)
        assert "Q1" in message and "D1" in message and "2" in message and "3" in message

    def test_missing_pair_raises_only_when_requested(self, tmp_path):
        path = tmp_path / "scores.tsv"
        path.write_text("Q1\tD1\t0\t0.1\nQ1\tD1\t1\t0.9\n", encoding="utf-8")
        table = read_teacher_scores(str(path), self.config(), self.make_corpus_one_doc(100))
        with pytest.raises(KeyError):
            table.get("Q2", "D1")

    def test_non_contiguous_indices_rejected(self, tmp_path):
        path = tmp_path / "scores.tsv"
        path.write_text("Q1\tD1\t0\t0.1\nQ1\tD1\t2\t0.9\n", encoding="utf-8")
        with pytest.raises(ValueError):
            TeacherScoreTable.load(str(path))

    def test_save_load_roundtrip(self, tmp_path):
        table = TeacherScoreTable({("q", "d"): [0.25, -1.5, 3.0]})
        path = tmp_path / "scores.tsv"
        table.save(str(path))
        loaded = TeacherScoreTable.load(str(path))
        assert loaded.get("q", "d") == [0.25, -1.5, 3.0]


class TestTriples:
    def test_read_and_validation(self, tmp_path):
        path = tmp_path / "triples.tsv"
        path.write_text("q1\tA\tB\n", encoding="utf-8")
        (triple,) = read_triples(str(path))
        assert (triple.query_id, triple.positive_doc_id, triple.negative_doc_id) == ("q1", "A", "B")

    def test_identical_pos_neg_rejected(self, tmp_path):
        path = tmp_path / "triples.tsv"
        path.write_text("q1\tA\tA\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_triples(str(path))
