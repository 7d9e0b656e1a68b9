"""Corpus ingestion and ranking file formats.

Formats handled here:
  - collection TSV:      doc_id \\t url \\t title \\t body   (url ignored)
  - queries TSV:         query_id \\t text
  - run files:           TREC 6-column ``qid Q0 docid rank score tag``
  - qrels:               TREC 4-column ``qid 0 docid grade``
  - teacher scores TSV:  query_id \\t doc_id \\t window_index \\t score
  - triples TSV:         query_id \\t positive_doc_id \\t negative_doc_id
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from idcm.iohelpers import atomic_write

log = logging.getLogger(__name__)

PAD_ID = 0
OOV_ID = 1
FIRST_REGULAR_ID = 2

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


class FormatError(ValueError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, path: str, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def split_surface(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    """Surface-form to id mapping with reserved PAD (0) and OOV (1) ids.

    Tokenizing text never emits PAD; unknown surface forms map to OOV.
    """

    token_to_id: dict[str, int]

    @property
    def size(self) -> int:
        return FIRST_REGULAR_ID + len(self.token_to_id)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, OOV_ID)


def build_vocabulary(texts: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Assign ids by descending frequency, ties by lexicographic order.

    Deterministic for a fixed corpus; raises on an empty corpus.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    seen_any = False
    for text in texts:
        seen_any = True
        counts.update(split_surface(text))
    if not seen_any or not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    token_to_id = {
        token: FIRST_REGULAR_ID + i
        for i, (token, _) in enumerate(t for t in ordered if t[1] >= min_count)
    }
    return Vocabulary(token_to_id)


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Map text to token ids; empty text yields an empty sequence."""
    return [vocab.id_of(tok) for tok in split_surface(text)]


@dataclass
class TokenizedDocument:
    doc_id: str
    tokens: np.ndarray  # int64 ids, length >= 1

    def __post_init__(self) -> None:
        self.tokens = np.asarray(self.tokens, dtype=np.int64)


@dataclass
class Query:
    query_id: str
    tokens: np.ndarray

    def __post_init__(self) -> None:
        self.tokens = np.asarray(self.tokens, dtype=np.int64)


def iter_collection(path: str) -> Iterator[tuple[str, str]]:
    """Yield (doc_id, text) pairs; title and body joined by a single space."""
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise FormatError(path, lineno, f"expected 4 tab-separated columns, got {len(parts)}")
            doc_id, _url, title, body = parts
            yield doc_id, f"{title} {body}".strip()


class Corpus:
    """Tokenized documents plus the vocabulary that produced them."""

    def __init__(self, docs: dict[str, TokenizedDocument], vocab: Vocabulary):
        self.docs = docs
        self.vocab = vocab

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.docs

    def __len__(self) -> int:
        return len(self.docs)

    def get(self, doc_id: str) -> TokenizedDocument:
        try:
            return self.docs[doc_id]
        except KeyError:
            raise KeyError(f"document {doc_id!r} not present in the corpus") from None

    @classmethod
    def from_collection(cls, path: str, min_count: int = 1) -> "Corpus":
        """Two-pass load: build the vocabulary, then tokenize every document.

        Documents tokenizing to zero tokens are rejected (skipped with a
        warning) so every ingested document can be windowed.
        """
        vocab = build_vocabulary((text for _, text in iter_collection(path)), min_count)
        docs: dict[str, TokenizedDocument] = {}
        for doc_id, text in iter_collection(path):
            ids = tokenize(text, vocab)
            if not ids:
                log.warning("rejecting document %s: tokenizes to 0 tokens", doc_id)
                continue
            if doc_id in docs:
                raise ValueError(f"duplicate doc_id {doc_id!r} in collection {path}")
            docs[doc_id] = TokenizedDocument(doc_id, np.asarray(ids, dtype=np.int64))
        return cls(docs, vocab)


def read_queries(path: str, vocab: Vocabulary, max_tokens: int = 30) -> dict[str, Query]:
    """Load and tokenize queries, truncating (never rejecting) long ones."""
    queries: dict[str, Query] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise FormatError(path, lineno, f"expected 2 tab-separated columns, got {len(parts)}")
            qid, text = parts
            ids = tokenize(text, vocab)[:max_tokens]
            if not ids:
                log.warning("skipping query %s: tokenizes to 0 tokens", qid)
                continue
            if qid in queries:
                raise FormatError(path, lineno, f"duplicate query_id {qid!r}")
            queries[qid] = Query(qid, np.asarray(ids, dtype=np.int64))
    return queries


@dataclass
class CandidateList:
    """First-stage candidates for one query, in rank order."""

    query_id: str
    doc_ids: list[str]
    first_stage_scores: list[float]


def read_run_file(path: str, depth: int = 100) -> list[CandidateList]:
    """Parse a TREC run file, grouping rows by query id in rank order.

    Queries appear in order of first occurrence.  More than `depth`
    candidates for one query are truncated with a warning.  Candidates are
    never silently reordered beyond the rank sort.
    """
    rows: dict[str, list[tuple[int, str, float]]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError(path, lineno, f"expected 6 columns, got {len(parts)}")
            qid, _q0, doc_id, rank_s, score_s, _tag = parts
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError as exc:
                raise FormatError(path, lineno, f"bad rank/score: {exc}") from None
            if qid not in rows:
                rows[qid] = []
                order.append(qid)
            rows[qid].append((rank, doc_id, score))
    candidates = []
    for qid in order:
        group = sorted(rows[qid], key=lambda r: r[0])
        if len(group) > depth:
            log.warning("query %s has %d candidates; truncating to %d", qid, len(group), depth)
            group = group[:depth]
        doc_ids = [doc_id for _, doc_id, _ in group]
        if len(set(doc_ids)) != len(doc_ids):
            dupes = [d for d, c in Counter(doc_ids).items() if c > 1]
            raise ValueError(f"{path}: duplicate doc_ids for query {qid}: {dupes}")
        candidates.append(CandidateList(qid, doc_ids, [s for _, _, s in group]))
    return candidates


def write_run_file(
    rankings: Mapping[str, Sequence[tuple[str, float]]], tag: str, path: str
) -> None:
    """Write a TREC run file: ranks 1..n, scores descending per query.

    Entries are ordered by descending score with ties broken by ascending
    doc_id (the global tie rule), so writing is idempotent on already
    rank-normalized data.
    """
    with atomic_write(path) as handle:
        for qid, entries in rankings.items():
            ordered = sorted(entries, key=lambda e: (-e[1], e[0]))
            for rank, (doc_id, score) in enumerate(ordered, start=1):
                handle.write(f"{qid} Q0 {doc_id} {rank} {score!r} {tag}\n")


class Qrels:
    """Graded relevance judgments; absent pairs have grade 0."""

    def __init__(self, grades: dict[tuple[str, str], int]):
        for (qid, did), grade in grades.items():
            if grade < 0:
                raise ValueError(f"negative grade for ({qid}, {did}): {grade}")
        self._grades = grades

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._grades.get((query_id, doc_id), 0)

    @property
    def max_grade(self) -> int:
        return max(self._grades.values(), default=0)

    def doc_grades(self, query_id: str) -> dict[str, int]:
        return {d: g for (q, d), g in self._grades.items() if q == query_id}

    def items(self):
        return self._grades.items()

    @classmethod
    def from_file(cls, path: str) -> "Qrels":
        grades: dict[tuple[str, str], int] = {}
        with open(path, "r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                parts = line.split()
                if len(parts) != 4:
                    raise FormatError(path, lineno, f"expected 4 columns, got {len(parts)}")
                qid, _iter, doc_id, grade_s = parts
                try:
                    grade = int(grade_s)
                except ValueError:
                    raise FormatError(path, lineno, f"bad grade {grade_s!r}") from None
                if grade < 0:
                    raise FormatError(path, lineno, f"negative grade {grade}")
                grades[(qid, doc_id)] = grade
        return cls(grades)


class TeacherScoreTable:
    """Per (query, document) vector of expensive-scorer window scores."""

    def __init__(self, scores: dict[tuple[str, str], list[float]]):
        self._scores = scores

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._scores

    def __len__(self) -> int:
        return len(self._scores)

    def keys(self):
        return self._scores.keys()

    def get(self, query_id: str, doc_id: str) -> list[float]:
        try:
            return self._scores[(query_id, doc_id)]
        except KeyError:
            raise KeyError(
                f"no teacher scores stored for query {query_id!r}, document {doc_id!r}"
            ) from None

    def window_score(self, query_id: str, doc_id: str, window_index: int) -> float:
        vector = self.get(query_id, doc_id)
        if not 0 <= window_index < len(vector):
            raise LookupError(
                f"teacher scores for ({query_id}, {doc_id}) cover windows 0..{len(vector) - 1}, "
                f"requested {window_index}"
            )
        return vector[window_index]

    @classmethod
    def load(cls, path: str) -> "TeacherScoreTable":
        """Read the TSV format; window indices must be 0-based and contiguous."""
        raw: dict[tuple[str, str], dict[int, float]] = {}
        with open(path, "r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 4:
                    raise FormatError(path, lineno, f"expected 4 tab-separated columns, got {len(parts)}")
                qid, doc_id, idx_s, score_s = parts
                try:
                    idx = int(idx_s)
                    score = float(score_s)
                except ValueError as exc:
                    raise FormatError(path, lineno, f"bad window_index/score: {exc}") from None
                slot = raw.setdefault((qid, doc_id), {})
                if idx in slot:
                    raise FormatError(path, lineno, f"duplicate window {idx} for ({qid}, {doc_id})")
                slot[idx] = score
        scores: dict[tuple[str, str], list[float]] = {}
        for key, by_index in raw.items():
            n = len(by_index)
            if sorted(by_index) != list(range(n)):
                raise ValueError(
                    f"{path}: window indices for ({key[0]}, {key[1]}) are not contiguous from 0: "
                    f"{sorted(by_index)}"
                )
            scores[key] = [by_index[i] for i in range(n)]
        return cls(scores)

    def save(self, path: str) -> None:
        with atomic_write(path) as handle:
            for (qid, doc_id), vector in self._scores.items():
                for idx, score in enumerate(vector):
                    handle.write(f"{qid}\t{doc_id}\t{idx}\t{score!r}\n")


def read_teacher_scores(path: str, config, corpus: Corpus) -> TeacherScoreTable:
    """Load a teacher score table and validate vector lengths eagerly.

    Every stored vector must match the window count `segment` produces for
    that document under `config`; a mismatch fails at load time so config
    drift surfaces immediately.
    """
    from idcm.windows import segment  # local import to avoid a cycle

    table = TeacherScoreTable.load(path)
    for (qid, doc_id), vector in table._scores.items():
        doc = corpus.get(doc_id)
        expected = len(segment(doc, config.w, config.o, config.max_doc_tokens))
        if len(vector) != expected:
            raise ValueError(
                f"teacher score length mismatch for query {qid!r}, document {doc_id!r}: "
                f"expected {expected} windows, got {len(vector)}"
            )
    return table


@dataclass
class TrainTriple:
    query_id: str
    positive_doc_id: str
    negative_doc_id: str

    def __post_init__(self) -> None:
        if self.positive_doc_id == self.negative_doc_id:
            raise ValueError(
                f"triple for query {self.query_id!r} has identical positive and negative "
                f"document {self.positive_doc_id!r}"
            )


def read_triples(path: str) -> list[TrainTriple]:
    triples = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise FormatError(path, lineno, f"expected 3 tab-separated columns, got {len(parts)}")
            triples.append(TrainTriple(*parts))
    return triples
