"""The expensive scorer behind a uniform interface.

Three implementations ship here: a file-backed table of precomputed
scores, a deterministic synthetic scorer for tests and desk-scale
experiments, and a line-protocol client for an external scorer process.
No transformer lives in this repository; real model scores arrive through
the file or process back ends.

External-process protocol (over stdin/stdout of the child):
    engine: HELLO idcm/1
    scorer: OK <name>
    engine: S \\t query_id \\t doc_id \\t window_index \\t q-token-ids \\t window-token-ids
    scorer: <score-as-decimal>          (one response line per request, in order)
"""

from __future__ import annotations

import hashlib
import queue
import shlex
import subprocess
import threading
import time
from typing import Sequence

import numpy as np

from idcm.config import CascadeConfig
from idcm.corpus import Corpus, CandidateList, Query, TeacherScoreTable, TokenizedDocument
from idcm.windows import PassageWindow, segment

PROTOCOL_HELLO = "HELLO idcm/1"


class TeacherError(RuntimeError):
    """Scorer failed; message names the scorer and the offending request."""


class ExpensiveScorer:
    """Deterministic per-window scorer with a capability descriptor.

    `windows_scored` counts every scored window, letting tests assert the
    engine never pays for a window the selection stage did not pick.
    """

    name = "abstract"
    per_passage_cost_units = 40.0

    def __init__(self) -> None:
        self.windows_scored = 0
        self._count_lock = threading.Lock()

    def _count(self, n: int) -> None:
        with self._count_lock:
            self.windows_scored += n

    def score_window(self, query: Query, doc: TokenizedDocument, window: PassageWindow) -> float:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "ExpensiveScorer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def score_passages(
    scorer: ExpensiveScorer,
    query: Query,
    doc: TokenizedDocument,
    windows: Sequence[PassageWindow],
) -> list[tuple[int, float]]:
    """Score the requested windows; output order matches request order."""
    results = []
    for window in windows:
        value = float(scorer.score_window(query, doc, window))
        if not np.isfinite(value):
            raise TeacherError(
                f"scorer {scorer.name!r} returned non-finite score {value} for "
                f"({query.query_id}, {doc.doc_id}, window {window.window_index})"
            )
        results.append((window.window_index, value))
    scorer._count(len(windows))
    return results


class FileTeacher(ExpensiveScorer):
    """Scores looked up from a precomputed table; missing entries raise."""

    name = "file"

    def __init__(self, table: TeacherScoreTable, per_passage_cost_units: float = 40.0):
        super().__init__()
        self.table = table
        self.per_passage_cost_units = per_passage_cost_units

    def score_window(self, query: Query, doc: TokenizedDocument, window: PassageWindow) -> float:
        try:
            return self.table.window_score(query.query_id, doc.doc_id, window.window_index)
        except (KeyError, LookupError) as exc:
            raise TeacherError(f"file teacher: {exc}") from None


class SyntheticTeacher(ExpensiveScorer):
    """Deterministic heavy-scorer stand-in driven by a hidden term-weight table.

    score = sum over query tokens t of weight(t) * tf(t, real window tokens)
    divided by the real window length, plus a seeded jitter of magnitude
    <= 1e-3 that depends only on (seed, query_id, doc_id, window_index).
    The jitter breaks ties, so window orderings are total with
    probability 1 and distillation targets are unambiguous.
    """

    name = "synthetic"
    JITTER_MAGNITUDE = 1e-3

    def __init__(
        self,
        term_weights: np.ndarray,
        noise_seed: int,
        per_passage_cost_units: float = 40.0,
        delay_s: float = 0.0,
    ):
        super().__init__()
        self.term_weights = np.asarray(term_weights, dtype=np.float64)
        self.noise_seed = int(noise_seed)
        self.per_passage_cost_units = per_passage_cost_units
        self.delay_s = delay_s

    @classmethod
    def from_seed(cls, vocab_size: int, seed: int, **kwargs) -> "SyntheticTeacher":
        rng = np.random.default_rng(seed)
        weights = rng.uniform(0.0, 1.0, size=vocab_size)
        return cls(weights, noise_seed=seed, **kwargs)

    def _jitter(self, query_id: str, doc_id: str, window_index: int) -> float:
        key = f"{self.noise_seed}|{query_id}|{doc_id}|{window_index}".encode("utf-8")
        digest = hashlib.blake2b(key, digest_size=8).digest()
        unit = int.from_bytes(digest, "big") / float(1 << 64)  # [0, 1)
        return (2.0 * unit - 1.0) * self.JITTER_MAGNITUDE

    def score_window(self, query: Query, doc: TokenizedDocument, window: PassageWindow) -> float:
        if self.delay_s:
            time.sleep(self.delay_s)
        real = window.real_tokens()
        if len(real) == 0:
            raise TeacherError(f"synthetic teacher: window {window.window_index} of {doc.doc_id} is all PAD")
        base = 0.0
        for token in query.tokens:
            tid = int(token)
            tf = int(np.count_nonzero(real == tid))
            if tf and tid < len(self.term_weights):
                base += self.term_weights[tid] * tf / len(real)
        return base + self._jitter(query.query_id, doc.doc_id, window.window_index)


class _PipeReader(threading.Thread):
    def __init__(self, stream):
        super().__init__(daemon=True)
        self.stream = stream
        self.lines: queue.Queue = queue.Queue()
        self.start()

    def run(self) -> None:
        for line in self.stream:
            self.lines.put(line)
        self.lines.put(None)

    def next_line(self, timeout: float) -> str:
        try:
            line = self.lines.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError("no response within timeout") from None
        if line is None:
            raise EOFError("scorer process closed its output")
        return line.rstrip("\n")


class ProcessTeacher(ExpensiveScorer):
    """Client for an external scorer speaking the line protocol.

    Requests on one connection are serialized; run one instance per worker
    for parallel scoring.
    """

    def __init__(self, command, timeout_s: float = 30.0, per_passage_cost_units: float = 40.0):
        super().__init__()
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = command
        self.timeout_s = timeout_s
        self.per_passage_cost_units = per_passage_cost_units
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise TeacherError(f"cannot start scorer process {command!r}: {exc}") from None
        self._reader = _PipeReader(self._proc.stdout)
        self._send(PROTOCOL_HELLO)
        reply = self._receive("handshake")
        if not reply.startswith("OK "):
            raise TeacherError(f"scorer handshake failed, got {reply!r}")
        self.name = reply[3:].strip() or "external"

    def _send(self, line: str) -> None:
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise TeacherError(f"scorer {self.name!r} pipe closed: {exc}") from None

    def _receive(self, context: str) -> str:
        try:
            return self._reader.next_line(self.timeout_s)
        except TimeoutError:
            raise TeacherError(f"scorer {self.name!r} timed out during {context}") from None
        except EOFError as exc:
            raise TeacherError(f"scorer {self.name!r} exited during {context}: {exc}") from None

    def score_window(self, query: Query, doc: TokenizedDocument, window: PassageWindow) -> float:
        request = "\t".join(
            [
                "S",
                query.query_id,
                doc.doc_id,
                str(window.window_index),
                " ".join(str(int(t)) for t in query.tokens),
                " ".join(str(int(t)) for t in window.tokens),
            ]
        )
        with self._lock:
            self._send(request)
            reply = self._receive(f"({query.query_id}, {doc.doc_id}, window {window.window_index})")
        try:
            return float(reply)
        except ValueError:
            raise TeacherError(f"scorer {self.name!r} returned non-numeric reply {reply!r}") from None

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        if proc.stdin:
            try:
                proc.stdin.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()


def precompute_teacher_table(
    scorer: ExpensiveScorer,
    queries: dict[str, Query],
    candidates: Sequence[CandidateList],
    corpus: Corpus,
    config: CascadeConfig,
) -> TeacherScoreTable:
    """Score every window of every candidate document.

    Iteration order follows the candidate lists, so repeated runs with the
    same scorer produce identical tables (and byte-identical files).
    """
    scores: dict[tuple[str, str], list[float]] = {}
    for candidate_list in candidates:
        qid = candidate_list.query_id
        if qid not in queries:
            raise KeyError(f"candidate list references unknown query {qid!r}")
        query = queries[qid]
        for doc_id in candidate_list.doc_ids:
            doc = corpus.get(doc_id)
            windows = segment(doc, config.w, config.o, config.max_doc_tokens)
            try:
                scored = score_passages(scorer, query, doc, windows)
            except TeacherError as exc:
                raise TeacherError(f"precompute failed for ({qid}, {doc_id}): {exc}") from None
            scores[(qid, doc_id)] = [value for _, value in scored]
    return TeacherScoreTable(scores)
