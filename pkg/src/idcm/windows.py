"""Fixed-size, partially overlapping, symmetrically padded passage windows.

A document of L tokens (after truncation to `max_doc_tokens`) is split
into ceil(L/w) windows of exactly w + 2o tokens each.  Window i covers
document positions [i*w - o, (i+1)*w + o - 1]; positions outside the
document are PAD.  The w-token cores tile the document, so concatenating
them reconstructs it exactly and no all-PAD window can occur.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from idcm.config import ConfigError
from idcm.corpus import PAD_ID, TokenizedDocument


@dataclass
class PassageWindow:
    """One window of a document; `start` is the document position of tokens[0]."""

    doc_id: str
    window_index: int
    start: int
    tokens: np.ndarray  # length exactly w + 2o
    pad_mask: np.ndarray  # bool, True = real token

    @property
    def first_real_pos(self) -> int:
        return self.start + int(np.argmax(self.pad_mask))

    @property
    def last_real_pos(self) -> int:
        return self.start + len(self.pad_mask) - 1 - int(np.argmax(self.pad_mask[::-1]))

    def real_tokens(self) -> np.ndarray:
        return self.tokens[self.pad_mask]


def window_count(doc_length: int, w: int, max_doc_tokens: int) -> int:
    effective = min(doc_length, max_doc_tokens)
    return -(-effective // w)


def segment(
    doc: TokenizedDocument, w: int, o: int, max_doc_tokens: int
) -> list[PassageWindow]:
    """Split `doc` into ceil(L/w) windows of w + 2o tokens.

    The document is truncated to `max_doc_tokens` before windowing, so the
    window count is bounded by ceil(max_doc_tokens / w) regardless of the
    raw document length.
    """
    if not 0 <= o < w:
        raise ConfigError(f"window overlap must satisfy 0 <= o < w, got o={o}, w={w}")
    if max_doc_tokens < w:
        raise ConfigError(f"max_doc_tokens must be >= w, got {max_doc_tokens} < {w}")
    tokens = np.asarray(doc.tokens, dtype=np.int64)[:max_doc_tokens]
    length = len(tokens)
    if length == 0:
        raise ValueError(f"document {doc.doc_id!r} has no tokens; rejected at ingestion")

    n = window_count(length, w, max_doc_tokens)
    tail_pad = n * w - length + o
    padded = np.concatenate(
        [
            np.full(o, PAD_ID, dtype=np.int64),
            tokens,
            np.full(tail_pad, PAD_ID, dtype=np.int64),
        ]
    )
    mask = np.zeros(len(padded), dtype=bool)
    mask[o : o + length] = True

    width = w + 2 * o
    windows = []
    for i in range(n):
        lo = i * w
        windows.append(
            PassageWindow(
                doc_id=doc.doc_id,
                window_index=i,
                start=lo - o,
                tokens=padded[lo : lo + width],
                pad_mask=mask[lo : lo + width],
            )
        )
    return windows
