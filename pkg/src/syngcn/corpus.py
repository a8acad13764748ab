"""Microblog records, corpus files, vocabularies, and dependency graphs.

A corpus file is UTF-8 JSON lines, one record per line:

    {"tokens": ["w1", ...], "sent_bounds": [[0, 3], [3, 7]],
     "heads": [2, 0, 2, ...], "label": 0}

``tokens``       flat word list for the whole microblog.
``sent_bounds``  [start, stop) spans partitioning the tokens into
                 sentences (may be omitted for single-sentence records).
``heads``        one entry per token: the 1-based position of its head
                 *within its own sentence*, or 0 for the sentence root.
``label``        emotion class id or name (see EMOTION_NAMES); optional
                 under the "eval" schema.

Records longer than ``max_len`` tokens are truncated (counted in the
load report); a head pointing past the cut becomes a root.

The dependency graph of a record is a symmetric 0/1 adjacency over its
tokens: one self-loop per real token plus both directions of every
head arc, assembled block-diagonally per sentence so no edge crosses a
sentence boundary.  Its symmetric normalization divides each entry by
the square roots of both endpoint degrees; all-zero rows (padding) stay
zero.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

MAX_TOKENS = 140

EMOTION_NAMES = ("happiness", "sadness", "like", "anger", "disgust", "fear", "surprise")
# Binary polarity mode: happiness/like are positive, surprise is dropped.
POLARITY_NAMES = ("negative", "positive")
POSITIVE_EMOTIONS = frozenset({"happiness", "like"})


class CorpusError(ValueError):
    """Malformed corpus file or record."""


def label_names(classes: int) -> tuple[str, ...]:
    if classes == len(EMOTION_NAMES):
        return EMOTION_NAMES
    if classes == len(POLARITY_NAMES):
        return POLARITY_NAMES
    return tuple(f"class_{i}" for i in range(classes))


@dataclass(frozen=True)
class Record:
    """One microblog: tokens, per-sentence head arcs, and a label."""

    tokens: tuple[str, ...]
    sent_bounds: tuple[tuple[int, int], ...]
    heads: tuple[int, ...]
    label: int | None

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self, classes: int | None = None, where: str = "record") -> None:
        n = len(self.tokens)
        if n < 1:
            raise CorpusError(f"{where}: empty token list")
        if len(self.heads) != n:
            raise CorpusError(f"{where}: {len(self.heads)} heads for {n} tokens")
        pos = 0
        for start, stop in self.sent_bounds:
            if start != pos or stop <= start:
                raise CorpusError(f"{where}: sentence spans must be contiguous and non-empty")
            pos = stop
        if pos != n:
            raise CorpusError(f"{where}: sentence spans cover {pos} of {n} tokens")
        for start, stop in self.sent_bounds:
            for t in range(start, stop):
                if not 0 <= self.heads[t] <= stop - start:
                    raise CorpusError(
                        f"{where}: head {self.heads[t]} of token {t} outside its "
                        f"{stop - start}-token sentence"
                    )
        if classes is not None and self.label is not None and not 0 <= self.label < classes:
            raise CorpusError(f"{where}: label {self.label} not in [0, {classes})")


@dataclass
class LoadReport:
    """Bookkeeping from one load_corpus call."""

    path: str
    records: int = 0
    truncated: int = 0


def _parse_label(value, line_no: int) -> int:
    if isinstance(value, bool):
        raise CorpusError(f"line {line_no}: label must be an integer or name")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        for names in (EMOTION_NAMES, POLARITY_NAMES):
            if value in names:
                return names.index(value)
        raise CorpusError(f"line {line_no}: unknown label name {value!r}")
    raise CorpusError(f"line {line_no}: label must be an integer or name")


def _truncate(tokens, sent_bounds, heads, max_len):
    tokens = tokens[:max_len]
    bounds = []
    for start, stop in sent_bounds:
        if start >= max_len:
            break
        bounds.append((start, min(stop, max_len)))
    heads = list(heads[:max_len])
    for start, stop in bounds:
        for t in range(start, stop):
            if heads[t] > stop - start:
                heads[t] = 0  # head fell past the cut; promote to root
    return tokens, bounds, heads


def load_corpus(
    path,
    schema: str = "train",
    classes: int = len(EMOTION_NAMES),
    max_len: int = MAX_TOKENS,
) -> tuple[list[Record], LoadReport]:
    """Read and validate a JSON-lines corpus file.

    ``schema`` is "train" (label required) or "eval" (label optional,
    e.g. for prediction inputs).  Returns the records in file order plus
    a LoadReport counting truncations.
    """
    if schema not in ("train", "eval"):
        raise ValueError(f"unknown schema {schema!r}")
    report = LoadReport(path=str(path))
    records: list[Record] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(raw, dict) or "tokens" not in raw or "heads" not in raw:
                raise CorpusError(f"{path}: line {line_no}: record needs tokens and heads fields")
            tokens = [str(t) for t in raw["tokens"]]
            heads = [int(h) for h in raw["heads"]]
            bounds = [tuple(int(v) for v in span) for span in raw.get("sent_bounds", [])]
            if not bounds:
                bounds = [(0, len(tokens))]
            if "label" in raw and raw["label"] is not None:
                label = _parse_label(raw["label"], line_no)
            elif schema == "train":
                raise CorpusError(f"{path}: line {line_no}: label required under train schema")
            else:
                label = None
            if len(tokens) > max_len:
                tokens, bounds, heads = _truncate(tokens, bounds, heads, max_len)
                report.truncated += 1
            record = Record(tuple(tokens), tuple(bounds), tuple(heads), label)
            record.validate(classes=classes, where=f"{path}: line {line_no}")
            records.append(record)
    report.records = len(records)
    return records, report


def save_corpus(records, path) -> None:
    """Inverse of load_corpus (used by fixtures and the demo scripts)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            row = {
                "tokens": list(rec.tokens),
                "sent_bounds": [list(span) for span in rec.sent_bounds],
                "heads": list(rec.heads),
            }
            if rec.label is not None:
                row["label"] = rec.label
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def binarize_records(records) -> list[Record]:
    """Map 7-class records to polarity labels, dropping 'surprise'."""
    out = []
    for rec in records:
        if rec.label is None or EMOTION_NAMES[rec.label] == "surprise":
            continue
        positive = EMOTION_NAMES[rec.label] in POSITIVE_EMOTIONS
        out.append(Record(rec.tokens, rec.sent_bounds, rec.heads, int(positive)))
    return out


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocabulary:
    """Word-to-id map with reserved padding and unknown ids."""

    word_to_id: dict[str, int] = field(default_factory=dict)

    PAD = 0
    UNK = 1

    def __len__(self) -> int:
        return len(self.word_to_id) + 2

    def lookup(self, word: str) -> int:
        return self.word_to_id.get(word, self.UNK)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.lookup(t) for t in tokens], dtype=np.intp)

    @property
    def words(self) -> list[str]:
        """Vocabulary words in id order (excluding pad/unk)."""
        return sorted(self.word_to_id, key=self.word_to_id.get)

    @classmethod
    def from_words(cls, words) -> Vocabulary:
        return cls({w: i + 2 for i, w in enumerate(words)})


def build_vocab(records, min_count: int = 1) -> Vocabulary:
    """Vocabulary of words with frequency >= min_count.

    Ids are assigned by descending frequency (ties alphabetical), so two
    builds over the same corpus are identical.
    """
    if not records:
        raise CorpusError("build_vocab needs a non-empty corpus")
    counts = Counter(t for rec in records for t in rec.tokens)
    kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    return Vocabulary.from_words(kept)


# ---------------------------------------------------------------------------
# dependency-graph matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphMatrices:
    """Padded adjacency and its symmetric normalization for one record.

    ``adjacency`` is max_len x max_len with entries in {0, 1}: self-loops
    on real tokens plus symmetric head arcs, zero in padding and across
    sentence boundaries.  ``normalized`` rescales each entry by the
    inverse square roots of both endpoint degrees (zero-degree rows stay
    all-zero).
    """

    n: int
    adjacency: np.ndarray
    normalized: np.ndarray

    def real_block(self) -> np.ndarray:
        """The n x n normalized block covering real tokens."""
        return self.normalized[: self.n, : self.n]


def build_graph(record: Record, mode: str = "syntax", max_len: int = MAX_TOKENS) -> GraphMatrices:
    """Adjacency matrices for one validated record.

    "syntax" wires the dependency arcs (plus self-loops, both
    directions); "all_ones" is the no-syntax ablation where every real
    token links to every other.
    """
    if mode not in ("syntax", "all_ones"):
        raise ValueError(f"unknown adjacency mode {mode!r}")
    n = len(record)
    if n > max_len:
        raise CorpusError(f"record with {n} tokens exceeds max_len {max_len}")
    a = np.zeros((max_len, max_len), dtype=np.float64)
    if mode == "all_ones":
        a[:n, :n] = 1.0
    else:
        for i in range(n):
            a[i, i] = 1.0
        for start, stop in record.sent_bounds:
            for t in range(start, stop):
                h = record.heads[t]
                if h != 0:
                    g = start + h - 1
                    a[t, g] = 1.0
                    a[g, t] = 1.0
    degrees = a.sum(axis=1)
    inv_sqrt = np.zeros_like(degrees)
    nonzero = degrees > 0
    inv_sqrt[nonzero] = 1.0 / np.sqrt(degrees[nonzero])
    normalized = a * inv_sqrt[:, None] * inv_sqrt[None, :]
    a.setflags(write=False)
    normalized.setflags(write=False)
    return GraphMatrices(n=n, adjacency=a, normalized=normalized)
