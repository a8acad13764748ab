"""Synthetic corpora for tests and demos.

The real task needs segmented, dependency-parsed microblogs, which are
not shippable; these generators produce small corpora with the same
record shape and with controllable difficulty.

``root_label_corpus`` is built so the label is carried by the parse
tree and nothing else: every record has a twin with the *same* token
sequence but the dependency tree re-rooted on the other candidate word.
A model ignoring the tree cannot beat chance on a twin pair, so
syntax-aware adjacency separates measurably from the all-ones ablation.
"""

from __future__ import annotations

import numpy as np

from .corpus import Record


def _star_record(tokens: list[str], root_pos: int, label: int) -> Record:
    heads = [root_pos + 1] * len(tokens)
    heads[root_pos] = 0
    return Record(tuple(tokens), ((0, len(tokens)),), tuple(heads), label)


def class_word_corpus(
    n_records: int,
    classes: int = 7,
    n_fillers: int = 8,
    rng: np.random.Generator | None = None,
) -> list[Record]:
    """Records whose root word alone determines the label.

    Each record is one class word (the root) plus a few shared filler
    words attached to it, in shuffled order.  Easy to overfit.
    """
    rng = rng or np.random.default_rng(0)
    fillers = [f"filler{i}" for i in range(n_fillers)]
    records = []
    for i in range(n_records):
        label = i % classes
        extra = rng.choice(fillers, size=rng.integers(2, 5), replace=False).tolist()
        tokens = [f"classword{label}"] + extra
        order = rng.permutation(len(tokens))
        tokens = [tokens[j] for j in order]
        root_pos = int(np.argwhere(order == 0)[0][0])
        records.append(_star_record(tokens, root_pos, label))
    return records


def root_label_corpus(
    n_pairs: int,
    classes: int = 7,
    n_fillers: int = 8,
    rng: np.random.Generator | None = None,
) -> list[Record]:
    """Twin records: identical token sequences, labels decided by the root.

    Each pair holds two class words; the first twin's tree is rooted on
    one, the second twin's on the other, with all remaining tokens
    attached to the root.  Returns 2 * n_pairs records.
    """
    rng = rng or np.random.default_rng(0)
    fillers = [f"filler{i}" for i in range(n_fillers)]
    records = []
    for _ in range(n_pairs):
        a, b = rng.choice(classes, size=2, replace=False)
        extra = rng.choice(fillers, size=rng.integers(1, 4), replace=False).tolist()
        tokens = [f"classword{a}", f"classword{b}"] + extra
        order = rng.permutation(len(tokens))
        tokens = [tokens[j] for j in order]
        pos_a = int(np.argwhere(order == 0)[0][0])
        pos_b = int(np.argwhere(order == 1)[0][0])
        records.append(_star_record(tokens, pos_a, int(a)))
        records.append(_star_record(tokens, pos_b, int(b)))
    return records


def split_records(records: list[Record], dev_fraction: float, rng: np.random.Generator):
    """Shuffled train/dev split."""
    order = rng.permutation(len(records))
    n_dev = max(1, int(len(records) * dev_fraction))
    dev_idx = set(order[:n_dev].tolist())
    train = [records[i] for i in range(len(records)) if i not in dev_idx]
    dev = [records[i] for i in sorted(dev_idx)]
    return train, dev
