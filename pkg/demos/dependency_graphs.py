"""
From dependency parses to graph convolutions
============================================

Each microblog arrives pre-parsed: tokens, sentence spans, and for every
token the 1-based position of its syntactic head (0 marks the root).
This demo builds the adjacency matrix for a two-sentence record, shows
the symmetric degree normalization, and contrasts it with the all-ones
ablation that discards the parse.
"""

import numpy as np

from syngcn.corpus import Record, build_graph

np.set_printoptions(precision=3, suppress=True)

# "The weather is great!  My mood soars."  (stand-in tokens)
# Heads are 1-based positions within each sentence, 0 for the root.
record = Record(
    tokens=("weather", "great", "!", "mood", "soars", "."),
    sent_bounds=((0, 3), (3, 6)),
    heads=(2, 0, 2, 2, 0, 2),  # weather -> great (root), mood -> soars (root)
    label=0,
)

g = build_graph(record, max_len=8)
n = len(record)

# Adjacency: self-loops on the diagonal, one symmetric pair per head arc,
# and nothing across the sentence boundary or in the padding rows.
print("adjacency (first", n, "rows of the padded matrix):")
print(g.adjacency[:n, :n])
print("padding rows are all zero:", not g.adjacency[n:].any())

# Degrees differ, so normalization rescales each edge by both endpoints:
# entry (i, j) becomes 1 / sqrt(deg_i * deg_j).
deg = g.adjacency.sum(axis=1)[:n]
print("degrees:", deg)
print("normalized block:")
print(g.real_block())
expected = 1.0 / np.sqrt(deg[0] * deg[1])
print("entry (0, 1) equals 1/sqrt(deg0*deg1):", g.real_block()[0, 1], "==", expected)

# The ablation wires every real token to every other, parse and sentence
# boundaries included.  After normalization each row is uniform: the
# convolution then averages all tokens, erasing who modifies whom.
flat = build_graph(record, mode="all_ones", max_len=8)
print("\nall-ones normalized block (every row uniform):")
print(flat.real_block())
