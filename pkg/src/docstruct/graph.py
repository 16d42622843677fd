"""Explicit sentence graphs from coreference clusters and named entities.

Two sentences are linked with weight equal to the number of distinct
clusters (or case-folded entity strings) they share. ``normalize_adjacency``
turns counts into a row-stochastic matrix with additive smoothing; the
denominator runs over the other sentences only and smooths every term, so
a sentence with no links gets a uniform row.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DEFAULT_EPSILON = 5e-4


@dataclass(frozen=True)
class SentenceGraph:
    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise ValidationError(f"sentence graph counts must be square, got {c.shape}")
        if np.any(c < 0) or np.any(np.diag(c) != 0) or np.any(c != c.T):
            raise ValidationError("sentence graph counts must be symmetric, non-negative, zero-diagonal")
        object.__setattr__(self, "counts", c)

    @property
    def n(self):
        return self.counts.shape[0]

    def edges(self):
        i, j = np.nonzero(np.triu(self.counts, 1))
        return {(int(a), int(b)) for a, b in zip(i, j)}


def _counts_from_groups(n, groups):
    counts = np.zeros((n, n), dtype=np.int64)
    for sents in groups:
        idx = sorted(sents)
        for a in idx:
            for b in idx:
                if a != b:
                    counts[a, b] += 1
    return SentenceGraph(counts)


def build_coref_counts(doc):
    return _counts_from_groups(doc.n_sentences, doc.mention_sentences())


def build_ner_counts(doc):
    by_text = {}
    for ent in doc.entities:
        by_text.setdefault(ent.text.casefold(), set()).add(ent.sent)
    return _counts_from_groups(doc.n_sentences, [by_text[k] for k in sorted(by_text)])


def merge_counts(g1, g2):
    if g1.n != g2.n:
        raise ValidationError(f"cannot merge graphs over {g1.n} and {g2.n} sentences")
    return SentenceGraph(g1.counts + g2.counts)


@dataclass(frozen=True)
class AdjacencyK:
    k: np.ndarray
    epsilon: float

    @property
    def n(self):
        return self.k.shape[0]


def normalize_adjacency(graph, epsilon=DEFAULT_EPSILON):
    n = graph.n
    if n < 2:
        raise ValidationError("adjacency normalization needs at least 2 sentences")
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    smoothed = graph.counts.astype(np.float64) + epsilon
    np.fill_diagonal(smoothed, 0.0)
    return AdjacencyK(smoothed / smoothed.sum(axis=1, keepdims=True), float(epsilon))


@dataclass(frozen=True)
class EdgeOverlap:
    precision: float
    recall: float
    n_tree_edges: int
    n_graph_edges: int
    n_shared: int
    precision_defined: bool
    recall_defined: bool


def edge_precision_recall(tree, graph):
    """Undirected edge overlap between a tree and a graph.

    Precision is over tree edges, recall over graph edges (count > 0). An
    empty side yields 0 with the matching ``*_defined`` flag cleared.
    """
    if tree.n != graph.n:
        raise ValidationError(f"tree has {tree.n} nodes, graph has {graph.n}")
    tree_edges = {(min(p, c), max(p, c)) for p, c in tree.edges()}
    graph_edges = graph.edges()
    shared = len(tree_edges & graph_edges)
    p_def = bool(tree_edges)
    r_def = bool(graph_edges)
    return EdgeOverlap(
        precision=shared / len(tree_edges) if p_def else 0.0,
        recall=shared / len(graph_edges) if r_def else 0.0,
        n_tree_edges=len(tree_edges),
        n_graph_edges=len(graph_edges),
        n_shared=shared,
        precision_defined=p_def,
        recall_defined=r_def,
    )
