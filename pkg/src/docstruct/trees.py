"""Distributions over non-projective sentence trees.

Scores follow a single direction convention: ``f[i, j]`` scores the edge
parent ``i`` -> child ``j`` and ``r[i]`` scores sentence ``i`` as root. The
diagonal of ``f`` is never used.

Marginals come from the matrix-tree theorem on the root-adjusted Laplacian
(first row replaced by root weights). ``enumerate_marginals`` and
``best_tree_bruteforce`` are exhaustive oracles for small ``n``.
"""

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InferenceError, SingularMatrixError, ValidationError
from .linalg import logdet_and_inverse

MAX_ENUM_MARGINALS = 8
MAX_ENUM_DECODE = 7


@dataclass(frozen=True)
class EdgeScores:
    f: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        f = np.array(self.f, dtype=np.float64)
        r = np.array(self.r, dtype=np.float64).reshape(-1)
        if f.ndim != 2 or f.shape[0] != f.shape[1] or f.shape[0] < 1:
            raise ValidationError(f"edge scores must be a non-empty square matrix, got {f.shape}")
        if r.shape[0] != f.shape[0]:
            raise ValidationError(f"root scores have length {r.shape[0]}, expected {f.shape[0]}")
        off = ~np.eye(f.shape[0], dtype=bool)
        if not (np.all(np.isfinite(f[off])) and np.all(np.isfinite(r))):
            raise ValidationError("edge scores must be finite")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "r", r)

    @property
    def n(self):
        return self.f.shape[0]

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros((n, n)), np.zeros(n))

    def shifted(self, c):
        return EdgeScores(self.f + c, self.r + c)


@dataclass(frozen=True)
class TreeMarginals:
    a: np.ndarray
    a_root: np.ndarray
    logZ: float

    @property
    def n(self):
        return self.a_root.shape[0]


@dataclass(frozen=True)
class Arborescence:
    """Rooted spanning tree; ``parent[root]`` is None."""

    root: int
    parent: tuple

    def __post_init__(self):
        parent = tuple(None if p is None else int(p) for p in self.parent)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "root", int(self.root))
        self.validate()

    @property
    def n(self):
        return len(self.parent)

    def validate(self):
        n = self.n
        if n < 1 or not 0 <= self.root < n:
            raise ValidationError(f"root {self.root} out of range for {n} nodes")
        roots = [j for j, p in enumerate(self.parent) if p is None]
        if roots != [self.root]:
            raise ValidationError(f"expected exactly one root at {self.root}, found {roots}")
        for j, p in enumerate(self.parent):
            if p is not None and not (0 <= p < n and p != j):
                raise ValidationError(f"node {j} has invalid parent {p}")
        for j in range(n):
            seen = 0
            k = j
            while self.parent[k] is not None:
                k = self.parent[k]
                seen += 1
                if seen > n:
                    raise ValidationError(f"parent links from node {j} contain a cycle")

    @classmethod
    def from_parents(cls, parent):
        """Build from a sequence where the root's entry is None or -1."""
        parent = [None if p is None or p < 0 else p for p in parent]
        roots = [j for j, p in enumerate(parent) if p is None]
        if len(roots) != 1:
            raise ValidationError(f"expected exactly one root, found {len(roots)}")
        return cls(roots[0], tuple(parent))

    def edges(self):
        return [(p, j) for j, p in enumerate(self.parent) if p is not None]

    def children(self):
        out = [[] for _ in range(self.n)]
        for p, j in self.edges():
            out[p].append(j)
        return out

    def depths(self):
        """Node depth counted in nodes: the root has depth 1."""
        depth = [0] * self.n
        stack = [(self.root, 1)]
        kids = self.children()
        while stack:
            node, d = stack.pop()
            depth[node] = d
            stack.extend((c, d + 1) for c in kids[node])
        return depth

    def tie_key(self):
        return tuple(-1 if p is None else p for p in self.parent)


def tree_score(scores, tree):
    """Total score ``r[root] + sum f[parent, child]``, summed in child order."""
    total = scores.r[tree.root]
    for j, p in enumerate(tree.parent):
        if p is not None:
            total = total + scores.f[p, j]
    return float(total)


# -- matrix-tree inference ---------------------------------------------------

def _stabilized_weights(scores, per_column=False):
    """Exponentiated weights after subtracting a shift.

    The shift is either one global maximum or, with ``per_column``, the max
    over each child's incoming edge and root scores. Scaling column j of the
    Laplacian by exp(-shift_j) scales the determinant by the same factor and
    leaves the marginals unchanged, so ``log Z = log det + sum(shift)``.
    """
    n = scores.n
    off = ~np.eye(n, dtype=bool)
    f = np.where(off, scores.f, -np.inf)
    if per_column:
        shift = np.maximum(f.max(axis=0), scores.r)
    else:
        shift = np.full(n, max(scores.r.max(), f.max()))
    A = np.exp(f - shift[None, :])
    rho = np.exp(scores.r - shift)
    return A, rho, shift


def _laplacian_from_weights(A, rho):
    L = -A.copy()
    np.fill_diagonal(L, A.sum(axis=0))
    L[0] = rho
    return L


def build_laplacian(scores):
    """Return the root-adjusted Laplacian and the shift used to build it.

    ``log Z = log det(L) + n * shift``.
    """
    A, rho, shift = _stabilized_weights(scores)
    return _laplacian_from_weights(A, rho), float(shift[0])


@dataclass(frozen=True)
class _Forward:
    A: np.ndarray
    rho: np.ndarray
    shift: np.ndarray
    inv: np.ndarray
    marginals: TreeMarginals


def _forward(scores):
    A, rho, shift = _stabilized_weights(scores, per_column=True)
    L = _laplacian_from_weights(A, rho)
    try:
        sign, logdet, inv = logdet_and_inverse(L)
    except SingularMatrixError as exc:
        raise InferenceError(
            f"root-adjusted Laplacian is singular for n={scores.n} "
            f"(smallest pivot {exc.pivot:.3e}); scores likely too extreme after shifting"
        ) from exc
    if sign <= 0:
        raise InferenceError(f"Laplacian determinant has sign {sign}; expected positive")
    n = scores.n
    not_first = np.ones(n)
    not_first[0] = 0.0
    # a_ij = A_ij * ([j != 0] inv_jj - [i != 0] inv_ji)
    a = A * (not_first[None, :] * np.diag(inv)[None, :] - not_first[:, None] * inv.T)
    a_root = rho * inv[:, 0]
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(a_root))):
        raise InferenceError("non-finite marginals; Laplacian is ill-conditioned")
    m = TreeMarginals(a, a_root, float(logdet + shift.sum()))
    return _Forward(A, rho, shift, inv, m)


def marginals(scores):
    return _forward(scores).marginals


def grad_scores(scores, grad_a=None, grad_root=None, grad_logZ=0.0):
    """Backpropagate a loss gradient on (a, a_root, logZ) to (f, r).

    Any upstream part may be omitted (treated as zero). Returns
    ``(grad_f, grad_r)``; ``grad_f`` has a zero diagonal.
    """
    fw = _forward(scores)
    n = scores.n
    A, rho, B = fw.A, fw.rho, fw.inv
    Ga = np.zeros((n, n)) if grad_a is None else np.asarray(grad_a, dtype=np.float64)
    Gr = np.zeros(n) if grad_root is None else np.asarray(grad_root, dtype=np.float64)
    if Ga.shape != (n, n) or Gr.shape != (n,):
        raise ValidationError("upstream gradient shapes do not match the scores")
    not_first = np.ones(n)
    not_first[0] = 0.0

    dA = Ga * (not_first[None, :] * np.diag(B)[None, :] - not_first[:, None] * B.T)
    GA = Ga * A
    GB = np.diag(not_first * GA.sum(axis=0)) - (GA * not_first[:, None]).T
    drho = Gr * B[:, 0]
    GB[:, 0] += Gr * rho

    GL = grad_logZ * B.T - B.T @ GB @ B.T
    drho += GL[0]
    # rows 1.. hold -A off the diagonal; the diagonal (j >= 1) holds column sums of A
    diag_term = np.diag(GL) * not_first
    dA += diag_term[None, :] - not_first[:, None] * GL
    np.fill_diagonal(dA, 0.0)
    return dA * A, drho * rho


# -- exhaustive oracles --------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _all_trees(n):
    """Every arborescence on n nodes as (roots, parents) arrays; root parent = -1."""
    roots, parents = [], []
    for root in range(n):
        others = [j for j in range(n) if j != root]
        choices = [[i for i in range(n) if i != j] for j in others]
        if not others:
            cand = np.zeros((1, 0), dtype=np.int64)
        else:
            cand = np.array(list(itertools.product(*choices)), dtype=np.int64)
        par = np.full((cand.shape[0], n), -1, dtype=np.int64)
        par[:, others] = cand
        # acyclic iff following parents n times always lands on the root
        walk = par.copy()
        node = np.tile(np.arange(n), (par.shape[0], 1))
        for _ in range(n):
            step = np.take_along_axis(walk, np.maximum(node, 0), axis=1)
            node = np.where(node < 0, node, step)
        ok = np.all(node < 0, axis=1)
        parents.append(par[ok])
        roots.append(np.full(int(ok.sum()), root, dtype=np.int64))
    return np.concatenate(roots), np.concatenate(parents)


def _tree_totals(scores, roots, parents):
    n = scores.n
    total = scores.r[roots].copy()
    for j in range(n):
        p = parents[:, j]
        total = total + np.where(p < 0, 0.0, scores.f[np.maximum(p, 0), j])
    return total


def count_trees(n):
    return len(_all_trees(n)[0])


def enumerate_marginals(scores):
    n = scores.n
    if n > MAX_ENUM_MARGINALS:
        raise ValidationError(f"enumeration limited to n <= {MAX_ENUM_MARGINALS}, got {n}")
    roots, parents = _all_trees(n)
    total = _tree_totals(scores, roots, parents)
    top = total.max()
    w = np.exp(total - top)
    Z = w.sum()
    prob = w / Z
    a = np.zeros((n, n))
    for j in range(n):
        p = parents[:, j]
        np.add.at(a[:, j], p[p >= 0], prob[p >= 0])
    a_root = np.bincount(roots, weights=prob, minlength=n)
    return TreeMarginals(a, a_root, float(np.log(Z) + top))


def best_tree_bruteforce(scores):
    """Exact argmax tree; ties go to the lexicographically smallest parent
    vector with the root written as -1 (lower parents first, then lower root)."""
    n = scores.n
    if n > MAX_ENUM_DECODE:
        raise ValidationError(f"brute-force decoding limited to n <= {MAX_ENUM_DECODE}, got {n}")
    roots, parents = _all_trees(n)
    total = _tree_totals(scores, roots, parents)
    best = np.flatnonzero(total == total.max())
    keys = [tuple(parents[k]) for k in best]
    k = best[min(range(len(best)), key=keys.__getitem__)]
    return Arborescence.from_parents(parents[k].tolist())


# -- Chu-Liu-Edmonds -----------------------------------------------------------

def _find_cycle(parent):
    n = len(parent)
    color = [0] * n
    for start in range(n):
        path = []
        v = start
        while v >= 0 and color[v] == 0:
            color[v] = 1
            path.append(v)
            v = parent[v]
        if v >= 0 and color[v] == 1:
            return path[path.index(v):]
        for u in path:
            color[u] = 2
    return None


def _max_arborescence(W, root):
    """Maximum arborescence rooted at ``root`` of a dense weight matrix.

    ``W[i, j]`` is the weight of i -> j; -inf marks a missing edge. Returns a
    parent list with -1 at the root.
    """
    n = W.shape[0]
    parent = [-1] * n
    for j in range(n):
        if j != root:
            parent[j] = int(np.argmax(W[:, j]))
    cycle = _find_cycle(parent)
    if cycle is None:
        return parent

    in_cycle = np.zeros(n, dtype=bool)
    in_cycle[cycle] = True
    outside = [v for v in range(n) if not in_cycle[v]]
    m = len(outside) + 1
    c = m - 1
    index = {v: k for k, v in enumerate(outside)}
    cyc = np.array(cycle)
    cyc_parent_w = np.array([W[parent[v], v] for v in cycle])

    W2 = np.full((m, m), -np.inf)
    enter = {}
    leave = {}
    for u in outside:
        for v in outside:
            if u != v:
                W2[index[u], index[v]] = W[u, v]
        gains = W[u, cyc] - cyc_parent_w
        k = int(np.argmax(gains))
        W2[index[u], c] = gains[k]
        enter[u] = int(cyc[k])
        k = int(np.argmax(W[cyc, u]))
        W2[c, index[u]] = W[cyc[k], u]
        leave[u] = int(cyc[k])

    sub = _max_arborescence(W2, index[root])
    result = parent[:]
    for v in outside:
        p = sub[index[v]]
        if p == c:
            result[v] = leave[v]
        elif p >= 0:
            result[v] = outside[p]
    entering_from = outside[sub[c]]
    result[enter[entering_from]] = entering_from
    return result


def cle_decode(scores):
    """Maximum-score single-root arborescence.

    Each candidate root is solved separately with Chu-Liu-Edmonds; the root
    with the highest total wins, ties going to the lower index.
    """
    n = scores.n
    if n == 1:
        return Arborescence(0, (None,))
    best, best_total = None, -np.inf
    for root in range(n):
        W = scores.f.copy()
        np.fill_diagonal(W, -np.inf)
        W[:, root] = -np.inf
        tree = Arborescence.from_parents(_max_arborescence(W, root))
        total = tree_score(scores, tree)
        if total > best_total:
            best, best_total = tree, total
    return best
