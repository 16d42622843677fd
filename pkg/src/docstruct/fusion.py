"""Structure-aware sentence and token representations.

Latent side: each sentence mixes its semantic vector with a parent context
(weighted by edge and root marginals) and a child context, then passes the
concatenation through ``tanh(Wr [g, p, c])``. Explicit side: a one-hop
propagation over the normalized coreference adjacency ``K``.

The child context defaults to ``sum_j a_ij g_j``. ``child_mode="literal"``
instead gives ``(sum_j a_ij) g_i``, i.e. the sentence's own vector scaled by
its expected number of children.
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import ValidationError
from .scorer import glorot_uniform

CHILD_MODES = ("children", "literal")


@dataclass(frozen=True)
class FusionParams:
    Wr: np.ndarray
    g_root: np.ndarray
    Fu: np.ndarray
    Fe: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            arr = np.array(getattr(self, f.name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{f.name} has non-finite entries")
            object.__setattr__(self, f.name, arr)
        d_sem = self.g_root.shape[0] if self.g_root.ndim == 1 else -1
        if d_sem < 1 or self.Wr.shape != (d_sem, 3 * d_sem):
            raise ValidationError("Wr must be d_sem x 3*d_sem with g_root of length d_sem")
        if self.Fu.ndim != 2 or self.Fe.ndim != 2 or self.Fe.shape[1] != self.Fu.shape[0]:
            raise ValidationError(f"Fe {self.Fe.shape} does not compose with Fu {self.Fu.shape}")

    @property
    def d_sem(self):
        return self.g_root.shape[0]

    @property
    def d_h(self):
        return self.Fu.shape[1]

    @classmethod
    def init(cls, d_sem, d_h, d_u, d_e, seed=0):
        rng = np.random.default_rng(seed)
        return cls(
            Wr=glorot_uniform(rng, (d_sem, 3 * d_sem)),
            g_root=rng.uniform(-1.0, 1.0, size=d_sem),
            Fu=glorot_uniform(rng, (d_u, d_h)),
            Fe=glorot_uniform(rng, (d_e, d_u)),
        )

    def named(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def pool_sentences(token_vecs):
    """Coordinate-wise max over the tokens of each sentence."""
    out = []
    for i, toks in enumerate(token_vecs):
        toks = np.atleast_2d(np.asarray(toks, dtype=np.float64))
        if toks.size == 0:
            raise ValidationError(f"sentence {i} has no tokens")
        out.append(toks.max(axis=0))
    if not out:
        raise ValidationError("no sentences to pool")
    return np.vstack(out)


@dataclass(frozen=True)
class LatentOutput:
    l: np.ndarray
    p: np.ndarray
    c: np.ndarray


def latent_fuse(g, marginals, params, child_mode="children"):
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    a, a_root = marginals.a, marginals.a_root
    if g.shape[0] != a_root.shape[0]:
        raise ValidationError(f"{g.shape[0]} semantic vectors for {a_root.shape[0]} marginal rows")
    if g.shape[1] != params.d_sem:
        raise ValidationError(f"semantic width {g.shape[1]} != {params.d_sem}")
    p = a.T @ g + np.outer(a_root, params.g_root)
    c = _child_context(a, g, child_mode)
    l = np.tanh(np.hstack([g, p, c]) @ params.Wr.T)
    return LatentOutput(l, p, c)


def _child_context(a, g, child_mode):
    if child_mode == "children":
        return a @ g
    if child_mode == "literal":
        return a.sum(axis=1)[:, None] * g
    raise ValidationError(f"unknown child_mode {child_mode!r}; expected one of {CHILD_MODES}")


@dataclass(frozen=True)
class ExplicitOutput:
    e: np.ndarray
    u: np.ndarray
    t: np.ndarray


def explicit_fuse(h, K, params):
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    K = np.asarray(K, dtype=np.float64)
    n = h.shape[0]
    if K.shape != (n, n):
        raise ValidationError(f"adjacency has shape {K.shape}, expected {(n, n)}")
    if not np.all(np.isfinite(K)):
        raise ValidationError("adjacency has non-finite entries")
    if h.shape[1] != params.d_h:
        raise ValidationError(f"sentence width {h.shape[1]} != {params.d_h}")
    u = np.tanh(h @ params.Fu.T)
    t = K @ u
    e = np.tanh(t @ params.Fe.T)
    return ExplicitOutput(e, u, t)


@dataclass(frozen=True)
class FusedReps:
    l: np.ndarray
    e: np.ndarray
    h_sent: np.ndarray
    h_tok: np.ndarray
    sentence_ids: np.ndarray


def combine_and_augment(l, e, token_vecs, sentence_ids):
    """Concatenate ``[l; e]`` per sentence and append it to each token vector."""
    l = np.atleast_2d(np.asarray(l, dtype=np.float64))
    e = np.atleast_2d(np.asarray(e, dtype=np.float64))
    if l.shape[0] != e.shape[0]:
        raise ValidationError(f"{l.shape[0]} latent vs {e.shape[0]} explicit sentence vectors")
    h_sent = np.hstack([l, e])
    ids = np.asarray(sentence_ids, dtype=np.int64).reshape(-1)
    toks = np.asarray(token_vecs, dtype=np.float64).reshape(len(ids), -1)
    bad = (ids < 0) | (ids >= h_sent.shape[0])
    if np.any(bad):
        raise ValidationError(f"token sentence index {int(ids[bad][0])} out of range for {h_sent.shape[0]} sentences")
    return FusedReps(l, e, h_sent, np.hstack([toks, h_sent[ids]]), ids)


@dataclass(frozen=True)
class FusionGrads:
    g: np.ndarray
    h: np.ndarray
    a: np.ndarray
    a_root: np.ndarray
    Wr: np.ndarray
    g_root: np.ndarray
    Fu: np.ndarray
    Fe: np.ndarray


def fusion_backward(g, h, marginals, K, params, grad_l, grad_e, child_mode="children"):
    """Gradients of a loss with upstream ``grad_l``, ``grad_e`` on the fused vectors.

    ``K`` is a constant input. Gradients with respect to the marginals are
    returned too so callers can continue into the tree layer.
    """
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    a, a_root = marginals.a, marginals.a_root
    lat = latent_fuse(g, marginals, params, child_mode)
    exp = explicit_fuse(h, K, params)
    grad_l = np.asarray(grad_l, dtype=np.float64)
    grad_e = np.asarray(grad_e, dtype=np.float64)
    if grad_l.shape != lat.l.shape or grad_e.shape != exp.e.shape:
        raise ValidationError("upstream gradient shapes do not match the fused outputs")
    d = params.d_sem

    gz = grad_l * (1.0 - lat.l ** 2)
    X = np.hstack([g, lat.p, lat.c])
    dWr = gz.T @ X
    dX = gz @ params.Wr
    dg = dX[:, :d].copy()
    dp = dX[:, d:2 * d]
    dc = dX[:, 2 * d:]

    dg += a @ dp
    da = g @ dp.T
    da_root = dp @ params.g_root
    dg_root = a_root @ dp
    if child_mode == "children":
        dg += a.T @ dc
        da += dc @ g.T
    else:
        s = a.sum(axis=1)
        dg += s[:, None] * dc
        da += np.sum(dc * g, axis=1)[:, None]

    gze = grad_e * (1.0 - exp.e ** 2)
    dFe = gze.T @ exp.t
    dU = np.asarray(K).T @ (gze @ params.Fe)
    gzu = dU * (1.0 - exp.u ** 2)
    dFu = gzu.T @ h
    dh = gzu @ params.Fu
    return FusionGrads(dg, dh, da, da_root, dWr, dg_root, dFu, dFe)
