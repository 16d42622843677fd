"""Planted-tree recovery: train the bilinear scorer through the tree layer.

Each synthetic document hides a random tree. A sentence's structure vector
holds a one-hot block for its own identity and one for its parent's (empty
for the root), padded to ``d_struct`` and perturbed with Gaussian noise. The
scorer is trained with the tree negative log-likelihood using full-batch
Adagrad with global-norm gradient clipping.
"""

import logging
from dataclasses import dataclass, fields

import numpy as np

from .errors import DivergenceError, ValidationError
from .scorer import ScorerParams, score_backward, score_edges
from .trees import Arborescence, cle_decode, marginals, tree_score

log = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-10


@dataclass(frozen=True)
class TrainConfig:
    n_docs: int = 200
    n_sentences: int = 8
    d_struct: int = 32
    noise_sigma: float = 0.1
    lr: float = 0.15
    accumulator_init: float = 0.1
    epochs: int = 300
    seed: int = 17
    clip_norm: float = 2.0
    d_proj: int = 0

    def __post_init__(self):
        for name in ("n_docs", "n_sentences", "d_struct"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        if self.d_struct < 2 * self.n_sentences:
            raise ValidationError(
                f"d_struct={self.d_struct} cannot hold two {self.n_sentences}-wide indicator blocks"
            )
        if not self.lr > 0 or not self.accumulator_init >= 0 or self.noise_sigma < 0:
            raise ValidationError("lr must be > 0, accumulator_init >= 0, noise_sigma >= 0")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValidationError("clip_norm must be positive")

    @property
    def proj_width(self):
        return self.d_proj or self.d_struct

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class SyntheticDoc:
    gold: Arborescence
    features: np.ndarray


def random_tree(rng, n):
    """Random root, each new node attached to an already-placed node, then
    a random relabeling of the nodes."""
    parent = [-1] * n
    for k in range(1, n):
        parent[k] = int(rng.integers(k))
    perm = rng.permutation(n)
    relabeled = [None] * n
    for k in range(n):
        relabeled[perm[k]] = None if parent[k] < 0 else int(perm[parent[k]])
    return Arborescence.from_parents(relabeled)


def planted_features(tree, d_struct):
    n = tree.n
    x = np.zeros((n, d_struct))
    x[np.arange(n), np.arange(n)] = 1.0
    for j, p in enumerate(tree.parent):
        if p is not None:
            x[j, n + p] = 1.0
    return x


def generate_corpus(cfg):
    rng = np.random.default_rng(cfg.seed)
    docs = []
    for _ in range(cfg.n_docs):
        gold = random_tree(rng, cfg.n_sentences)
        x = planted_features(gold, cfg.d_struct)
        if cfg.noise_sigma > 0:
            x = x + rng.normal(0.0, cfg.noise_sigma, size=x.shape)
        docs.append(SyntheticDoc(gold, x))
    return docs


def tree_nll_and_grad(scores, gold):
    """``-log P(gold)`` and its gradient (marginals minus gold indicators)."""
    if scores.n != gold.n:
        raise ValidationError(f"scores over {scores.n} nodes, gold tree over {gold.n}")
    m = marginals(scores)
    loss = m.logZ - tree_score(scores, gold)
    gf = m.a.copy()
    for p, j in gold.edges():
        gf[p, j] -= 1.0
    gr = m.a_root.copy()
    gr[gold.root] -= 1.0
    return max(loss, 0.0), gf, gr


def adagrad_step(params, grads, accumulators, lr):
    """One Adagrad update over parallel lists of arrays."""
    if not (len(params) == len(grads) == len(accumulators)):
        raise ValidationError("params, grads and accumulators must have equal length")
    new_p, new_acc = [], []
    for p, g, acc in zip(params, grads, accumulators):
        p, g, acc = (np.asarray(x, dtype=np.float64) for x in (p, g, acc))
        if not (p.shape == g.shape == acc.shape):
            raise ValidationError(f"shape mismatch: {p.shape}, {g.shape}, {acc.shape}")
        acc = acc + g * g
        new_acc.append(acc)
        new_p.append(p - lr * g / (np.sqrt(acc) + ADAGRAD_EPS))
    return new_p, new_acc


def clip_by_global_norm(grads, max_norm):
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
    if max_norm is None or norm <= max_norm:
        return grads, norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


def corpus_loss_and_grad(params, docs):
    names = list(params.named())
    total = {k: np.zeros_like(v) for k, v in params.named().items()}
    loss = 0.0
    for doc in docs:
        scores = score_edges(doc.features, params)
        l, gf, gr = tree_nll_and_grad(scores, doc.gold)
        g, _ = score_backward(doc.features, params, gf, gr)
        loss += l
        for k in names:
            total[k] += getattr(g, k)
    inv = 1.0 / len(docs)
    return loss * inv, {k: v * inv for k, v in total.items()}


def uas(predicted, gold):
    predicted, gold = list(predicted), list(gold)
    if len(predicted) != len(gold):
        raise ValidationError(f"{len(predicted)} predicted trees vs {len(gold)} gold trees")
    hit = total = 0
    for p, g in zip(predicted, gold):
        if p.n != g.n:
            raise ValidationError(f"tree sizes differ: {p.n} vs {g.n}")
        hit += sum(a == b for a, b in zip(p.parent, g.parent))
        total += g.n
    return hit / total if total else 0.0


def decode_corpus(params, docs):
    return [cle_decode(score_edges(d.features, params)) for d in docs]


@dataclass(frozen=True)
class TrainResult:
    params: ScorerParams
    init_params: ScorerParams
    losses: tuple
    initial_uas: float
    final_uas: float
    initial_loss: float
    final_loss: float


def train(cfg, docs=None, callback=None):
    """Full-batch training; ``losses[k]`` is the mean loss before update k+1,
    with one extra trailing entry for the final parameters."""
    docs = generate_corpus(cfg) if docs is None else docs
    params = ScorerParams.init(cfg.d_struct, cfg.proj_width, seed=cfg.seed + 1)
    init = params
    initial_uas = uas(decode_corpus(params, docs), [d.gold for d in docs])
    names = list(params.named())
    acc = [np.full_like(v, cfg.accumulator_init) for v in params.named().values()]
    losses = []
    for epoch in range(cfg.epochs + 1):
        loss, grads = corpus_loss_and_grad(params, docs)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss} at epoch {epoch}")
        losses.append(loss)
        if callback is not None:
            callback(epoch, loss)
        if epoch == cfg.epochs:
            break
        flat, _ = clip_by_global_norm([grads[k] for k in names], cfg.clip_norm)
        new, acc = adagrad_step([getattr(params, k) for k in names], flat, acc, cfg.lr)
        params = ScorerParams(**dict(zip(names, new)))
        log.debug("epoch %d loss %.6f", epoch, loss)
    final_uas = uas(decode_corpus(params, docs), [d.gold for d in docs])
    return TrainResult(params, init, tuple(losses), initial_uas, final_uas, losses[0], losses[-1])
