"""Bilinear edge and root scoring from sentence structure vectors."""

from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ValidationError
from .trees import EdgeScores


def glorot_uniform(rng, shape):
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True)
class ScorerParams:
    """Projections for parent (Fp), child (Fc) and root (Fr) plus the
    bilinear weight Wa. No biases."""

    Fp: np.ndarray
    Fc: np.ndarray
    Wa: np.ndarray
    Fr: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            arr = np.array(getattr(self, f.name), dtype=np.float64)
            if arr.ndim != 2 or not np.all(np.isfinite(arr)):
                raise ValidationError(f"{f.name} must be a finite 2-D array")
            object.__setattr__(self, f.name, arr)
        d_proj, d_struct = self.Fp.shape
        if d_proj < 1 or d_struct < 1:
            raise ValidationError("scorer widths must be >= 1")
        if self.Fc.shape != (d_proj, d_struct):
            raise ValidationError(f"Fc has shape {self.Fc.shape}, expected {(d_proj, d_struct)}")
        if self.Wa.shape != (d_proj, d_proj):
            raise ValidationError(f"Wa has shape {self.Wa.shape}, expected {(d_proj, d_proj)}")
        if self.Fr.shape != (1, d_struct):
            raise ValidationError(f"Fr has shape {self.Fr.shape}, expected {(1, d_struct)}")

    @property
    def d_struct(self):
        return self.Fp.shape[1]

    @property
    def d_proj(self):
        return self.Fp.shape[0]

    @classmethod
    def init(cls, d_struct, d_proj=None, seed=0):
        d_proj = d_struct if d_proj is None else d_proj
        rng = np.random.default_rng(seed)
        return cls(
            Fp=glorot_uniform(rng, (d_proj, d_struct)),
            Fc=glorot_uniform(rng, (d_proj, d_struct)),
            Wa=glorot_uniform(rng, (d_proj, d_proj)),
            Fr=glorot_uniform(rng, (1, d_struct)),
        )

    def named(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_named(cls, tensors):
        missing = {f.name for f in fields(cls)} - set(tensors)
        if missing:
            raise ValidationError(f"missing scorer tensors: {sorted(missing)}")
        return cls(**{f.name: tensors[f.name] for f in fields(cls)})

    def updated(self, **kw):
        return replace(self, **kw)


def split_reps(h, d_sem=None):
    """Split sentence vectors into semantic (leading) and structure (trailing) parts.

    ``d_sem`` defaults to half the width (rounded down).
    """
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    width = h.shape[1]
    if d_sem is None:
        d_sem = width // 2
    if not 1 <= d_sem < width:
        raise ValidationError(
            f"semantic width must satisfy 1 <= d_sem < {width} so both parts are non-empty, got {d_sem}"
        )
    return h[:, :d_sem], h[:, d_sem:]


def _check_d(d_vecs, params):
    d = np.atleast_2d(np.asarray(d_vecs, dtype=np.float64))
    if d.shape[1] != params.d_struct:
        raise ValidationError(f"structure vectors have width {d.shape[1]}, scorer expects {params.d_struct}")
    return d


def score_edges(d_vecs, params):
    d = _check_d(d_vecs, params)
    P = d @ params.Fp.T
    C = d @ params.Fc.T
    return EdgeScores(P @ params.Wa @ C.T, (d @ params.Fr.T)[:, 0])


def score_backward(d_vecs, params, grad_f, grad_r):
    """Gradients of a loss through ``score_edges``.

    Returns ``(ScorerParams of gradients, grad wrt d_vecs)``. The full
    ``grad_f`` is used, diagonal included.
    """
    d = _check_d(d_vecs, params)
    n = d.shape[0]
    G = np.asarray(grad_f, dtype=np.float64)
    gr = np.asarray(grad_r, dtype=np.float64).reshape(-1)
    if G.shape != (n, n) or gr.shape != (n,):
        raise ValidationError("upstream gradient shapes do not match the structure vectors")
    P = d @ params.Fp.T
    C = d @ params.Fc.T
    dWa = P.T @ G @ C
    dP = G @ C @ params.Wa.T
    dC = G.T @ P @ params.Wa
    grads = ScorerParams(
        Fp=dP.T @ d,
        Fc=dC.T @ d,
        Wa=dWa,
        Fr=(gr @ d)[None, :],
    )
    dd = dP @ params.Fp + dC @ params.Fc + np.outer(gr, params.Fr[0])
    return grads, dd
