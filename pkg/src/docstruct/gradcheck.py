"""Central finite-difference checks of the hand-written backward passes.

Each component is reduced to a scalar ``sum(upstream * outputs)`` with a
random upstream; the analytic gradient of that scalar is compared with
central differences for every input coordinate.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .fusion import CHILD_MODES, FusionParams, explicit_fuse, fusion_backward, latent_fuse
from .graph import SentenceGraph, normalize_adjacency
from .scorer import ScorerParams, score_backward, score_edges
from .trainer import random_tree, tree_nll_and_grad
from .trees import EdgeScores, TreeMarginals, grad_scores, marginals

COMPONENTS = ("mtt", "scorer", "fusion", "loss")
STEP = 1e-5
FLOOR = 1e-6


@dataclass(frozen=True)
class GradCheckReport:
    component: str
    seed: int
    tol: float
    max_rel_error: float
    worst: str
    n_checked: int

    @property
    def passed(self):
        return self.max_rel_error <= self.tol


def numeric_grad(fun, inputs, name, h=STEP):
    """Central-difference gradient of ``fun(inputs)`` wrt ``inputs[name]``."""
    x = inputs[name]
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = fun(inputs)
        x[idx] = orig - h
        down = fun(inputs)
        x[idx] = orig
        out[idx] = (up - down) / (2 * h)
    return out


def relative_error(analytic, numeric, floor=FLOOR):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def compare(fun, inputs, analytic, skip=None, h=STEP):
    """Return ``(max_rel_error, worst_label, n_checked)`` over all named inputs.

    ``skip`` maps an input name to a boolean mask of coordinates to ignore.
    """
    worst, label, count = 0.0, "", 0
    skip = skip or {}
    for name, grad in analytic.items():
        num = numeric_grad(fun, inputs, name, h)
        err = relative_error(grad, num)
        if name in skip:
            err = np.where(skip[name], 0.0, err)
            count += int(np.sum(~skip[name]))
        else:
            count += err.size
        if err.size and err.max() > worst:
            k = np.unravel_index(int(np.argmax(err)), err.shape)
            worst, label = float(err.max()), f"{name}{list(map(int, k))}"
    return worst, label, count


def _random_sizes(rng):
    return int(rng.integers(2, 7)), int(rng.integers(2, 9))


def _check_mtt(rng, scale, zero):
    n, _ = _random_sizes(rng)
    x = {"f": rng.normal(size=(n, n)), "r": rng.normal(size=n)}
    ua, ur = rng.normal(size=(n, n)), rng.normal(size=n)
    uz = rng.normal()
    if zero:
        ua, ur, uz = ua * 0, ur * 0, 0.0

    def fun(v):
        m = marginals(EdgeScores(v["f"], v["r"]))
        return np.sum(ua * m.a) + ur @ m.a_root + uz * m.logZ

    gf, gr = grad_scores(EdgeScores(x["f"], x["r"]), ua, ur, uz)
    return compare(fun, x, {"f": gf * scale, "r": gr * scale}, skip={"f": np.eye(n, dtype=bool)})


def _check_scorer(rng, scale, zero):
    n, ds = _random_sizes(rng)
    dp = int(rng.integers(1, 6))
    p = ScorerParams.init(ds, dp, seed=int(rng.integers(1 << 31)))
    x = dict(p.named(), d=rng.normal(size=(n, ds)))
    uf, ur = rng.normal(size=(n, n)), rng.normal(size=n)
    if zero:
        uf, ur = uf * 0, ur * 0

    def fun(v):
        s = score_edges(v["d"], ScorerParams(v["Fp"], v["Fc"], v["Wa"], v["Fr"]))
        return np.sum(uf * s.f) + ur @ s.r

    g, dd = score_backward(x["d"], p, uf, ur)
    analytic = {k: val * scale for k, val in g.named().items()}
    analytic["d"] = dd * scale
    return compare(fun, x, analytic)


def _check_fusion(rng, scale, zero, child_mode):
    n, d_sem = _random_sizes(rng)
    d_h = int(rng.integers(1, 7))
    d_u, d_e = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    p = FusionParams.init(d_sem, d_h, d_u, d_e, seed=int(rng.integers(1 << 31)))
    m = marginals(EdgeScores(rng.normal(size=(n, n)), rng.normal(size=n)))
    counts = rng.integers(0, 3, size=(n, n))
    counts = np.triu(counts, 1) + np.triu(counts, 1).T
    K = normalize_adjacency(SentenceGraph(counts)).k
    x = dict(p.named(), g=rng.normal(size=(n, d_sem)), h=rng.normal(size=(n, d_h)),
             a=m.a.copy(), a_root=m.a_root.copy())
    ul, ue = rng.normal(size=(n, d_sem)), rng.normal(size=(n, d_e))
    if zero:
        ul, ue = ul * 0, ue * 0

    def fun(v):
        fp = FusionParams(v["Wr"], v["g_root"], v["Fu"], v["Fe"])
        tm = TreeMarginals(v["a"], v["a_root"], 0.0)
        l = latent_fuse(v["g"], tm, fp, child_mode).l
        e = explicit_fuse(v["h"], K, fp).e
        return np.sum(ul * l) + np.sum(ue * e)

    g = fusion_backward(x["g"], x["h"], m, K, p, ul, ue, child_mode)
    analytic = {k: getattr(g, k) * scale for k in ("g", "h", "a", "a_root", "Wr", "g_root", "Fu", "Fe")}
    return compare(fun, x, analytic)


def _check_loss(rng, scale, zero):
    n, _ = _random_sizes(rng)
    x = {"f": rng.normal(size=(n, n)), "r": rng.normal(size=n)}
    gold = random_tree(rng, n)
    w = 0.0 if zero else 1.0

    def fun(v):
        return w * tree_nll_and_grad(EdgeScores(v["f"], v["r"]), gold)[0]

    _, gf, gr = tree_nll_and_grad(EdgeScores(x["f"], x["r"]), gold)
    return compare(fun, x, {"f": w * gf * scale, "r": w * gr * scale}, skip={"f": np.eye(n, dtype=bool)})


def gradient_check(component, seed=0, tol=1e-4, analytic_scale=1.0, zero_upstream=False,
                   child_mode="children"):
    """Check one component at a seeded random point.

    ``analytic_scale`` multiplies the analytic gradient (fault injection);
    ``zero_upstream`` checks the degenerate all-zero upstream case.
    """
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    rng = np.random.default_rng(seed)
    if component == "mtt":
        res = _check_mtt(rng, analytic_scale, zero_upstream)
    elif component == "scorer":
        res = _check_scorer(rng, analytic_scale, zero_upstream)
    elif component == "fusion":
        if child_mode not in CHILD_MODES:
            raise ValidationError(f"unknown child_mode {child_mode!r}")
        res = _check_fusion(rng, analytic_scale, zero_upstream, child_mode)
    elif component == "loss":
        res = _check_loss(rng, analytic_scale, zero_upstream)
    else:
        raise ValidationError(f"unknown component {component!r}; expected one of {COMPONENTS}")
    name = component if component != "fusion" else f"fusion[{child_mode}]"
    return GradCheckReport(name, seed, tol, res[0], res[1], res[2])
