import numpy as np
import pytest

from docstruct.errors import ValidationError
from docstruct.gradcheck import gradient_check
from docstruct.scorer import ScorerParams, score_backward, score_edges, split_reps


def identity_params(d=2):
    return ScorerParams(np.eye(d), np.eye(d), np.eye(d), np.array([[1.0] + [0.0] * (d - 1)]))


def test_split_reps():
    g, d = split_reps([[1.0, 2.0, 3.0, 4.0]], 2)
    np.testing.assert_array_equal(g, [[1.0, 2.0]])
    np.testing.assert_array_equal(d, [[3.0, 4.0]])
    g, d = split_reps(np.arange(12.0).reshape(3, 4), 1)
    np.testing.assert_array_equal(g[:, 0], [0.0, 4.0, 8.0])
    np.testing.assert_array_equal(d[2], [9.0, 10.0, 11.0])
    g, d = split_reps(np.arange(6.0).reshape(1, 6))
    assert g.shape == d.shape == (1, 3)


@pytest.mark.parametrize("d_sem", [0, 4, 5])
def test_split_reps_rejects_empty_parts(d_sem):
    with pytest.raises(ValidationError):
        split_reps([[1.0, 2.0, 3.0, 4.0]], d_sem)


def test_score_edges_identity():
    p = identity_params()
    s = score_edges([[1.0, 0.0], [0.0, 1.0]], p)
    assert s.f[0, 1] == 0.0
    assert s.f[0, 0] == 1.0
    s = score_edges([[1.0, 1.0], [2.0, 0.0]], p)
    assert s.f[0, 1] == 2.0
    np.testing.assert_array_equal(s.r, [1.0, 2.0])


def test_score_edges_dimension_mismatch():
    with pytest.raises(ValidationError):
        score_edges(np.ones((3, 3)), identity_params(2))
    with pytest.raises(ValidationError):
        ScorerParams(np.eye(2), np.eye(3), np.eye(2), np.ones((1, 2)))


def test_linear_in_wa():
    p = ScorerParams.init(4, 3, seed=1)
    d = np.random.default_rng(0).normal(size=(5, 4))
    base = score_edges(d, p).f
    scaled = score_edges(d, p.updated(Wa=2.5 * p.Wa)).f
    np.testing.assert_allclose(scaled, 2.5 * base, rtol=1e-14)


def test_deterministic():
    p = ScorerParams.init(4, seed=3)
    d = np.random.default_rng(1).normal(size=(4, 4))
    a, b = score_edges(d, p), score_edges(d, p)
    assert a.f.tobytes() == b.f.tobytes() and a.r.tobytes() == b.r.tobytes()


def test_init_bounds():
    p = ScorerParams.init(6, 4, seed=0)
    assert np.all(np.abs(p.Fp) <= np.sqrt(6 / 10))
    assert np.all(np.abs(p.Wa) <= np.sqrt(6 / 8))
    assert np.all(np.abs(p.Fr) <= np.sqrt(6 / 7))


def test_backward_zero_upstream():
    p = ScorerParams.init(3, seed=0)
    d = np.ones((2, 3))
    g, dd = score_backward(d, p, np.zeros((2, 2)), np.zeros(2))
    assert not any(v.any() for v in g.named().values())
    assert not dd.any()


def test_backward_single_edge_wa_outer_product():
    p = identity_params()
    d = np.array([[1.0, 2.0], [3.0, -1.0]])
    G = np.zeros((2, 2))
    G[0, 1] = 1.0
    g, _ = score_backward(d, p, G, np.zeros(2))
    np.testing.assert_array_equal(g.Wa, np.outer(p.Fp @ d[0], p.Fc @ d[1]))


def test_backward_shape_mismatch():
    with pytest.raises(ValidationError):
        score_backward(np.ones((2, 2)), identity_params(), np.zeros((3, 3)), np.zeros(2))


@pytest.mark.parametrize("seed", range(20))
def test_scorer_gradient_check(seed):
    rep = gradient_check("scorer", seed=seed, tol=1e-4)
    assert rep.passed, rep
