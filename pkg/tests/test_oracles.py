import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spannercb.errors import EmbeddingFormatError
from spannercb.oracles import (BilinearRegressor, FiniteActionSet, RidgeRegressor, enumeration_argmax,
                               load_embeddings_csv, write_embeddings_csv)

from conftest import random_ball


def scan_argmax(ids, emb, theta):
    """Plain loop: first strictly larger score wins, ids visited in increasing order."""
    best_id, best = None, -np.inf
    for a, row in sorted(zip(ids, emb), key=lambda t: t[0]):
        v = sum(float(p) * float(t) for p, t in zip(row, theta))
        if v > best:
            best_id, best = a, v
    return best_id


def test_argmax_basis():
    s = FiniteActionSet(np.eye(2))
    assert enumeration_argmax(s, None, np.array([1.0, 0.0])) == 0


def test_argmax_tie_prefers_lowest_id():
    s = FiniteActionSet(np.array([[0.5, 0.0], [0.0, 1.0], [0.0, 1.0]]), ids=[7, 5, 3])
    assert s.argmax(None, np.array([0.0, 1.0])) == 3


def test_argmax_matches_scan(rng):
    emb = random_ball(rng, 1000, 8)
    s = FiniteActionSet(emb)
    for _ in range(20):
        th = rng.standard_normal(8)
        assert s.argmax(None, th) == scan_argmax(range(1000), emb, th)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(1e-3, 1e3))
def test_argmax_is_maximal_and_scale_invariant(seed, c):
    r = np.random.default_rng(seed)
    emb = random_ball(r, 50, 4)
    s = FiniteActionSet(emb)
    th = r.standard_normal(4)
    a = s.argmax(None, th)
    scores = s.bind().scores(th)
    assert np.all(scores[a] >= scores)
    np.testing.assert_allclose(scores, emb @ th, rtol=0, atol=1e-15)
    assert s.argmax(None, c * th) == a


def test_empty_or_oversized_rows_rejected():
    with pytest.raises(ValueError):
        FiniteActionSet(np.zeros((0, 2)))
    with pytest.raises(EmbeddingFormatError, match="row 1"):
        FiniteActionSet(np.array([[0.5, 0.0], [1.0, 0.5]]))


def test_duplicates_collapse_to_lowest_id():
    s = FiniteActionSet(np.array([[1.0, 0.0], [0.0, 1.0]])).with_duplicates(1, 3)
    view = s.bind()
    assert len(view) == 5
    assert view.canonical(4) == 1
    assert view.argmax(np.array([0.0, 1.0])) == 1
    np.testing.assert_array_equal(view.argmax_many(np.eye(2)), [0, 1])


def test_csv_round_trip(tmp_path, rng):
    s = FiniteActionSet(random_ball(rng, 12, 3), ids=range(100, 112))
    path = tmp_path / "emb.csv"
    write_embeddings_csv(path, s)
    back = load_embeddings_csv(path)
    np.testing.assert_array_equal(back.ids, s.ids)
    np.testing.assert_array_equal(back.embeddings, s.embeddings)


def test_csv_bad_norm_reports_row(tmp_path):
    path = tmp_path / "emb.csv"
    path.write_text("action_id,dim_0,dim_1\n0,0.5,0.5\n1,0.9,0.9\n")
    with pytest.raises(EmbeddingFormatError, match="row 3"):
        load_embeddings_csv(path)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "emb.csv"
    path.write_text("id,x,y\n0,0.5,0.5\n")
    with pytest.raises(EmbeddingFormatError, match="header"):
        load_embeddings_csv(path)


def test_ridge_starts_at_zero():
    np.testing.assert_array_equal(RidgeRegressor(3).predict(), np.zeros(3))


def test_ridge_repeated_observation():
    reg = RidgeRegressor(2, ridge=1.0)
    for _ in range(1000):
        reg.update(None, np.array([1.0, 0.0]), 1.0)
    np.testing.assert_allclose(reg.predict(), [1000 / 1001, 0.0], rtol=1e-12)


def test_ridge_recovers_parameter(rng):
    g = rng.standard_normal(4)
    g *= 0.9 / np.linalg.norm(g)
    reg = RidgeRegressor(4)
    for phi in random_ball(rng, 5000, 4):
        reg.update(None, phi, float(phi @ g))
    assert np.linalg.norm(reg.predict() - g) <= 0.05


def test_ridge_contextual_recovers_matrix(rng):
    W = rng.standard_normal((3, 2))
    W /= np.linalg.norm(W, 2)
    reg = RidgeRegressor(3, context_dim=2)
    for phi, x in zip(random_ball(rng, 4000, 3), random_ball(rng, 4000, 2)):
        reg.update(x, phi, float(phi @ W @ x))
    x = np.array([0.6, -0.3])
    assert np.linalg.norm(reg.predict(x) - W @ x) < 0.05


def test_ridge_regularized_error_is_monotone(rng):
    g = rng.standard_normal(3)
    g *= 0.8 / np.linalg.norm(g)
    reg = RidgeRegressor(3)
    prev = np.inf
    for phi in random_ball(rng, 300, 3):
        reg.update(None, phi, float(phi @ g))
        e = reg.predict() - g
        err = float(e @ reg.gram @ e)
        assert err <= prev + 1e-12
        prev = err


def test_prediction_projected_to_unit_ball():
    reg = RidgeRegressor(2, ridge=1e-6)
    for _ in range(10):
        reg.update(None, np.array([0.5, 0.0]), 1.0)
    assert np.linalg.norm(reg.predict()) <= 1.0 + 1e-12


def test_reward_clipping_counted():
    reg = RidgeRegressor(2)
    reg.update(None, np.array([1.0, 0.0]), 3.0)
    assert reg.clipped_rewards == 1
    np.testing.assert_allclose(reg.target, [1.0, 0.0])


def test_bilinear_zero_step_keeps_parameters():
    reg = BilinearRegressor(2, 2, step_size=0.0)
    reg.update(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 1.0)
    np.testing.assert_array_equal(reg.W, 0.0)


def test_bilinear_first_step():
    reg = BilinearRegressor(3, 2, step_size=0.05)
    phi, x = np.array([0.2, -0.4, 0.1]), np.array([0.5, 0.3])
    reg.update(x, phi, 1.0)
    np.testing.assert_allclose(reg.W, 0.05 * np.outer(phi, x), rtol=1e-15)


def test_bilinear_gradient_matches_finite_differences(rng):
    reg = BilinearRegressor(3, 4)
    reg.W = rng.standard_normal((3, 4)) * 0.3
    x, phi, r = rng.standard_normal(4), rng.standard_normal(3), 0.4
    grad = reg.gradient(x, phi, r)
    h = 1e-5
    fd = np.zeros_like(reg.W)
    for i in range(3):
        for j in range(4):
            Wp, Wm = reg.W.copy(), reg.W.copy()
            Wp[i, j] += h
            Wm[i, j] -= h
            fd[i, j] = (reg.loss(Wp, x, phi, r) - reg.loss(Wm, x, phi, r)) / (2 * h)
    np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-9)
