import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spannercb.errors import RankDeficiencyError
from spannercb.oracles import FiniteActionSet
from spannercb.spanner import (SpannerCache, ball_init, compute_spanner, init_spanner, local_search_init,
                               spanner_guard, spanner_to_design)

from conftest import best_subset_det, cofactor_det, random_action_set, random_ball


def greedy_init_reference(emb):
    """Column-by-column maximization of |det(phi_1..phi_i, e_{i+1}..e_d)| by exhaustive scan."""
    d = emb.shape[1]
    chosen = []
    for i in range(d):
        best, best_a = -1.0, None
        for a, phi in enumerate(emb):
            cols = [emb[c] for c in chosen] + [phi] + [np.eye(d)[k] for k in range(i + 1, d)]
            v = abs(cofactor_det(np.array(cols).T))
            if v > best + 1e-12:
                best, best_a = v, a
        chosen.append(best_a)
    return chosen


def coefficient_bound(sp, emb):
    return np.max(np.abs(np.linalg.solve(sp.matrix_state.matrix, emb.T)))


def test_init_on_basis_is_permutation():
    sp = init_spanner(FiniteActionSet(np.eye(4)))
    assert sorted(sp.action_ids) == [0, 1, 2, 3]
    assert abs(sp.det) == pytest.approx(1.0)


def test_init_with_dominant_direction():
    emb = np.array([[0.5, 0.0], [1.0, 0.0], [0.3, 0.4], [0.0, 0.6]])
    sp = init_spanner(FiniteActionSet(emb))
    assert sp.action_ids == greedy_init_reference(emb) == [1, 3]


@pytest.mark.parametrize("seed", range(5))
def test_init_matches_exhaustive_greedy(seed):
    emb = random_ball(np.random.default_rng(seed), 12, 3)
    assert init_spanner(FiniteActionSet(emb)).action_ids == greedy_init_reference(emb)


def test_ball_initialization_det():
    r, d = 0.3, 3
    rng = np.random.default_rng(0)
    emb = np.vstack([r * np.eye(d), r * random_ball(rng, 20, d)])
    sp = ball_init(FiniteActionSet(emb), r)
    assert abs(sp.det) == pytest.approx(r ** d)


def test_basis_already_optimal():
    sp = compute_spanner(FiniteActionSet(np.eye(3)), C=2.0)
    assert sp.iterations == 1
    assert abs(sp.det) == pytest.approx(1.0)


def test_random_spanner_coefficients():
    s = random_action_set(3, 50, 3)
    sp = compute_spanner(s, C=2.0)
    assert coefficient_bound(sp, s.embeddings) <= 2.0 + 1e-9


def test_iteration_bound_d5():
    s = random_action_set(4, 200, 5)
    sp = compute_spanner(s, C=2.0)
    assert sp.iterations <= 50 * 5 * math.log2(5) + 50


def test_each_swap_grows_det_by_factor():
    s = random_action_set(5, 300, 6)
    sp = compute_spanner(s, C=1.5)
    h = sp.det_history
    init_det = abs(init_spanner(s).det)
    assert h[0] == pytest.approx(init_det)
    for prev, cur in zip(h, h[1:]):
        assert cur >= 1.5 * prev * (1 - 1e-12)
    assert max(h) <= 1.0 + 1e-12


def test_orthonormal_design_norm():
    d = 3
    sp = compute_spanner(FiniteActionSet(np.eye(d)), C=2.0)
    q = spanner_to_design(sp)
    np.testing.assert_allclose(q.norm(np.eye(d)), d)


def test_design_bound_random_d4():
    s = random_action_set(11, 60, 4)
    q = spanner_to_design(compute_spanner(s, C=2.0))
    norms = q.norm(s.embeddings)
    assert norms.max() <= 4 * 16
    assert norms.max() >= 4 - 1e-9


def test_local_search_basis_r_is_one():
    _, r = local_search_init(FiniteActionSet(np.eye(3)))
    assert r == pytest.approx(1.0)


@pytest.mark.parametrize("seed,d,n", [(0, 2, 10), (1, 3, 12), (2, 4, 15), (3, 3, 15)])
def test_local_search_certificate(seed, d, n):
    s = random_action_set(seed, n, d)
    sp, r = local_search_init(s)
    assert r == pytest.approx(abs(sp.det) ** (1 / d))
    assert r >= best_subset_det(s.embeddings) ** (1 / d) / (8 * d)


def test_local_search_degenerate_plane():
    rng = np.random.default_rng(0)
    emb = np.hstack([random_ball(rng, 10, 2), np.zeros((10, 1))])
    with pytest.raises(RankDeficiencyError):
        local_search_init(FiniteActionSet(emb))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 5), st.integers(1, 40))
def test_duplicates_do_not_change_spanner(seed, d, copies):
    s = random_action_set(seed, 30, d)
    rng = np.random.default_rng(seed + 1)
    target = int(rng.integers(30))
    a = compute_spanner(s, C=2.0)
    b = compute_spanner(s.with_duplicates(target, copies), C=2.0)
    np.testing.assert_array_equal(a.matrix_state.matrix, b.matrix_state.matrix)
    assert a.det == b.det
    assert a.action_ids == b.action_ids


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 6), st.sampled_from([1.2, 2.0, 3.0]))
def test_spanner_property_exhaustive(seed, d, C):
    s = random_action_set(seed, 40, d)
    sp = compute_spanner(s, C=C)
    assert coefficient_bound(sp, s.embeddings) <= C + 1e-9
    assert sp.max_coefficient(s.embeddings) <= C + 1e-9


def test_cache_reuses_context_independent_spanner():
    s = random_action_set(0, 20, 3)
    cache = SpannerCache()
    first, _ = cache.get(s, None)
    assert cache.recomputed
    second, _ = cache.get(s, np.ones(2))
    assert not cache.recomputed and second is first


def test_cache_recomputes_for_context_dependent_set():
    s = FiniteActionSet(random_ball(np.random.default_rng(0), 20, 3), context_map=lambda x, E: E * x[0])
    cache = SpannerCache()
    cache.get(s, np.array([0.5]))
    cache.get(s, np.array([0.7]))
    assert cache.recomputed
