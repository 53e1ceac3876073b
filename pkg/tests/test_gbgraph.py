import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import nnls_enumerate, nnls_kkt_residual, nnls_projected_gradient

from gbrip.gbgraph import (
    build_graph,
    inter_ball_weight,
    intra_neighbors,
    propagate_confidence,
    reconstruction_weights,
)
from gbrip.gbspace import GranularBall, build_gb_space, space_from_assignment


def test_three_neighbor_example_matches_oracles(kernel_backend):
    # x=(1,1) with neighbors (1,0),(0,1),(-1,0): the exact answer is w=(1,1,0)
    feats = np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    w = reconstruction_weights(feats, 0, [1, 2, 3])
    np.testing.assert_allclose(w, [1.0, 1.0, 0.0], atol=1e-12)
    rng = np.random.default_rng(21)
    for _ in range(5):
        f = feats + 0.05 * rng.normal(size=feats.shape)
        A, x = f[1:].T, f[0]
        w = reconstruction_weights(f, 0, [1, 2, 3])
        obj = np.sum((x - A @ w) ** 2)
        assert obj == pytest.approx(nnls_enumerate(A, x)[0], abs=1e-10)
        assert obj <= nnls_projected_gradient(A, x, 20_000)[0] + 1e-8
        assert nnls_kkt_residual(A, x, w) <= 1e-6


def test_reconstruction_degenerate_inputs(kernel_backend):
    f = np.zeros((4, 3))
    np.testing.assert_array_equal(reconstruction_weights(f, 0, [1, 2, 3]), np.zeros(3))
    assert reconstruction_weights(f, 0, []).shape == (0,)
    f = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])  # collinear duplicates
    w = reconstruction_weights(f, 0, [1, 2])
    assert w.sum() == pytest.approx(1.0) and np.all(w >= 0)
    with pytest.raises(ValueError):
        reconstruction_weights(f, 0, [0, 1])


def test_inter_ball_gate():
    X = np.array([[0.0, 0.0], [2.0, 0.0], [3.0, 0.0], [5.0, 0.0], [100.0, 0.0], [101.0, 0.0]])
    a = GranularBall.from_members(X, [0, 1])  # center 1, radius 1
    b = GranularBall.from_members(X, [2, 3])  # center 4, radius 1
    far = GranularBall.from_members(X, [4, 5])
    assert inter_ball_weight(a, b) is None  # 3 is not < 2
    c = GranularBall.from_members(X, [1, 2])  # center 2.5, radius .5
    assert inter_ball_weight(a, c) == pytest.approx(1 / 1.5)
    assert inter_ball_weight(a, far) is None
    assert inter_ball_weight(a, a) is None


def test_graph_structure(kernel_backend):
    X = np.random.default_rng(2).normal(size=(150, 3))
    space = build_gb_space(X, seed=0)
    g = build_graph(space, X)
    assert g.sample_count == 150
    for i in range(150):
        np.testing.assert_array_equal(np.sort(g.neighbors[i]), intra_neighbors(space, i))
        assert np.all(g.recon_weights[i] >= 0)
    total = np.array([w.sum() for w in g.recon_weights])
    expect = np.where(total > 0, np.sqrt(total), 1.0)
    np.testing.assert_allclose(g.support, expect)
    for (i, j), w in g.inter_edges.items():
        assert i < j and w == pytest.approx(1 / np.linalg.norm(space.balls[i].center - space.balls[j].center))
        assert g.inter_weight(j, i) == w


def test_singleton_ball_support_fallback():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [9.0, 9.0]])
    space = space_from_assignment(X, [0, 0, 1])
    g = build_graph(space, X)
    assert g.support[2] == 1.0 and g.neighbors[2].size == 0


def test_coincident_centers_counted():
    X = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    space = space_from_assignment(X, [0, 0, 1, 1])
    g = build_graph(space, X)
    assert g.degenerate_edges == 1 and not g.inter_edges


def test_threads_do_not_change_graph():
    X = np.random.default_rng(5).normal(size=(400, 4))
    space = build_gb_space(X, seed=0)
    a, b = build_graph(space, X, threads=1), build_graph(space, X, threads=4)
    for wa, wb in zip(a.recon_weights, b.recon_weights):
        np.testing.assert_array_equal(wa, wb)


def test_propagate_alpha_zero_is_copy():
    X = np.random.default_rng(0).normal(size=(30, 2))
    g = build_graph(build_gb_space(X), X)
    P = np.random.default_rng(1).random((30, 3))
    out = propagate_confidence(g, P, np.ones((30, 3), bool), 0.0)
    np.testing.assert_array_equal(out, P)
    assert out is not P
    with pytest.raises(ValueError):
        propagate_confidence(g, P, np.ones((30, 3), bool), 1.5)


def test_propagate_hand_example():
    # two samples that reconstruct each other exactly with weight 1
    X = np.array([[1.0, 0.0], [1.0, 0.0]])
    g = build_graph(space_from_assignment(X, [0, 0]), X)
    P = np.array([[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]])
    S = np.array([[True, True, False], [True, True, True]])
    out = propagate_confidence(g, P, S, 0.5)
    np.testing.assert_allclose(out, [[0.75, 0.25, 0.0], [0.75, 0.25, 0.0]])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0, 1), n=st.integers(2, 60), L=st.integers(2, 6))
def test_propagate_preserves_support_and_row_sums(seed, alpha, n, L):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    g = build_graph(build_gb_space(X, seed=seed), X)
    S = rng.random((n, L)) < 0.5
    S[np.arange(n), rng.integers(0, L, n)] = True
    P = np.where(S, rng.random((n, L)) + 0.01, 0.0)
    out = propagate_confidence(g, P, S, alpha)
    assert np.all(out[~S] == 0.0) and np.all(out >= 0)
    np.testing.assert_allclose(out.sum(1), P.sum(1), rtol=1e-12)
