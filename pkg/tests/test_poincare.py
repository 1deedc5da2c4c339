import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphs import binary_tree, random_ball_points, taxonomy
from kgembed.errors import EmptyEdgeSet, OutsideBall
from kgembed.poincare import (NegativeSampler, PoincareConfig, distance_grads, distances, mean_parent_rank,
                              poincare_distance, poincare_loss, poincare_loss_and_grad, poincare_train, project,
                              riemannian_update)

ball_vec = st.lists(st.floats(-0.55, 0.55), min_size=3, max_size=3).map(np.array)


class TestDistance:
    def test_origin(self):
        assert poincare_distance([0, 0], [0, 0]) == 0.0

    def test_spot_value(self):
        assert poincare_distance([0.5, 0], [0, 0]) == pytest.approx(np.log(3), abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(ball_vec, ball_vec)
    def test_symmetric_nonnegative(self, u, v):
        assert poincare_distance(u, v) == pytest.approx(poincare_distance(v, u), abs=1e-12)
        assert poincare_distance(u, v) >= 0

    def test_triangle(self):
        rng = np.random.default_rng(0)
        x = random_ball_points(rng, 3000, 4).reshape(1000, 3, 4)
        for a, b, c in x:
            assert poincare_distance(a, c) <= poincare_distance(a, b) + poincare_distance(b, c) + 1e-9

    def test_outside_ball(self):
        with pytest.raises(OutsideBall):
            poincare_distance([1.0, 0], [0, 0])

    def test_distance_gradients(self):
        rng = np.random.default_rng(1)
        h = 1e-6
        for _ in range(50):
            u = random_ball_points(rng, 1, 3)[0]
            vs = random_ball_points(rng, 3, 3)
            _, gu, gv = distance_grads(u, vs)
            for j in range(3):
                e = np.eye(3)[j] * h
                assert np.allclose(gu[:, j], (distances(u + e, vs) - distances(u - e, vs)) / (2 * h), rtol=1e-4, atol=1e-7)
                num = [(distances(u, vs + e)[k] - distances(u, vs - e)[k]) / (2 * h) for k in range(3)]
                assert np.allclose(gv[:, j], num, rtol=1e-4, atol=1e-7)


class TestLoss:
    def test_single_candidate(self):
        x = np.array([[0.1, 0.2], [0.3, -0.1]])
        assert poincare_loss(x, [(0, 1)], [[]], 0.01) == pytest.approx(0.01 * np.sum(x * x), abs=1e-12)

    def test_tied_candidates(self):
        x = np.array([[0.0, 0.0], [0.3, 0.0], [0.0, -0.3]])
        assert poincare_loss(x, [(0, 1)], [[2]]) == pytest.approx(np.log(2), abs=1e-12)

    def test_monotone_in_positive_distance(self):
        loss = [poincare_loss(np.array([[0.0, 0], [r, 0], [0, -0.5]]), [(0, 1)], [[2]]) for r in (0.6, 0.4, 0.2)]
        assert loss[0] > loss[1] > loss[2]

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(2)
        h = 1e-6
        worst = 0.0
        for _ in range(50):
            n = 6
            x = random_ball_points(rng, n, 3, 0.9)
            pos = [(0, 1), (2, 3)]
            negs = [rng.choice([2, 3, 4, 5], size=3).tolist(), rng.choice([0, 1, 4, 5], size=2).tolist()]
            _, g = poincare_loss_and_grad(x, pos, negs, 1e-3)
            num = np.zeros_like(x)
            for idx in np.ndindex(x.shape):
                d = np.zeros_like(x)
                d[idx] = h
                num[idx] = (poincare_loss(x + d, pos, negs, 1e-3) - poincare_loss(x - d, pos, negs, 1e-3)) / (2 * h)
            worst = max(worst, np.linalg.norm(g - num) / (np.linalg.norm(g) + np.linalg.norm(num)))
        assert worst < 1e-4


class TestUpdate:
    def test_origin_scale(self):
        g = np.array([0.4, -0.8])
        assert np.allclose(riemannian_update(np.zeros(2), g, 1.0), -g / 4)

    def test_zero_gradient(self):
        x = np.array([0.3, 0.2])
        assert np.array_equal(riemannian_update(x, np.zeros(2), 0.5), x)

    def test_projection(self):
        out = riemannian_update(np.array([0.5, 0.0]), np.array([-100.0, 0.0]), 1.0, 1e-5)
        assert np.linalg.norm(out) == pytest.approx(1 - 1e-5, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    def test_project_inside(self, v):
        out = project(np.array(v))
        assert np.linalg.norm(out) <= 1 - 1e-5 + 1e-12


def test_negative_sampler_excludes_related():
    s = NegativeSampler(5, np.array([[0, 1], [0, 2]]))
    draws = s.sample(0, 200, np.random.default_rng(0))
    assert set(draws.tolist()) <= {3, 4}
    assert NegativeSampler(2, np.array([[0, 1]])).sample(0, 3, np.random.default_rng(0)).size == 0


def test_zero_epochs_bound():
    edges, n = binary_tree(3)
    t = poincare_train(edges, n, PoincareConfig(dimension=4, epochs=0))
    assert np.all(np.linalg.norm(t.vectors, axis=1) <= 0.001 * np.sqrt(4))


def test_binary_tree_distances():
    edges, n = binary_tree(3)
    t = poincare_train(edges, n, PoincareConfig(dimension=2, epochs=50, seed=1))
    x = t.vectors
    adj = {(min(a, b), max(a, b)) for a, b in edges}
    pc = np.mean([poincare_distance(x[a], x[b]) for a, b in edges])
    rng = np.random.default_rng(0)
    others = []
    while len(others) < 200:
        a, b = sorted(rng.choice(n, 2, replace=False).tolist())
        if (a, b) not in adj:
            others.append(poincare_distance(x[a], x[b]))
    assert pc < np.mean(others)
    leaves = np.arange(n // 2, n)
    assert np.linalg.norm(x[0]) <= np.median(np.linalg.norm(x[leaves], axis=1))


def test_stays_in_ball_and_history():
    edges, n = taxonomy(2, 4)
    t = poincare_train(edges, n, PoincareConfig(dimension=3, epochs=5, learning_rate=5.0, burn_in_epochs=1))
    assert np.all(np.array(t.meta["max_norm_history"]) <= 1 - 1e-5 + 1e-12)
    assert len(t.meta["loss_history"]) == 5


def test_mean_parent_rank_perfect():
    # children placed exactly on their parents' rays
    x = np.array([[0.0, 0], [0.5, 0], [-0.5, 0], [0.8, 0.05], [-0.8, 0.05]])
    pairs = [(1, 0), (2, 0), (3, 1), (4, 2)]
    assert mean_parent_rank(x, pairs) == 1.0
    assert mean_parent_rank(x, pairs, filtered=False) >= 1.0


def test_errors():
    with pytest.raises(EmptyEdgeSet):
        poincare_train([], 3, PoincareConfig())
    with pytest.raises(ValueError):
        PoincareConfig(ball_epsilon=0).validate()
