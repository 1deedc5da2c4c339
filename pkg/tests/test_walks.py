import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from graphs import cubic_graph, two_cliques
from kgembed.errors import InvalidMetapath, StartGroupMismatch
from kgembed.graph import graph_from_edges
from kgembed.walks import (METAPATH, NODE2VEC, Metapath, Node2vecSampler, WalkConfig, WalkCorpus, generate_corpus,
                           metapath_walk, node2vec_walk)


def violations(graph, walk, metapath):
    return sum(graph.groups[walk[i + 1]] != metapath.target_group(i) or not graph.has_edge(walk[i], walk[i + 1])
               for i in range(len(walk) - 1)) + (graph.groups[walk[0]] != metapath.pattern[0])


class TestNode2vec:
    def test_isolated(self):
        g = graph_from_edges([(0, 1)], groups=["DISO"] * 3)
        assert node2vec_walk(g, 2, WalkConfig(walk_length=5)) == [2]

    def test_triangle_uniform(self):
        g = graph_from_edges([(0, 1), (1, 2), (2, 0)])
        s = Node2vecSampler(g)
        rng = np.random.default_rng(1)
        counts = np.zeros(3)
        for _ in range(30000):
            counts[s.step(2, 0, rng)] += 1
        assert counts[0] == 0
        assert stats.chisquare(counts[1:]).pvalue > 0.01

    def test_path_second_step(self):
        g = graph_from_edges([(0, 1), (1, 2)])
        s = Node2vecSampler(g)
        rng = np.random.default_rng(2)
        n = 100_000
        thirds = np.array([s.walk(0, 3, rng) for _ in range(n)])
        assert np.all(thirds[:, :2] == [0, 1])
        rate = np.mean(thirds[:, 2] == 0)
        assert abs(rate - 0.5) <= 3 * np.sqrt(0.25 / n)

    def test_bias_weights(self):
        # 0-1, 1-2, 1-3, 0-2: from prev 0 at 1, neighbor 0 is a return, 2 is shared, 3 is far
        g = graph_from_edges([(0, 1), (1, 2), (1, 3), (0, 2)])
        s = Node2vecSampler(g, p=0.5, q=4.0)
        nb = g.neighbors(1).tolist()
        w = dict(zip(nb, s.transition_weights(0, 1)))
        assert w == {0: 2.0, 2: 1.0, 3: 0.25}
        rng = np.random.default_rng(3)
        draws = np.array([s.step(0, 1, rng) for _ in range(40000)])
        freq = np.array([np.mean(draws == k) for k in (0, 2, 3)])
        assert np.allclose(freq, np.array([2.0, 1.0, 0.25]) / 3.25, atol=0.01)

    def test_relation_weights(self):
        g = graph_from_edges([(0, 1, "isa"), (0, 2, "treats")])
        s = Node2vecSampler(g, relation_weights={"isa": 3.0})
        rng = np.random.default_rng(4)
        draws = np.array([s.step(None, 0, rng) for _ in range(20000)])
        assert abs(np.mean(draws == 1) - 0.75) < 0.015

    def test_chi_square_on_cubic_graph(self):
        g = cubic_graph()
        s = Node2vecSampler(g)
        rng = np.random.default_rng(5)
        counts = np.zeros((g.num_nodes, 3))
        prev, cur = None, 0
        for _ in range(100_000):
            nxt = s.step(prev, cur, rng)
            counts[cur, g.neighbors(cur).tolist().index(nxt)] += 1
            prev, cur = cur, nxt
        expected = counts.sum(axis=1, keepdims=True) / 3 * np.ones((1, 3))
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert stats.chi2.sf(chi2, df=g.num_nodes * 2) > 0.01

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.25, 4), st.floats(0.25, 4))
    def test_walks_follow_edges(self, seed, p, q):
        g = two_cliques(6)
        walk = node2vec_walk(g, 0, WalkConfig(walk_length=15, p=p, q=q), np.random.default_rng(seed))
        assert len(walk) == 15
        assert all(g.has_edge(a, b) for a, b in zip(walk, walk[1:]))


class TestMetapath:
    def test_start_mismatch(self):
        g = graph_from_edges([(0, 1)], groups=["CHEM", "DISO"])
        with pytest.raises(StartGroupMismatch):
            metapath_walk(g, 0, Metapath(("DISO", "CHEM", "DISO")), 3)

    def test_star_alternates(self):
        g = graph_from_edges([(0, 1), (0, 2), (0, 3)], groups=["DISO", "CHEM", "CHEM", "CHEM"])
        rng = np.random.default_rng(0)
        for _ in range(200):
            w = metapath_walk(g, 0, Metapath(("DISO", "CHEM")), 4, rng)
            assert [g.groups[x] for x in w] == ["DISO", "CHEM", "DISO", "CHEM"]

    def test_off_pattern_neighbor_never_visited(self):
        g = graph_from_edges([(0, 1), (0, 2)], groups=["DISO", "CHEM", "PROC"])
        rng = np.random.default_rng(1)
        sampler_walks = [metapath_walk(g, 0, Metapath(("DISO", "CHEM")), 6, rng) for _ in range(10_000)]
        assert not any(2 in w for w in sampler_walks)

    def test_closed_pattern_cycles_without_seam_repeat(self):
        mp = Metapath(("DISO", "CHEM", "DISO"))
        assert mp.cycle == ("DISO", "CHEM")
        assert [mp.target_group(i) for i in range(4)] == ["CHEM", "DISO", "CHEM", "DISO"]
        mp2 = Metapath(("DISO", "CHEM", "PROC"))
        assert [mp2.target_group(i) for i in range(4)] == ["CHEM", "PROC", "DISO", "CHEM"]

    def test_dead_end_truncates(self):
        g = graph_from_edges([(0, 1)], groups=["DISO", "CHEM", "PROC"])
        g2 = graph_from_edges([(0, 1), (1, 2)], groups=["DISO", "CHEM", "PROC"])
        assert metapath_walk(g2, 0, Metapath(("DISO", "CHEM", "ANAT")), 5, np.random.default_rng(0)) == [0, 1]
        assert len(metapath_walk(g, 0, Metapath(("DISO", "CHEM")), 5, np.random.default_rng(0))) == 5

    def test_invalid(self):
        with pytest.raises(InvalidMetapath):
            Metapath(("DISO",))
        g = graph_from_edges([(0, 1)], groups=["DISO", "PROC"])
        with pytest.raises(InvalidMetapath):
            generate_corpus(g, METAPATH, WalkConfig(), Metapath(("DISO", "CHEM")))

    def test_no_violations(self):
        g = two_cliques(8)
        mp = Metapath(("DISO", "CHEM", "DISO"))
        groups = ["DISO", "CHEM"] * 8
        g = graph_from_edges(g.edges().tolist(), groups=groups)
        corpus = generate_corpus(g, METAPATH, WalkConfig(walks_per_node=20, walk_length=7), mp)
        assert len(corpus) == 20 * 8
        assert sum(violations(g, w, mp) for w in corpus.walks) == 0


class TestCorpus:
    def test_count(self):
        g = graph_from_edges([(i, (i + 1) % 10) for i in range(10)])
        assert len(generate_corpus(g, NODE2VEC, WalkConfig(walks_per_node=10, walk_length=5))) == 100

    def test_deterministic(self, tmp_path):
        g = two_cliques(5)
        cfg = WalkConfig(walks_per_node=3, walk_length=10, p=0.5, q=2, seed=9)
        a, b = generate_corpus(g, NODE2VEC, cfg), generate_corpus(g, NODE2VEC, cfg)
        a.save(tmp_path / "a")
        b.save(tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
        assert generate_corpus(g, NODE2VEC, WalkConfig(3, 10, seed=10)).walks != a.walks

    def test_coverage(self):
        g = graph_from_edges([(0, 1), (1, 2), (2, 3), (3, 0), (4, 5)], groups=["DISO"] * 7)
        counts = generate_corpus(g, NODE2VEC, WalkConfig(10, 20)).vocabulary_counts
        assert np.all(counts[:6] > 0) and counts[6] == 10

    def test_save_load(self, tmp_path):
        g = two_cliques(4)
        c = generate_corpus(g, NODE2VEC, WalkConfig(2, 6))
        c.save(tmp_path / "c.walks")
        back = WalkCorpus.load(tmp_path / "c.walks")
        assert back.walks == c.walks and back.num_nodes == g.num_nodes and back.meta["engine"] == NODE2VEC

    def test_workers(self):
        g = two_cliques(6)
        c = generate_corpus(g, NODE2VEC, WalkConfig(4, 8, workers=2))
        assert len(c) == 4 * 12
        assert sorted(w[0] for w in c.walks) == sorted(list(range(12)) * 4)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            WalkConfig(p=0).validate()
        with pytest.raises(ValueError):
            generate_corpus(two_cliques(3), "deepwalk", WalkConfig())
