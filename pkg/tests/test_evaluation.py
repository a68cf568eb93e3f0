import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compnet.errors import DataError, DegenerateInput, DimensionMismatch, InvalidParameters
from compnet.evaluation import (
    STATISTICS,
    TopologyHistogram,
    assortativity,
    betweenness_centrality,
    betweenness_distribution,
    component_sizes,
    degree_distribution,
    geodesic_distribution,
    hamming,
    kl_divergence,
    metrics_report,
    precision_recall,
    shortest_path_lengths,
    tie_blocks,
    top_k_network,
    topology_kl,
)
from compnet.topology import Adjacency, gen_band


def adj(p, edges):
    return Adjacency(p, frozenset(edges))


def star(p):
    return adj(p, {(0, k) for k in range(1, p)})


def path_graph(p):
    return adj(p, {(k, k + 1) for k in range(p - 1)})


def complete(p):
    return adj(p, {(i, j) for i in range(p) for j in range(i + 1, p)})


def to_nx(a):
    g = nx.Graph()
    g.add_nodes_from(range(a.p))
    g.add_edges_from(a.edges)
    return g


@st.composite
def graphs(draw, max_p=12):
    p = draw(st.integers(3, max_p))
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    return adj(p, draw(st.sets(st.sampled_from(pairs))))


class TestPrecisionRecall:
    def test_true_edge_first(self):
        pr = precision_recall([(0, 1), (0, 2)], adj(3, {(0, 1)}))
        assert pr.points[0] == (1.0, 1.0)
        assert pr.aupr == 1.0

    def test_true_edge_second(self):
        pr = precision_recall([(0, 2), (0, 1)], adj(3, {(0, 1)}))
        assert pr.points == ((0.0, 0.0), (1.0, 0.5))
        assert pr.aupr == pytest.approx(0.25)

    def test_tied_block_spreads_hits(self):
        pr = precision_recall([(0, 1, 1.0), (0, 2, 1.0)], adj(3, {(0, 1)}))
        assert pr.points == ((0.5, 0.5), (1.0, 0.5))
        assert pr.aupr == pytest.approx(0.5)

    def test_tie_order_irrelevant(self):
        truth = adj(4, {(0, 1), (2, 3)})
        a = [(0, 1, 2.0), (0, 2, 1.0), (0, 3, 1.0), (2, 3, 1.0), (1, 2, 0.0)]
        b = [a[0], a[3], a[1], a[2], a[4]]
        assert precision_recall(a, truth) == precision_recall(b, truth)

    def test_tie_blocks(self):
        assert tie_blocks([3, 3, 2, 1, 1, 1]) == [(0, 2), (2, 3), (3, 6)]

    def test_perfect_ranking(self):
        truth = gen_band(8, 7, 0)
        ranked = truth.sorted_edges() + sorted(complete(8).edges - truth.edges)
        assert precision_recall(ranked, truth).aupr == pytest.approx(1.0)

    def test_duplicates_rejected(self):
        with pytest.raises(DataError):
            precision_recall([(0, 1), (1, 0)], adj(3, {(0, 1)}))

    def test_empty_truth(self):
        with pytest.raises(DegenerateInput):
            precision_recall([(0, 1)], adj(3, set()))

    @given(graphs(), st.randoms(use_true_random=False))
    def test_range_and_recall_monotone(self, truth, rnd):
        if truth.e == 0:
            return
        ranked = sorted(complete(truth.p).edges)
        rnd.shuffle(ranked)
        pr = precision_recall(ranked, truth)
        assert 0.0 <= pr.aupr <= 1.0
        assert np.all(np.diff(pr.recall) >= 0)
        assert pr.recall[-1] == pytest.approx(1.0)

    @given(graphs(), st.randoms(use_true_random=False), st.data())
    def test_promoting_true_edge_never_hurts(self, truth, rnd, data):
        if truth.e == 0:
            return
        ranked = sorted(complete(truth.p).edges)
        rnd.shuffle(ranked)
        k = data.draw(st.integers(0, len(ranked) - 2))
        if not (ranked[k] not in truth.edges and ranked[k + 1] in truth.edges):
            return
        swapped = ranked[:k] + [ranked[k + 1], ranked[k]] + ranked[k + 2:]
        assert precision_recall(swapped, truth).aupr >= precision_recall(ranked, truth).aupr - 1e-12


class TestHamming:
    def test_complete_vs_empty(self):
        assert hamming(complete(205), adj(205, set())) == 20910

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            hamming(adj(3, set()), adj(4, set()))

    @given(graphs(max_p=7), graphs(max_p=7), graphs(max_p=7))
    def test_metric(self, a, b, c):
        if not a.p == b.p == c.p:
            return
        assert hamming(a, a) == 0
        assert hamming(a, b) == hamming(b, a)
        assert hamming(a, c) <= hamming(a, b) + hamming(b, c)


class TestDegree:
    def test_band(self):
        h = degree_distribution(gen_band(5, 4, 0))
        assert list(h.values) == [1, 2, 2, 2, 1]
        assert h.masses == (0.0, 0.4, 0.6)

    def test_star(self):
        h = degree_distribution(star(4))
        assert list(h.values) == [3, 1, 1, 1]
        assert h.mean() == pytest.approx(1.5)

    def test_empty(self):
        h = degree_distribution(adj(4, set()))
        assert h.masses == (1.0,)

    @given(graphs())
    def test_mean_is_twice_density(self, a):
        assert degree_distribution(a).mean() == pytest.approx(2 * a.e / a.p)


class TestBetweenness:
    def test_star(self):
        assert betweenness_centrality(star(5)).tolist() == [1.0, 0, 0, 0, 0]

    def test_path(self):
        # middle of a 5-path lies on 4 of the 6 pairs avoiding it
        assert betweenness_centrality(path_graph(5)) == pytest.approx([0, 0.5, 4 / 6, 0.5, 0])

    def test_complete(self):
        assert not betweenness_centrality(complete(5)).any()

    @given(graphs())
    def test_matches_networkx(self, a):
        ref = nx.betweenness_centrality(to_nx(a), normalized=True)
        assert betweenness_centrality(a) == pytest.approx([ref[k] for k in range(a.p)], abs=1e-12)

    def test_histogram_puts_one_in_last_cell(self):
        h = betweenness_distribution(star(5))
        assert h.masses[-1] == pytest.approx(0.2)
        assert h.masses[0] == pytest.approx(0.8)
        assert len(h.bins) == len(h.masses) + 1


class TestGeodesic:
    def test_path(self):
        h = geodesic_distribution(path_graph(4))
        assert h.masses == pytest.approx((0.0, 0.5, 2 / 6, 1 / 6))
        assert h.infinite_mass == 0.0

    def test_k4(self):
        h = geodesic_distribution(complete(4))
        assert h.masses == (0.0, 1.0)

    def test_two_isolated_edges(self):
        h = geodesic_distribution(adj(4, {(0, 1), (2, 3)}))
        assert h.masses == pytest.approx((0.0, 2 / 6))
        assert h.infinite_mass == pytest.approx(4 / 6)

    @given(graphs())
    def test_matches_networkx(self, a):
        d = shortest_path_lengths(a)
        ref = dict(nx.all_pairs_shortest_path_length(to_nx(a)))
        for i in range(a.p):
            for j in range(a.p):
                assert d[i, j] == ref[i].get(j, -1)


class TestComponents:
    def test_counts_components(self):
        h = component_sizes(adj(6, {(0, 1), (1, 2), (3, 4)}))
        # sizes 3, 2, 1 -> one component of each
        assert h.masses == pytest.approx((0.0, 1 / 3, 1 / 3, 1 / 3))

    @given(graphs())
    def test_sizes_cover_nodes(self, a):
        h = component_sizes(a)
        n_comp = nx.number_connected_components(to_nx(a))
        assert sum(h.values) == a.p and len(h.values) == n_comp


class TestKL:
    def test_identical(self):
        h = degree_distribution(star(5))
        assert kl_divergence(h, h) == 0.0

    def test_asymmetric(self):
        a, b = degree_distribution(star(5)), degree_distribution(path_graph(5))
        assert kl_divergence(a, b) != pytest.approx(kl_divergence(b, a))

    def test_disjoint_support_finite(self):
        a = degree_distribution(adj(4, set()))
        b = degree_distribution(complete(4))
        eps = 1e-6
        # only the two occupied bins contribute and they share one log ratio
        expected = math.log((1 + eps) / eps) / (1 + 4 * eps)
        assert kl_divergence(a, b) == pytest.approx(expected, rel=1e-12)

    def test_reference_formula(self):
        t, q = np.array([0.5, 0.5, 0.0]), np.array([0.25, 0.25, 0.5])
        ht = TopologyHistogram("degree", (0, 1, 2), tuple(t))
        hq = TopologyHistogram("degree", (0, 1, 2), tuple(q))
        tt, qq = (t + 1e-6) / (1 + 3e-6), (q + 1e-6) / (1 + 3e-6)
        assert kl_divergence(hq, ht) == pytest.approx(float(np.sum(tt * np.log(tt / qq))), rel=1e-12)

    def test_statistic_mismatch(self):
        with pytest.raises(DimensionMismatch):
            kl_divergence(degree_distribution(star(4)), component_sizes(star(4)))

    def test_geodesic_infinite_mass_counts(self):
        a, b = geodesic_distribution(adj(4, {(0, 1), (2, 3)})), geodesic_distribution(complete(4))
        assert kl_divergence(a, b) > 1.0

    def test_topology_kl_keys(self):
        assert set(topology_kl(star(6), path_graph(6))) == set(STATISTICS)

    def test_bad_masses(self):
        with pytest.raises(InvalidParameters):
            TopologyHistogram("degree", (0, 1), (0.5, 0.4))


class TestAssortativity:
    def test_bipartite(self):
        a = adj(4, {(0, 2), (0, 3), (1, 2), (1, 3)})
        labels = ["x", "x", "y", "y"]
        assert assortativity(a, labels) == pytest.approx(-1.0)

    def test_same_label_edges(self):
        assert assortativity(adj(4, {(0, 1), (2, 3)}), ["x", "x", "y", "y"]) == pytest.approx(1.0)

    def test_single_label_is_nan(self):
        assert math.isnan(assortativity(star(4), ["x"] * 4))

    @given(graphs(), st.data())
    def test_matches_networkx(self, a, data):
        if a.e == 0:
            return
        labels = data.draw(st.lists(st.sampled_from("abc"), min_size=a.p, max_size=a.p))
        g = to_nx(a)
        nx.set_node_attributes(g, dict(enumerate(labels)), "c")
        with np.errstate(all="ignore"):
            ref = nx.attribute_assortativity_coefficient(g, "c")
        ours = assortativity(a, labels)
        if math.isnan(ours):
            assert math.isnan(ref)
        else:
            assert ours == pytest.approx(ref, abs=1e-10)

    def test_no_edges(self):
        with pytest.raises(DegenerateInput):
            assortativity(adj(3, set()), "abc")


class TestReport:
    def test_top_k(self):
        ranked = [(0, 1), (1, 2), (0, 2)]
        assert top_k_network(ranked, 2, 3).edges == {(0, 1), (1, 2)}
        with pytest.raises(InvalidParameters):
            top_k_network(ranked, 4, 3)

    def test_keys_and_defaults(self):
        truth = path_graph(5)
        ranked = sorted(complete(5).edges)
        rep = metrics_report(ranked, truth, labels="aabbc")
        assert set(rep) == {"aupr", "pr_points", "hamming", "predicted_edges", "histograms", "kl", "assortativity"}
        assert rep["predicted_edges"] == truth.e
        assert set(rep["kl"]) == set(STATISTICS)
        assert rep["hamming"] == hamming(top_k_network(ranked, 4, 5), truth)
