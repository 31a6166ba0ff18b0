import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from d3gd import graph as G

import oracles


def cycle(n):
    return G.directed_ring(n)


class TestDirectedGraph:
    def test_self_loops_added(self):
        g = G.DirectedGraph.from_edges(3, [(0, 1)])
        assert all((i, i) in g.edges for i in range(3))

    def test_in_neighbors_transpose_of_edges(self, er10):
        for i, nb in enumerate(er10.in_neighbors):
            assert i in nb
            assert set(nb) == {j for (j, t) in er10.edges if t == i}
        sup = er10.support
        assert np.array_equal(sup.T, np.array([[(i, j) in er10.edges for j in range(10)] for i in range(10)]))

    def test_out_of_range_edge(self):
        with pytest.raises(G.GraphError):
            G.DirectedGraph.from_edges(2, [(0, 5)])


class TestConnectivity:
    def test_cycle_true(self):
        assert G.check_strong_connectivity(cycle(3)).strongly_connected

    def test_disconnected_false(self):
        c = G.check_strong_connectivity(G.DirectedGraph.from_edges(2, []))
        assert not c.strongly_connected
        assert c.reachable_from_root == frozenset({0})

    def test_one_way_path_false(self):
        assert not G.check_strong_connectivity(G.DirectedGraph.from_edges(3, [(0, 1), (1, 2)])).strongly_connected

    def test_er_seed0_connected(self):
        g = G.generate_er_digraph(20, 0.6, 0)
        assert G.check_strong_connectivity(g).strongly_connected


class TestWeights:
    def test_uniform_cycle(self):
        W = G.uniform_in_weights(cycle(3)).weights
        for row in W:
            assert sorted(row[row > 0]) == [0.5, 0.5]

    def test_uniform_complete(self):
        assert np.all(G.uniform_in_weights(G.complete_digraph(4)).weights == 0.25)

    def test_uniform_star_center(self):
        g = G.DirectedGraph.from_edges(4, [(1, 0), (2, 0), (3, 0), (0, 1), (0, 2), (0, 3)])
        assert np.allclose(G.uniform_in_weights(g).weights[0], 0.25)

    def test_uniform_rejects_disconnected(self):
        with pytest.raises(G.GraphError):
            G.uniform_in_weights(G.DirectedGraph.from_edges(2, []))

    def test_metropolis_two_node(self):
        g = G.DirectedGraph.from_edges(2, [(0, 1), (1, 0)])
        assert np.allclose(G.metropolis_weights(g).weights, 0.5)

    def test_metropolis_ring4(self):
        W = G.metropolis_weights(cycle(4)).weights
        for i in range(4):
            assert W[i, i] == 0.5 and W[i, (i - 1) % 4] == 0.5

    def test_metropolis_complete3(self):
        assert np.allclose(G.metropolis_weights(G.complete_digraph(3)).weights, 1 / 3)

    def test_metropolis_symmetric_graph_is_doubly_stochastic(self):
        edges = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (0, 3), (3, 0), (0, 2), (2, 0)]
        W = G.metropolis_weights(G.DirectedGraph.from_edges(4, edges)).weights
        assert np.allclose(W, W.T) and np.allclose(W.sum(0), 1)

    def test_invariants_on_er(self, er10, metro10):
        for M in (metro10, G.uniform_in_weights(er10)):
            W = M.weights
            assert np.max(np.abs(W.sum(1) - 1)) < 1e-12
            assert np.array_equal(W > 0, er10.support)
            assert W.min() >= 0 and W.max() <= 1

    def test_mixing_matrix_immutable(self, metro10):
        with pytest.raises(ValueError):
            metro10.weights[0, 0] = 1.0
        with pytest.raises(AttributeError):
            metro10.weights = None

    def test_mixing_matrix_validation(self):
        g = cycle(3)
        with pytest.raises(ValueError, match="outside"):
            G.MixingMatrix(g, np.full((3, 3), 1 / 3))
        with pytest.raises(ValueError, match="sum"):
            G.MixingMatrix(g, np.eye(3) * 0.5)


class TestPerron:
    def test_doubly_stochastic_uniform(self):
        pi, res, _ = G.perron_vector(G.metropolis_weights(G.complete_digraph(5)))
        assert np.max(np.abs(pi - 0.2)) < 1e-12

    def test_two_by_two(self):
        pi, _, _ = G.perron_vector(np.array([[0.5, 0.5], [0.25, 0.75]]))
        assert np.allclose(pi, [1 / 3, 2 / 3], atol=1e-11)

    def test_uniform_ring(self):
        pi, _, _ = G.perron_vector(G.uniform_in_weights(cycle(6)))
        assert np.allclose(pi, 1 / 6, atol=1e-11)

    def test_matches_eigensolver(self, rs):
        for _ in range(10):
            A, _ = oracles.random_irreducible(int(rs.integers(2, 30)), rs)
            pi, res, _ = G.perron_vector(A)
            assert res < 1e-12
            assert np.allclose(pi, oracles.perron_eig(A), atol=1e-9)
            assert pi.min() > 0 and abs(pi.sum() - 1) < 1e-12

    def test_nonconvergence_reports_residual(self):
        A = np.array([[0.999, 0.001], [0.001, 0.999]])
        with pytest.raises(G.ConvergenceError) as exc:
            G.perron_vector(A, start=[0.9, 0.1], max_iter=5)
        assert exc.value.residual > 0

    def test_default_max_iter(self):
        assert G.default_max_iter(10) == int(1000 * math.log(10)) + 1000


class TestSpectralGap:
    def test_rank_one(self):
        pi = np.array([0.2, 0.3, 0.5])
        assert G.spectral_gap(np.outer(np.ones(3), pi), pi) == 1.0

    def test_two_node_consensus(self):
        assert G.spectral_gap(np.full((2, 2), 0.5), np.array([0.5, 0.5])) == 1.0

    def test_two_by_two(self):
        rho = G.spectral_gap(np.array([[0.9, 0.1], [0.1, 0.9]]), np.array([0.5, 0.5]))
        assert abs(rho - 0.2) < 1e-3

    def test_single_node(self):
        assert G.spectral_gap(np.ones((1, 1)), np.ones(1)) == 1.0

    def test_matches_eigenvalues_on_random(self, rs):
        for _ in range(10):
            A, _ = oracles.random_irreducible(int(rs.integers(3, 15)), rs, 0.3)
            pi = oracles.perron_eig(A)
            r = oracles.spectral_radius_deflated(A, pi)
            rho = G.spectral_gap(A, pi)
            assert abs((1 - rho) - r) < 0.02

    def test_power_bound_with_slack(self, rs):
        for _ in range(5):
            A, _ = oracles.random_irreducible(8, rs, 0.3)
            pi = oracles.perron_eig(A)
            rho = G.spectral_gap(A, pi)
            B = A - np.outer(np.ones(8), pi)
            norms = [np.linalg.norm(np.linalg.matrix_power(B, k), 2) for k in range(1, 80)]
            c = max(nk / (1 - rho + 0.02) ** k for k, nk in enumerate(norms, 1))
            assert all(nk <= c * (1 - rho + 0.02) ** k + 1e-15 for k, nk in enumerate(norms, 1))

    def test_powers_converge_monotonically(self, rs):
        for _ in range(10):
            A, _ = oracles.random_irreducible(6, rs, 0.4)
            pi = oracles.perron_eig(A)
            target = np.outer(np.ones(6), pi)
            P = np.linalg.matrix_power(A, 20)
            errs = []
            for _ in range(50):
                errs.append(np.linalg.norm(P - target))
                P = P @ A
            errs = np.array(errs)
            live = errs > 1e-13
            assert np.all(np.diff(errs[live]) < 0)

    def test_report(self, metro10):
        rep = G.spectral_report(metro10)
        assert 0 < rep.spectral_gap <= 1 and rep.residual < 1e-12 and rep.gap_method == "norm-growth"


class TestER:
    def test_p_one_complete(self):
        g = G.generate_er_digraph(5, 1.0, 0)
        assert g.num_edges == 25

    def test_n2_p1(self):
        assert G.generate_er_digraph(2, 1.0, 9).num_edges == 4

    def test_edge_count_binomial(self):
        g = G.generate_er_digraph(20, 0.6, 42)
        mean, sd = 0.6 * 380, math.sqrt(380 * 0.6 * 0.4)
        assert abs(g.num_edges - 20 - mean) <= 3 * sd

    def test_deterministic(self):
        assert G.generate_er_digraph(12, 0.3, 5).edges == G.generate_er_digraph(12, 0.3, 5).edges

    def test_retry_budget(self):
        with pytest.raises(G.GraphError, match="n=30"):
            G.generate_er_digraph(30, 0.01, 0, max_retries=3)

    def test_bad_args(self):
        with pytest.raises(G.GraphError):
            G.generate_er_digraph(1, 0.5, 0)
        with pytest.raises(G.GraphError):
            G.generate_er_digraph(4, 0.0, 0)


class TestFiles:
    def test_edgelist_roundtrip(self, tmp_path, er10):
        p = tmp_path / "g.txt"
        G.write_edgelist(er10, p)
        assert G.read_edgelist(p, 10).edges == er10.edges

    def test_edgelist_comments(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("# ring\n0 1\n1 2  # tail\n\n2 0\n")
        g = G.read_edgelist(p)
        assert g.n == 3 and G.check_strong_connectivity(g).strongly_connected

    def test_edgelist_bad_line(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("0 1 2\n")
        with pytest.raises(G.GraphError):
            G.read_edgelist(p)

    def test_matrix_csv_exact(self, tmp_path, metro10):
        p = tmp_path / "A.csv"
        metro10.to_csv(p)
        assert np.array_equal(G.read_matrix_csv(p), metro10.weights)
        assert len(p.read_text().splitlines()) == 10

    def test_dot(self):
        W = np.array([[0.5, 0.5], [0.25, 0.75]])
        dot = G.matrix_to_dot(W, ["A", "B"])
        assert '"B" -> "A" [label="0.5000"]' in dot
        assert '"A" -> "B" [label="0.2500"]' in dot


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.floats(0.2, 1.0), st.integers(0, 10_000))
def test_er_weights_always_valid(n, p, seed):
    g = G.generate_er_digraph(n, p, seed)
    for M in (G.metropolis_weights(g), G.uniform_in_weights(g)):
        assert np.max(np.abs(M.weights.sum(1) - 1)) < 1e-12
        assert np.array_equal(M.weights > 0, g.support)
