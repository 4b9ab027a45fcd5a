import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nbsl.network import (
    MAX_RGG_ATTEMPTS,
    MixingMatrix,
    RadiusTooSmallError,
    Topology,
    complete_graph,
    consensus_gap,
    is_connected,
    lazy_metropolis,
    random_geometric_graph,
    read_edge_list,
    ring_graph,
    spectral_norm,
    uniform_mixing,
    write_edge_list,
    write_matrix_csv,
)
from nbsl.signals import TOPOLOGY, substream


def rgg(m, radius, seed):
    return random_geometric_graph(m, radius, np.random.default_rng(seed))


class TestTopology:
    def test_rejects_self_loops_and_disconnected(self):
        with pytest.raises(ValueError, match="self-loop"):
            Topology(2, frozenset({(0, 0), (0, 1)}))
        with pytest.raises(ValueError, match="not connected"):
            Topology(3, frozenset({(0, 1)}))
        with pytest.raises(ValueError):
            Topology(0, frozenset())
        with pytest.raises(ValueError, match="out of range"):
            Topology(2, frozenset({(0, 2)}))

    def test_edges_are_normalised(self):
        t = Topology(3, frozenset({(1, 0), (2, 1), (0, 1)}))
        assert t.edges == {(0, 1), (1, 2)}
        assert t.degrees().tolist() == [1, 2, 1]

    def test_builders(self):
        assert len(complete_graph(5).edges) == 10
        assert len(ring_graph(6).edges) == 6
        assert ring_graph(2).edges == {(0, 1)}
        assert is_connected(1, [])


class TestRandomGeometric:
    def test_single_node(self):
        t = rgg(1, 0.1, 0)
        assert t.m == 1 and not t.edges

    def test_full_radius_is_complete(self):
        assert rgg(7, math.sqrt(2), 3).edges == complete_graph(7).edges

    @pytest.mark.parametrize("seed", range(5))
    def test_connected_by_bfs(self, seed):
        t = random_geometric_graph(20, 0.4, substream(seed, TOPOLOGY))
        g = nx.Graph()
        g.add_nodes_from(range(20))
        g.add_edges_from(t.edges)
        assert len(nx.node_connected_component(g, 0)) == 20

    def test_edges_match_distances(self):
        t = rgg(15, 0.35, 11)
        d = np.linalg.norm(t.positions[:, None] - t.positions[None], axis=-1)
        expect = {(i, j) for i in range(15) for j in range(i + 1, 15) if d[i, j] <= 0.35}
        assert t.edges == expect

    def test_deterministic(self):
        assert rgg(20, 0.4, 5).edges == rgg(20, 0.4, 5).edges

    def test_radius_too_small(self):
        with pytest.raises(RadiusTooSmallError) as info:
            rgg(30, 1e-4, 0)
        assert info.value.attempts == MAX_RGG_ATTEMPTS
        assert str(MAX_RGG_ATTEMPTS) in str(info.value)

    @pytest.mark.parametrize("radius", [0.0, -1.0, 1.5])
    def test_radius_domain(self, radius):
        with pytest.raises(ValueError):
            rgg(5, radius, 0)


class TestLazyMetropolis:
    def test_pair(self):
        A = lazy_metropolis(complete_graph(2)).weights
        assert np.allclose(A, [[0.5, 0.5], [0.5, 0.5]])

    def test_complete_five(self):
        A = lazy_metropolis(complete_graph(5)).weights
        off = A[~np.eye(5, dtype=bool)]
        assert np.allclose(off, 1 / 8) and np.allclose(np.diag(A), 0.5)

    def test_against_formula(self):
        t = rgg(12, 0.45, 2)
        d = t.degrees()
        A = lazy_metropolis(t).weights
        for i in range(12):
            for j in range(12):
                if i != j:
                    expect = 1 / (2 * max(d[i], d[j])) if (min(i, j), max(i, j)) in t.edges else 0.0
                    assert A[i, j] == pytest.approx(expect, abs=0)

    @pytest.mark.parametrize("seed", range(10))
    def test_invariants(self, seed):
        t = rgg(20, 0.4, seed)
        M = lazy_metropolis(t)
        A = M.weights
        assert np.abs(A.sum(0) - 1).max() <= 1e-12 and np.abs(A.sum(1) - 1).max() <= 1e-12
        assert np.array_equal(A, A.T) and np.all(np.diag(A) > 0) and M.respects(t)
        assert M.eta == A[A > 0].min()
        assert M.lambda_bound == pytest.approx(1 - M.eta / (4 * 400))

    def test_products_stay_doubly_stochastic(self):
        Ms = [lazy_metropolis(rgg(10, 0.5, s)).weights for s in range(20)]
        P = np.eye(10)
        for A in Ms:
            P = P @ A
        assert np.abs(P.sum(0) - 1).max() <= 1e-10 and np.abs(P.sum(1) - 1).max() <= 1e-10

    def test_respects_detects_non_edges(self):
        assert not uniform_mixing(4).respects(ring_graph(4))


class TestMixingMatrixValidation:
    @pytest.mark.parametrize(
        "A",
        [
            [[0.5, 0.6], [0.5, 0.4]],
            [[0.7, 0.3], [0.4, 0.6]],
            [[0.0, 1.0], [1.0, 0.0]],
            [[1.2, -0.2], [-0.2, 1.2]],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        ],
    )
    def test_rejects(self, A):
        with pytest.raises(ValueError):
            MixingMatrix(np.array(A))

    def test_uniform(self):
        M = uniform_mixing(4)
        assert np.allclose(M.weights, 0.25) and M.eta == 0.25


class TestConsensusGap:
    def test_identity_pair(self):
        assert consensus_gap(lazy_metropolis(complete_graph(2)), 0) == pytest.approx(1.0, abs=1e-12)

    def test_complete_second_eigenvalue(self):
        M = lazy_metropolis(complete_graph(6))
        ev = np.sort(np.abs(np.linalg.eigvalsh(M.weights)))[::-1]
        assert consensus_gap(M, 1) == pytest.approx(ev[1], rel=1e-9)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_svd(self, seed):
        M = lazy_metropolis(rgg(15, 0.45, seed))
        for t in (1, 5, 40):
            ref = np.linalg.norm(np.linalg.matrix_power(M.weights, t) - 1 / 15, 2)
            assert consensus_gap(M, t) == pytest.approx(ref, rel=1e-6)

    @pytest.mark.parametrize("seed", range(8))
    def test_non_increasing_and_bounded(self, seed):
        M = lazy_metropolis(rgg(20, 0.4, seed))
        gaps = [consensus_gap(M, t) for t in (0, 1, 2, 10, 50, 100, 1000)]
        assert all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(gaps, gaps[1:]))
        for t in (1, 10, 100, 1000):
            assert consensus_gap(M, t) <= M.gap_bound(t)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            consensus_gap(uniform_mixing(3), -1)

    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_spectral_norm_oracle(self, n, seed):
        M = np.random.default_rng(seed).standard_normal((n, n))
        assert spectral_norm(M) == pytest.approx(np.linalg.norm(M, 2), rel=1e-5)

    def test_spectral_norm_zero(self):
        assert spectral_norm(np.zeros((3, 3))) == 0.0


class TestEdgeListIO:
    def test_round_trip(self, tmp_path):
        t = rgg(12, 0.5, 9)
        p = tmp_path / "g.txt"
        write_edge_list(t, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "12" and len(lines) == 1 + len(t.edges)
        assert read_edge_list(p).edges == t.edges

    def test_errors_name_the_line(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("3\n0 1\n1 x\n")
        with pytest.raises(ValueError, match=r"bad.txt:3"):
            read_edge_list(p)
        p.write_text("three\n")
        with pytest.raises(ValueError, match=r"bad.txt:1"):
            read_edge_list(p)
        p.write_text("")
        with pytest.raises(ValueError, match="empty"):
            read_edge_list(p)
        p.write_text("3\n0 1\n")
        with pytest.raises(ValueError, match="not connected"):
            read_edge_list(p)

    def test_matrix_csv(self, tmp_path):
        M = lazy_metropolis(rgg(8, 0.6, 1))
        p = tmp_path / "A.csv"
        write_matrix_csv(M, p)
        assert np.array_equal(np.loadtxt(p, delimiter=","), M.weights)
