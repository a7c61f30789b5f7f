import numpy as np
import pytest

from netguard import graph as gm

from fixtures import BENCH8_A, directed_cycle


def cycle_graph(n):
    return gm.DiGraph(n, frozenset((i, i % n + 1) for i in range(1, n + 1)))


def complete_graph(n):
    return gm.DiGraph(n, frozenset((a, b) for a in range(1, n + 1)
                                   for b in range(1, n + 1) if a != b))


def random_digraph(rng, n):
    edges = {(i, i % n + 1) for i in range(1, n + 1)}
    for _ in range(int(rng.integers(0, 2 * n))):
        a, b = rng.integers(1, n + 1, 2)
        if a != b:
            edges.add((int(a), int(b)))
    return gm.DiGraph(n, frozenset(edges))


def test_from_matrix_identity_has_no_edges():
    assert gm.from_matrix(np.eye(4)).edges == frozenset()


def test_from_matrix_full_positive_is_complete():
    G = gm.from_matrix(np.full((3, 3), 1 / 3))
    assert G.edges == complete_graph(3).edges


def test_from_matrix_benchmark_sparsity():
    G = gm.from_matrix(BENCH8_A)
    for i in range(8):
        for j in range(8):
            if i != j:
                assert ((j + 1, i + 1) in G.edges) == (BENCH8_A[i, j] != 0)


def test_edge_direction_follows_matrix_support():
    A = np.array([[0.5, 0.5], [0.0, 1.0]])
    G = gm.from_matrix(A)
    assert G.edges == frozenset({(2, 1)})


def test_connectivity_complete():
    for n in (3, 4, 5):
        assert gm.vertex_connectivity(complete_graph(n)) == n - 1


def test_connectivity_directed_cycle_is_one():
    for n in (3, 4, 6):
        assert gm.vertex_connectivity(cycle_graph(n)) == 1


def test_connectivity_benchmark_is_three():
    assert gm.vertex_connectivity(gm.from_matrix(BENCH8_A)) == 3


def test_connectivity_disconnected_is_zero():
    G = gm.DiGraph(4, frozenset({(1, 2), (2, 1), (3, 4), (4, 3)}))
    assert gm.vertex_connectivity(G) == 0


@pytest.mark.parametrize("seed", range(25))
def test_connectivity_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    G = random_digraph(rng, int(rng.integers(3, 8)))
    assert gm.vertex_connectivity(G) == gm.vertex_connectivity_bruteforce(G)


def test_find_vertex_cut_cycle():
    cut = gm.find_vertex_cut(cycle_graph(4), 1)
    assert cut is not None and len(cut.cut) == 1
    removed = set(cut.cut)
    assert not gm.is_strongly_connected(cycle_graph(4), removed)


def test_find_vertex_cut_none_when_too_connected():
    assert gm.find_vertex_cut(complete_graph(4), 2) is None


def test_find_vertex_cut_benchmark():
    G = gm.from_matrix(BENCH8_A)
    cut = gm.find_vertex_cut(G, 3)
    assert cut is not None and len(cut.cut) == 3
    assert not gm.is_strongly_connected(G, set(cut.cut))
    # the sink side never hears from the source side directly
    for a in cut.source_side:
        for b in cut.sink_side:
            assert not G.has_edge(a, b)


@pytest.mark.parametrize("seed", range(8))
def test_cut_partition_property(seed):
    rng = np.random.default_rng(200 + seed)
    G = random_digraph(rng, 6)
    k = gm.vertex_connectivity(G)
    cut = gm.find_vertex_cut(G, k)
    assert cut is not None
    assert cut.sink_side and cut.source_side
    for a in cut.source_side:
        for b in cut.sink_side:
            assert not G.has_edge(a, b)


def test_disjoint_paths_overlapping_sets():
    G = cycle_graph(5)
    assert gm.disjoint_path_count(G, {1, 2, 3}, {1, 2, 3}) == 3


def test_disjoint_paths_cycle_single_pair():
    assert gm.disjoint_path_count(cycle_graph(5), {1}, {3}) == 1


def test_disjoint_paths_benchmark():
    G = gm.from_matrix(BENCH8_A)
    sinks = {1, 2, 4, 5}          # states observed by agent 1
    assert gm.disjoint_path_count(G, {3, 7}, sinks) >= 2


def test_structural_rank_diagonal():
    P = gm.StructurePattern(4, 4, frozenset((i, i) for i in range(4)))
    assert gm.structural_generic_rank(P) == 4


def test_structural_rank_single_column():
    P = gm.StructurePattern(4, 3, frozenset((i, 1) for i in range(4)))
    assert gm.structural_generic_rank(P) == 1


@pytest.mark.parametrize("seed", range(6))
def test_structural_rank_vs_realizations(seed):
    rng = np.random.default_rng(300 + seed)
    mask = rng.random((5, 5)) < 0.4
    P = gm.StructurePattern(5, 5,
                            frozenset((i, j) for i in range(5) for j in range(5)
                                      if mask[i, j]))
    generic = gm.structural_generic_rank(P)
    sampled = [np.linalg.matrix_rank(P.realization(rng)) for _ in range(10)]
    assert all(r <= generic for r in sampled)
    assert max(sampled, default=0) == generic


def test_generic_zero_dynamics_conditions():
    complete_pat = gm.StructurePattern.from_matrix(np.full((4, 4), 1.0))
    one_input = gm.StructurePattern(4, 1, frozenset({(0, 0)}))
    assert gm.generically_no_zero_dynamics(complete_pat, one_input)

    bench_pat = gm.StructurePattern.from_matrix(BENCH8_A)
    two_inputs = gm.StructurePattern(8, 2, frozenset({(2, 0), (6, 1)}))
    assert gm.generically_no_zero_dynamics(bench_pat, two_inputs)

    ring_pat = gm.StructurePattern.from_matrix(directed_cycle(5))
    ring_input = gm.StructurePattern(5, 1, frozenset({(0, 0)}))
    assert not gm.generically_no_zero_dynamics(ring_pat, ring_input)


def test_resilience_bounds():
    rb = gm.resilience_bounds(gm.from_matrix(BENCH8_A))
    assert (rb.connectivity, rb.max_generic_faulty, rb.max_generic_malicious) \
        == (3, 2, 1)
    rb = gm.resilience_bounds(complete_graph(4))
    assert (rb.max_generic_faulty, rb.max_generic_malicious) == (2, 1)
    rb = gm.resilience_bounds(cycle_graph(5))
    assert (rb.max_generic_faulty, rb.max_generic_malicious) == (0, 0)


def test_edge_list_roundtrip():
    G = gm.from_matrix(BENCH8_A)
    text = gm.write_edge_list(G)
    back = gm.read_edge_list(text)
    assert back.n == G.n and back.edges == G.edges


def test_edge_list_rejects_garbage():
    with pytest.raises(ValueError):
        gm.read_edge_list("3\n1 2 3")
    with pytest.raises(ValueError):
        gm.read_edge_list("")
