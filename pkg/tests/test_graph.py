import numpy as np
import pytest

from kbp.graph import FactorGraph, chain_graph, grid_graph, random_tree


def test_rejects_self_loop():
    with pytest.raises(ValueError):
        FactorGraph(2, [(0, 0, "a")])


def test_rejects_missing_node_and_duplicates():
    with pytest.raises(ValueError):
        FactorGraph(2, [(0, 2, "a")])
    with pytest.raises(ValueError):
        FactorGraph(2, [(0, 1, "a"), (1, 0, "a")])
    with pytest.raises(ValueError):
        FactorGraph(2, [(0, 1, "a")], {5: (np.zeros(1), "obs")})


def test_degrees_count_evidence():
    g = chain_graph(3, observations=np.zeros(3))
    assert [g.degree(v) for v in range(3)] == [2, 3, 2]
    assert g.max_degree == 3
    assert g.template_degrees() == {"pair": 2}


def test_grid_structure():
    g = grid_graph(3, 4)
    assert g.n_nodes == 12
    assert len(g.edges) == 3 * 3 + 2 * 4
    assert sorted(g.neighbors(5)) == [1, 4, 6, 9]
    assert g.max_degree == 4
    assert len(g.directed_edges()) == 2 * len(g.edges)


def test_template_orientation():
    g = FactorGraph(3, [(0, 1, "a"), (2, 1, "b")])
    assert g.template_of(0, 1) == ("a", False)
    assert g.template_of(1, 0) == ("a", True)
    assert g.template_of(1, 2) == ("b", True)
    with pytest.raises(KeyError):
        g.edge_between(0, 2)


def test_check_templates():
    g = chain_graph(2, observations=[[1.0], [2.0]])
    g.check_templates({"pair": 1}, {"obs": 1})
    with pytest.raises(KeyError):
        g.check_templates({}, {"obs": 1})
    with pytest.raises(KeyError):
        g.check_templates({"pair": 1}, {})


@pytest.mark.parametrize("n", [1, 2, 7, 20])
def test_random_tree_is_tree(n):
    edges = random_tree(n, np.random.default_rng(n))
    assert len(edges) == n - 1
    # connected: union-find over edges
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        assert ra != rb
        parent[ra] = rb
    assert len({find(v) for v in range(n)}) == 1
