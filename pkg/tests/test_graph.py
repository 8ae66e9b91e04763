import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cggm.graph import (
    UndirectedGraph, graph_key, later_degree, make_graph, pair_index, pair_list,
    read_edge_csv, toggle_edge, write_edge_csv,
)


def test_make_graph_cases():
    assert make_graph(3, []).edge_count == 0
    g = make_graph(3, [(1, 2), (2, 1)])
    assert g.edge_count == 1 and g.has_edge(0, 1) and g.has_edge(1, 0)
    full = make_graph(8, list(itertools.combinations(range(1, 9), 2)))
    assert full.edge_count == 28
    assert full == UndirectedGraph.complete(8)


@pytest.mark.parametrize("edges", [[(1, 1)], [(0, 2)], [(1, 4)]])
def test_make_graph_rejects_bad_pairs(edges):
    with pytest.raises(ValueError):
        make_graph(3, edges)


def test_toggle_is_involution():
    g = make_graph(3, [])
    g1 = toggle_edge(g, (1, 2))
    assert g1.edge_count == 1 and g1.has_edge(0, 1)
    assert toggle_edge(g1, (1, 2)) == g
    assert toggle_edge(UndirectedGraph.complete(8), (3, 7)).edge_count == 27
    # the original is untouched
    assert g.edge_count == 0


def test_later_degree():
    full = UndirectedGraph.complete(4)
    assert later_degree(full, 1) == 3
    assert later_degree(full, 4) == 0
    path = make_graph(3, [(1, 2), (2, 3)])
    assert later_degree(path, 2) == 1
    assert list(path.later_degrees()) == [1, 1, 0]


def test_keys():
    assert graph_key(make_graph(3, [])) == bytes(1)
    a = make_graph(5, [(1, 2), (3, 5)])
    b = make_graph(5, [(3, 5), (2, 1)])
    assert graph_key(a) == graph_key(b) and hash(a) == hash(b)
    assert graph_key(a) != graph_key(toggle_edge(a, (4, 5)))


def test_pair_indexing():
    p = 6
    pairs = pair_list(p)
    assert len(pairs) == 15
    for k, (i, j) in enumerate(pairs):
        assert pair_index(p, i, j) == k == pair_index(p, j, i)
    with pytest.raises(ValueError):
        pair_index(p, 2, 2)


@given(st.integers(2, 9).flatmap(
    lambda p: st.tuples(st.just(p), st.lists(st.booleans(), min_size=p * (p - 1) // 2,
                                             max_size=p * (p - 1) // 2))))
def test_adjacency_roundtrip(args):
    p, bits = args
    g = UndirectedGraph(p, np.array(bits, dtype=bool))
    a = g.adjacency()
    assert np.array_equal(a, a.T) and not a.diagonal().any()
    assert UndirectedGraph.from_adjacency(a) == g
    assert a.sum() == 2 * g.edge_count
    assert sum(len(g.neighbors(v)) for v in range(p)) == 2 * g.edge_count


def test_edge_csv_roundtrip(tmp_path):
    g = make_graph(5, [(1, 2), (2, 5), (3, 4)])
    path = tmp_path / "edges.csv"
    write_edge_csv(g, path)
    assert path.read_text().splitlines()[0] == "v1,v2"
    assert read_edge_csv(path, 5) == g
