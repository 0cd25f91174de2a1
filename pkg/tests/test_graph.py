import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csflock.graph import (
    Digraph,
    GraphError,
    GraphLibrary,
    has_spanning_tree,
    library_from_dict,
    library_to_dict,
    load_library,
    save_library,
    union_graphs,
    validate_library,
)


def g(n, *edges):
    return Digraph.from_edges(n, edges, one_based=True)


def test_chain_has_spanning_tree():
    chain = g(3, (1, 2), (2, 3))
    assert has_spanning_tree(chain)
    assert chain.spanning_roots() == [0]


def test_edgeless_has_no_spanning_tree():
    assert not has_spanning_tree(g(2))


def test_two_cycle_plus_isolated_vertex():
    assert not has_spanning_tree(g(3, (1, 2), (2, 1)))


def test_single_vertex_is_spanning():
    assert has_spanning_tree(g(1))


def test_adjacency_convention():
    # edge (j, i) means i receives from j: chi[i, j] = 1
    chi = g(2, (1, 2)).adjacency()
    assert chi[1, 0] == 1 and chi[0, 1] == 0


def test_from_adjacency_round_trip(rng):
    chi = (rng.random((5, 5)) < 0.4).astype(float)
    assert np.array_equal(Digraph.from_adjacency(chi).adjacency(), chi)


def test_vertex_range_checked():
    with pytest.raises(GraphError):
        g(2, (1, 3))


def test_union_examples():
    assert union_graphs([g(3, (1, 2)), g(3, (2, 3))]) == g(3, (1, 2), (2, 3))
    h = g(3, (1, 2), (3, 3))
    assert union_graphs([h, h]) == h


def test_union_errors():
    with pytest.raises(GraphError):
        union_graphs([])
    with pytest.raises(GraphError):
        union_graphs([g(2), g(3)])


def _chain_library(probs=(0.5, 0.5)):
    return GraphLibrary((g(3, (1, 2)).with_self_loops(), g(3, (2, 3)).with_self_loops()), probs)


def test_valid_library_has_empty_report():
    lib = _chain_library()
    assert validate_library(lib) == []
    assert has_spanning_tree(lib.union())


def test_report_bad_probabilities():
    report = validate_library(_chain_library((0.6, 0.6)))
    assert any("probabilities do not sum to 1" in r for r in report)


def test_report_missing_self_loop():
    lib = GraphLibrary((g(3, (1, 1), (3, 3), (1, 2), (2, 3)),), (1.0,))
    report = validate_library(lib)
    assert any("missing self-loop" in r and "vertex 2" in r for r in report)


def test_report_union_not_spanning():
    lib = GraphLibrary((g(3, (1, 2)).with_self_loops(), g(3, (2, 1)).with_self_loops()), (0.5, 0.5))
    assert any("spanning tree" in r for r in validate_library(lib))


def test_library_json_round_trip(tmp_path):
    lib = _chain_library()
    path = tmp_path / "lib.json"
    save_library(lib, path)
    assert load_library(path) == lib
    assert library_from_dict(json.loads(path.read_text())) == lib


def test_library_add_self_loops_flag():
    doc = {"n": 2, "graphs": [[[1, 2]]], "probabilities": [1.0], "add_self_loops": True}
    lib = library_from_dict(doc)
    assert validate_library(lib) == []
    assert library_to_dict(lib)["graphs"][0] == [[1, 1], [1, 2], [2, 2]]


def _reachable_closure(chi):
    # transitive closure by repeated squaring, independent of the BFS
    n = len(chi)
    r = ((chi.T + np.eye(n)) > 0).astype(int)
    for _ in range(n):
        r = ((r @ r) > 0).astype(int)
    return r


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 7), st.data())
def test_spanning_tree_matches_closure(n, data):
    bits = data.draw(st.lists(st.booleans(), min_size=n * n, max_size=n * n))
    chi = np.array(bits, dtype=float).reshape(n, n)
    reach = _reachable_closure(chi)
    assert has_spanning_tree(Digraph.from_adjacency(chi)) == bool(reach.all(axis=1).any())
