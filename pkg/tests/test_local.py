import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncc.graphs import InputGraph, gen_graph
from ncc.local import (bfs_tree, compute_coloring, compute_matching, compute_mis, palette_size,
                       setup_broadcast_trees)
from ncc.oracles import UNREACHABLE, oracle_bfs, verify
from ncc.orientation import compute_orientation
from ncc.sim import Simulation


def prepared(g, seed=0):
    sim = Simulation(g.n, seed=seed)
    o = compute_orientation(sim, g)
    return sim, o, setup_broadcast_trees(sim, g, o)


def test_star_injections():
    g = gen_graph("star", 33)
    sim, o, trees = prepared(g)
    assert trees.stats["max_injected"] <= 2
    assert trees.stats["injected"][0] <= 2 * o.outdeg[0]
    assert trees.members_of(0).tolist() == list(range(1, 33))
    assert trees.members_of(5).tolist() == [0]


def test_isolated_node_bare_root():
    g = InputGraph(4, [[0, 1], [1, 2]])
    sim, o, trees = prepared(g)
    assert len(trees.members_of(3)) == 0
    assert len(trees.tree_edges(3)) == 0


@settings(max_examples=15)
@given(st.integers(2, 80), st.integers(0, 10 ** 6))
def test_injection_bound(n, seed):
    g = gen_graph("bounded-arboricity", n, seed=seed, a=1 + seed % 3)
    sim, o, trees = prepared(g, seed)
    assert (trees.stats["injected"] <= 2 * o.outdeg).all()
    for u in range(n):
        assert trees.members_of(u).tolist() == g.neighbors(u).tolist()


# -- BFS --------------------------------------------------------------------------
def test_bfs_path():
    g = gen_graph("path", 9)
    sim, o, trees = prepared(g)
    r = bfs_tree(sim, g, trees, 0)
    assert r.delta.tolist() == list(range(9))
    assert r.pi.tolist() == [-1] + list(range(8))
    assert r.phases == 9


def test_bfs_star_center():
    g = gen_graph("star", 7)
    sim, o, trees = prepared(g)
    r = bfs_tree(sim, g, trees, 0)
    assert r.delta.tolist() == [0] + [1] * 6 and r.pi.tolist() == [-1] + [0] * 6


def test_bfs_disconnected_export():
    g = InputGraph(4, [[0, 1], [2, 3]])
    sim, o, trees = prepared(g)
    r = bfs_tree(sim, g, trees, 1)
    assert r.export_lines() == ["0 1 1", "1 0 -1", f"2 {UNREACHABLE} -1", f"3 {UNREACHABLE} -1"]
    assert verify("bfs", g, r).passed


def test_bfs_bad_source():
    g = gen_graph("path", 3)
    sim, o, trees = prepared(g)
    with pytest.raises(ValueError):
        bfs_tree(sim, g, trees, 3)


@settings(max_examples=15)
@given(st.integers(2, 120), st.integers(0, 10 ** 6))
def test_bfs_vs_oracle(n, seed):
    g = gen_graph("gnm", n, seed=seed, m=min(n + seed % n, n * (n - 1) // 2))
    s = seed % n
    sim, o, trees = prepared(g, seed)
    r = bfs_tree(sim, g, trees, s)
    assert r.delta.tolist() == oracle_bfs(g, s).tolist()
    assert verify("bfs", g, r).passed
    assert sim.trace.drop_total == 0


# -- MIS ---------------------------------------------------------------------------
def test_mis_edgeless():
    g = InputGraph(5, np.zeros((0, 2)))
    sim, o, trees = prepared(g)
    assert compute_mis(sim, g, trees).members.tolist() == [0, 1, 2, 3, 4]


def test_mis_star_either_side():
    g = gen_graph("star", 9)
    seen = set()
    for seed in range(12):
        sim, o, trees = prepared(g, seed)
        r = compute_mis(sim, g, trees)
        assert verify("mis", g, r).passed
        seen.add(tuple(r.members.tolist()))
    assert seen <= {(0,), tuple(range(1, 9))}


# -- matching ------------------------------------------------------------------------
def test_matching_single_edge():
    g = InputGraph(2, [[0, 1]])
    sim, o, trees = prepared(g)
    r = compute_matching(sim, g, trees)
    assert [tuple(e) for e in r.edges] == [(0, 1)]


def test_matching_triangle():
    g = InputGraph(3, [[0, 1], [1, 2], [0, 2]])
    for seed in range(5):
        sim, o, trees = prepared(g, seed)
        r = compute_matching(sim, g, trees)
        assert len(r.edges) == 1 and verify("matching", g, r).passed


# -- coloring ------------------------------------------------------------------------
def test_palette_size():
    assert palette_size(2, 0.5) == 6
    assert palette_size(0, 1.0) == 4
    assert palette_size(3, 1.0) == 12


def test_coloring_edgeless():
    g = InputGraph(6, np.zeros((0, 2)))
    sim = Simulation(6, seed=0)
    r = compute_coloring(sim, g, compute_orientation(sim, g))
    assert verify("coloring", g, r).passed
    assert r.repetitions and max(r.repetitions) == 1


def test_coloring_triangle():
    g = InputGraph(3, [[0, 1], [1, 2], [0, 2]])
    sim = Simulation(3, seed=1)
    r = compute_coloring(sim, g, compute_orientation(sim, g), epsilon=0.5)
    assert r.a_hat == 2 and r.palette == 6
    assert len(set(r.colors.tolist())) == 3 and r.colors.max() < 6


def test_coloring_rejects_bad_epsilon():
    g = gen_graph("path", 3)
    sim = Simulation(3, seed=1)
    with pytest.raises(ValueError):
        compute_coloring(sim, g, compute_orientation(sim, g), epsilon=0)


# -- all checkers over random bounded-arboricity graphs ---------------------------------
@settings(max_examples=12)
@given(st.integers(2, 200), st.integers(1, 4), st.integers(0, 10 ** 6))
def test_local_pipeline_valid(n, a, seed):
    g = gen_graph("bounded-arboricity", n, seed=seed, a=a)
    sim, o, trees = prepared(g, seed)
    for kind, res in (("mis", compute_mis(sim, g, trees)), ("matching", compute_matching(sim, g, trees))):
        assert verify(kind, g, res).passed
    col = compute_coloring(sim, g, o)
    assert verify("coloring", g, col).passed
    assert col.colors.max() < 2 * (1 + 1.0) * max(col.a_hat, 1)
    assert col.a_hat <= 4 * a
    assert sim.trace.drop_total == 0
