import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncc.graphs import InputGraph, gen_graph
from ncc.mst import (Components, _rebuild, compute_mst, decode_key, edge_keys, edge_parity_sketch,
                     find_lightest_edge, repetitions)
from ncc.oracles import components, oracle_mst, verify
from ncc.sim import Simulation


def hashes(sim, k, tag="t"):
    return [sim.hash(f"{tag}-{j}") for j in range(k)]


def test_keys_roundtrip():
    g = gen_graph("gnm", 10, seed=1, m=20, weighted=True)
    for k, (u, v) in zip(edge_keys(g).tolist(), g.edges.tolist()):
        assert decode_key(k, 10)[:2] == (u, v)
    assert len(set(edge_keys(g).tolist())) == g.m


def test_sketch_empty_range():
    g = InputGraph(3, [[0, 1], [1, 2]], [5, 9])
    sim = Simulation(3, seed=0)
    h = sim.hash("x")
    assert edge_parity_sketch(g, 0, 10 ** 6, 10 ** 7, h) == (0, 0)


def test_sketch_inner_edges_cancel():
    g = gen_graph("gnm", 30, seed=3, m=80, weighted=True)
    comp = np.arange(30)      # C = V: no edge leaves
    sim = Simulation(30, seed=1)
    for h in hashes(sim, 50):
        up = down = 0
        for u in comp.tolist():
            a, b = edge_parity_sketch(g, u, 0, 10 ** 9, h)
            up ^= a
            down ^= b
        assert up == down


def run_find(g, leader, seed=0, reps=24):
    sim = Simulation(g.n, seed=seed)
    comp = Components(np.asarray(leader, dtype=np.int64))
    _rebuild(sim, comp, "t-trees")
    return find_lightest_edge(sim, g, comp, hashes(sim, reps)), sim


def test_find_single_node():
    g = InputGraph(3, [[0, 1], [0, 2]], [5, 9])
    best, _ = run_find(g, [0, 1, 2])
    assert decode_key(best[0], 3) == (0, 1, 5)
    assert decode_key(best[2], 3) == (0, 2, 9)


def test_find_whole_graph_none():
    g = gen_graph("gnm", 16, seed=2, m=30, weighted=True)
    best, _ = run_find(g, [0] * 16)
    assert best[0] == -1


@settings(max_examples=15)
@given(st.integers(0, 10 ** 6))
def test_find_matches_cut_scan(seed):
    g = gen_graph("gnm", 64, seed=seed, m=160, weighted=True)
    rng = np.random.default_rng(seed)
    # components from a partial Kruskal run
    parent = list(range(64))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x
    order = np.argsort(edge_keys(g))
    for k in order[: int(rng.integers(0, 50))].tolist():
        a, b = find(int(g.edges[k, 0])), find(int(g.edges[k, 1]))
        if a != b:
            parent[max(a, b)] = min(a, b)
    leader = np.array([find(x) for x in range(64)])
    best, sim = run_find(g, leader, seed=seed)
    keys = edge_keys(g)
    for l in np.unique(leader).tolist():
        inside = leader == l
        cut = inside[g.edges[:, 0]] != inside[g.edges[:, 1]]
        want = int(keys[cut].min()) if cut.any() else -1
        assert best[l] == want
    assert sim.trace.drop_total == 0


def test_triangle():
    g = InputGraph(3, [[0, 1], [1, 2], [0, 2]], [1, 2, 3])
    res = compute_mst(Simulation(3, seed=0), g)
    assert res.edges == [(0, 1), (1, 2)] and res.weight == 3
    assert res.export_lines(g) == ["0 1 1", "1 2 2"]


def test_path_takes_all_edges():
    g = gen_graph("path", 20, seed=4, weighted=True)
    res = compute_mst(Simulation(20, seed=1), g)
    assert res.edges == sorted(map(tuple, g.edges.tolist()))


def test_known_by_tails_endpoint():
    g = gen_graph("gnm", 40, seed=5, m=100, weighted=True)
    res = compute_mst(Simulation(40, seed=2), g)
    for (u, v), knower in res.known_by.items():
        assert knower in (u, v)


def test_unweighted_uses_id_order():
    g = gen_graph("gnm", 25, seed=6, m=60)
    res = compute_mst(Simulation(25, seed=0), g)
    assert verify("mst", g, res).passed and res.weight == 24


def test_disconnected_forest():
    g = InputGraph(7, [[0, 1], [1, 2], [0, 2], [3, 4], [5, 6]], [3, 1, 2, 7, 4])
    res = compute_mst(Simulation(7, seed=3), g)
    assert set(res.edges) == oracle_mst(g)[0]
    assert res.components == components(g) == 3


@settings(max_examples=12)
@given(st.integers(2, 90), st.floats(1.0, 3.0), st.integers(0, 10 ** 6))
def test_random_vs_kruskal(n, density, seed):
    m = min(int(density * n), n * (n - 1) // 2)
    g = gen_graph("gnm", n, seed=seed, m=m, weighted=True)
    sim = Simulation(n, seed=seed)
    res = compute_mst(sim, g)
    assert set(res.edges) == oracle_mst(g)[0]
    assert res.weight == oracle_mst(g)[1]
    assert sim.trace.drop_total == 0


def test_repetitions_range():
    assert repetitions(8) == 48 and repetitions(2 ** 40) == 62
