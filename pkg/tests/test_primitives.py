import functools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncc.primitives import (EMPTY, MAX, MIN, SUM, XOR, aggregate_and_broadcast, run_aggregation,
                            sync_barrier)
from ncc.primitives.aggregate import AggregateFunction, ConfigurationError, lexmin
from ncc.primitives.multicast import run_multi_aggregation, run_multicast, setup_multicast_trees
from ncc.sim import Simulation

FUNCS = {"sum": (SUM, lambda a, b: a + b), "min": (MIN, min), "max": (MAX, max), "xor": (XOR, lambda a, b: a ^ b)}


def fold(op, xs):
    return functools.reduce(op, xs)


def random_groups(rng, n, G, max_size):
    """Disjoint-target groups: (member, group, target) rows plus the member map."""
    member, group, target = [], [], []
    for gid in range(G):
        size = int(rng.integers(1, max_size + 1))
        mem = rng.choice(n, size=min(size, n), replace=False)
        t = int(rng.integers(0, n))
        member += mem.tolist()
        group += [gid * 7 + 3] * len(mem)
        target += [t] * len(mem)
    return np.array(member), np.array(group), np.array(target)


# -- aggregate-and-broadcast ---------------------------------------------------------
def test_ab_examples():
    sim = Simulation(50, seed=1)
    assert aggregate_and_broadcast(sim, np.arange(50)[:, None], MAX) == (49,)
    assert aggregate_and_broadcast(sim, np.ones((50, 1), np.int64), SUM) == (50,)
    assert aggregate_and_broadcast(sim, np.ones((50, 1), np.int64), SUM,
                                   participants=np.zeros(50, bool)) is EMPTY
    assert sim.round <= 6 * math.ceil(math.log2(50)) * 3


@given(st.integers(1, 200), st.integers(0, 2 ** 31))
def test_ab_random_subset(n, seed):
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, 1000, n)
    part = rng.random(n) < 0.5
    sim = Simulation(n, seed=seed)
    out = aggregate_and_broadcast(sim, vals[:, None], SUM, participants=part)
    if part.any():
        assert out == (int(vals[part].sum()),)
    else:
        assert out is EMPTY
    assert sim.round <= 3 * (math.floor(math.log2(n)) + 1)


def test_sync_barrier():
    sim = Simulation(64, seed=0)
    t = sync_barrier(sim)
    assert 0 < t <= 3 * 6
    ready = np.full(64, sim.round)
    ready[17] = 50
    t2 = sync_barrier(sim, ready)
    assert t2 >= 50 and t2 <= 50 + 3 * 6
    one = Simulation(1)
    assert sync_barrier(one) == 0


# -- aggregation ------------------------------------------------------------------------
def test_aggregation_pair_sum():
    sim = Simulation(16, seed=2)
    r = run_aggregation(sim, [3, 9], [42, 42], [[3], [4]], [5, 5], SUM)
    assert r.by_target() == {5: {42: (7,)}}


def test_aggregation_singletons_identity():
    n = 32
    sim = Simulation(n, seed=3)
    vals = np.arange(n) * 11 + 1
    r = run_aggregation(sim, np.arange(n), np.arange(n) + 100, vals[:, None], (np.arange(n) * 5) % n, XOR)
    d = r.as_dict()
    assert all(d[u + 100] == (int(vals[u]),) for u in range(n))


def test_aggregation_rejects_inconsistent_targets():
    sim = Simulation(8)
    with pytest.raises(ConfigurationError):
        run_aggregation(sim, [1, 2], [0, 0], [[1], [1]], [3, 4], SUM)
    with pytest.raises(ConfigurationError):
        run_aggregation(sim, [1, 1], [0, 0], [[1], [1]], [3, 3], SUM)


def test_non_associative_function_rejected():
    sim = Simulation(16, debug=True)
    sub = AggregateFunction("sub", combine=lambda x, y: (x[0] - y[0],))
    with pytest.raises(ConfigurationError):
        run_aggregation(sim, np.arange(10), np.zeros(10, np.int64), np.arange(10)[:, None] * 3 + 1,
                        np.zeros(10, np.int64), sub)


def test_aggregation_xor_50_groups():
    rng = np.random.default_rng(9)
    n = 64
    mem, grp, tgt = random_groups(rng, n, 50, 20)
    vals = rng.integers(0, 2 ** 40, len(mem))
    sim = Simulation(n, seed=9)
    r = run_aggregation(sim, mem, grp, vals[:, None], tgt, XOR)
    got = r.as_dict()
    for g in np.unique(grp):
        assert got[int(g)] == (int(np.bitwise_xor.reduce(vals[grp == g])),)
    assert r.stats["self_delays"] == 0
    assert sim.trace.drop_total == 0


@given(st.integers(2, 128), st.sampled_from(sorted(FUNCS)), st.integers(0, 2 ** 31))
def test_aggregation_matches_fold(n, name, seed):
    rng = np.random.default_rng(seed)
    f, op = FUNCS[name]
    mem, grp, tgt = random_groups(rng, n, int(rng.integers(1, 30)), 12)
    vals = rng.integers(-1000, 1000, len(mem))
    sim = Simulation(n, seed=seed)
    r = run_aggregation(sim, mem, grp, vals[:, None], tgt, f)
    got = r.as_dict()
    for g in np.unique(grp):
        assert got[int(g)] == (fold(op, vals[grp == g].tolist()),)
    assert r.stats["self_delays"] == 0   # rank discipline


# -- multicast trees --------------------------------------------------------------------
def test_one_big_group():
    for seed in range(5):
        n = 128
        sim = Simulation(n, seed=seed)
        t = setup_multicast_trees(sim, np.arange(n), np.zeros(n, np.int64), {0: 0})
        assert sorted(t.members_of(0).tolist()) == list(range(n))
        assert t.congestion <= 4 * (1 + math.log2(n))
        # one leaf entry per member
        assert sorted(t.leaf_member.tolist()) == list(range(n))
        assert (t.leaf_col >= 0).all() and (t.leaf_col < t.P).all()


def test_empty_group_is_bare_root():
    sim = Simulation(16, seed=1)
    t = setup_multicast_trees(sim, [], [], {5: 3})
    assert t.num_groups == 1 and t.root_tn[0] == -1 and len(t.members_of(5)) == 0
    sent = sim.trace.sent.sum()
    r = run_multicast(sim, t, {5: 99})
    assert not r.delivered.any() and len(r.member) == 0
    # only the wave traffic, no stray payload messages from the source
    assert all(p["L"] == 0 for p in sim.trace.primitives if p["primitive"] == "multicast")
    assert sim.trace.sent.sum() >= sent


def test_singleton_groups():
    n = 64
    sim = Simulation(n, seed=4)
    t = setup_multicast_trees(sim, np.arange(n), np.arange(n), {u: u for u in range(n)})
    assert t.num_groups == n and t.L == n
    for g in range(0, n, 7):
        edges = t.tree_edges(g)
        assert len(edges) == t.d            # a single root-leaf path
        assert t.members_of(g).tolist() == [g]


def test_two_sources_rejected():
    with pytest.raises(ConfigurationError):
        setup_multicast_trees(Simulation(8), [1, 2], [0, 1], {0: 5, 1: 5})


def test_multicast_examples():
    n = 64
    rng = np.random.default_rng(5)
    sim = Simulation(n, seed=5)
    members = {g: rng.choice(n, size=int(rng.integers(1, 20)), replace=False) for g in range(10)}
    mem = np.concatenate(list(members.values()))
    grp = np.concatenate([[g] * len(m) for g, m in members.items()])
    t = setup_multicast_trees(sim, mem, grp, {g: g + 20 for g in range(10)})
    r = run_multicast(sim, t, {g: 1000 + g for g in range(10)})
    assert r.delivered.all()
    for u in range(n):
        expect = {g: (1000 + g,) for g, m in members.items() if u in m}
        assert r.received_by(u) == expect
    with pytest.raises(ConfigurationError):
        run_multicast(sim, t, {77: 1})


# -- multi-aggregation -----------------------------------------------------------------
def test_multi_aggregation_path():
    sim = Simulation(3, seed=0)
    # groups are neighborhoods of the path 0-1-2, source = center node
    t = setup_multicast_trees(sim, [1, 0, 2, 1], [0, 1, 1, 2], {0: 0, 1: 1, 2: 2})
    r = run_multi_aggregation(sim, t, {0: 0, 1: 1, 2: 2}, MIN)
    assert [r.value(u) for u in range(3)] == [(1,), (0,), (1,)]


def test_multi_aggregation_counts_memberships():
    rng = np.random.default_rng(2)
    n = 40
    mem, grp = [], []
    for g in range(n):
        m = rng.choice(n, size=int(rng.integers(0, 8)), replace=False)
        mem += m.tolist()
        grp += [g] * len(m)
    sim = Simulation(n, seed=2)
    t = setup_multicast_trees(sim, mem, grp, {g: g for g in range(n)})
    r = run_multi_aggregation(sim, t, {g: 1 for g in range(n)}, SUM)
    cnt = np.bincount(mem, minlength=n)
    for u in range(n):
        assert r.value(u) == ((int(cnt[u]),) if cnt[u] else EMPTY)


@given(st.integers(2, 100), st.sampled_from(sorted(FUNCS)), st.integers(0, 2 ** 31))
def test_multi_aggregation_matches_fold(n, name, seed):
    rng = np.random.default_rng(seed)
    f, op = FUNCS[name]
    G = int(rng.integers(1, n + 1))
    srcs = rng.choice(n, size=G, replace=False)
    mem, grp = [], []
    for g in range(G):
        m = rng.choice(n, size=min(n, int(rng.integers(0, 10))), replace=False)
        mem += m.tolist()
        grp += [g] * len(m)
    pay = rng.integers(-500, 500, G)
    sim = Simulation(n, seed=seed)
    t = setup_multicast_trees(sim, mem, grp, {g: int(srcs[g]) for g in range(G)})
    r = run_multi_aggregation(sim, t, {g: int(pay[g]) for g in range(G)}, f)
    mem, grp = np.array(mem, dtype=np.int64), np.array(grp, dtype=np.int64)
    for u in range(n):
        gs = grp[mem == u]
        assert r.value(u) == ((fold(op, pay[gs].tolist()),) if len(gs) else EMPTY)


def test_annotated_multi_aggregation_picks_uniformly():
    # node 0 belongs to 4 groups; the annotated minimum should pick each about equally
    picks = []
    for seed in range(200):
        sim = Simulation(16, seed=seed)
        t = setup_multicast_trees(sim, [0, 0, 0, 0], [1, 2, 3, 4], {g: g for g in range(1, 5)})
        r = run_multi_aggregation(sim, t, {g: g for g in range(1, 5)}, lexmin(2), annotate=True)
        picks.append(r.values[0, 1])
    counts = np.bincount(picks, minlength=5)[1:]
    assert counts.min() >= 25
