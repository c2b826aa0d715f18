from hypothesis import given, strategies as st

from ncc.butterfly import BfCoordinate as C, bf_neighbors, build_map, route_next_hop


def test_map_n7():
    bf = build_map(7)
    assert bf.d == 2 and bf.columns == 4
    assert [bf.emulator(c) for c in range(4)] == [0, 1, 2, 3]
    assert [bf.attachment(v) for v in (4, 5, 6)] == [C(0, 0), C(0, 1), C(0, 2)]
    assert bf.attached(3) is None


def test_map_trivial_sizes():
    one = build_map(1)
    assert one.d == 0 and one.size == 1
    eight = build_map(8)
    assert eight.d == 3 and not eight.has_attached


def test_neighbors():
    assert set(bf_neighbors(C(0, 0), 2)) == {C(1, 0), C(1, 1)}
    assert set(bf_neighbors(C(1, 0), 2)) == {C(0, 0), C(0, 1), C(2, 0), C(2, 2)}
    assert set(bf_neighbors(C(2, 3), 2)) == {C(1, 3), C(1, 1)}


def test_routing_examples():
    bf = build_map(4)
    assert bf.path(0, 3) == [C(0, 0), C(1, 1), C(2, 3)]
    assert bf.path(2, 2) == [C(0, 2), C(1, 2), C(2, 2)]
    assert route_next_hop(C(0, 1), 0, 1) == C(1, 0)


@given(st.integers(1, 300))
def test_structure(n):
    bf = build_map(n)
    d, P = bf.d, bf.columns
    assert P <= n < 2 * P
    nodes = [C(l, c) for l in range(d + 1) for c in range(P)]
    assert len(nodes) == bf.size == (d + 1) * P
    for c in nodes:
        nb = bf_neighbors(c, d)
        assert len(nb) <= 4
        if c.level in (0, d):
            assert len(nb) <= (2 if d else 0)
        for x in nb:
            assert c in bf_neighbors(x, d)
    # every level-0 node is fed by at most 2 NCC nodes
    feeds = [bf.attachment(v).column for v in range(n)]
    assert max(feeds.count(c) for c in range(P)) <= 2


@given(st.integers(0, 6), st.data())
def test_unique_paths(d, data):
    n = 1 << d
    bf = build_map(n)
    a = data.draw(st.integers(0, n - 1))
    b = data.draw(st.integers(0, n - 1))
    p = bf.path(a, b)
    assert p == bf.path(a, b)
    assert p[0] == C(0, a) and p[-1] == C(d, b) and len(p) == d + 1
    for x, y in zip(p, p[1:]):
        assert y in bf_neighbors(x, d)
