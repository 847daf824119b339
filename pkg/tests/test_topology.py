import itertools
from math import comb

import pytest
from hypothesis import given, strategies as st

from combcache.topology import (
    TopologyError, _transpose, build_combination_network, build_general_network, parse_topology,
)

from conftest import SYMMETRIC_RELAYS, LOPSIDED_RELAYS


def test_h4r2_labels(h4r2_network):
    net = h4r2_network
    assert net.num_users == 6
    assert net.users_of_relay[1] == (1, 2, 3)
    assert net.users_of_relay[2] == (1, 4, 5)
    assert net.relays_of_user[1] == (1, 2)


def test_single_user_two_relays():
    net = build_combination_network(2, 2)
    assert net.num_users == 1
    assert net.users_of_relay == {1: (1,), 2: (1,)}


def test_h6_r3_incidence_by_enumeration():
    net = build_combination_network(6, 3)
    assert net.num_users == 20
    subsets = list(itertools.combinations(range(1, 7), 3))
    for h in range(1, 7):
        assert sum(h in s for s in subsets) == 10
        assert len(net.users_of_relay[h]) == 10


@pytest.mark.parametrize("H,r", [(3, 4), (0, 1), (4, 0)])
def test_bad_combination_parameters(H, r):
    with pytest.raises(TopologyError):
        build_combination_network(H, r)


@given(st.integers(2, 7), st.data())
def test_combination_invariants(H, data):
    r = data.draw(st.integers(1, H))
    net = build_combination_network(H, r)
    K = comb(H, r)
    assert net.num_users == K
    assert sum(len(us) for us in net.users_of_relay.values()) == r * K
    assert len(set(net.relays_of_user.values())) == K
    assert _transpose(net.relays_of_user) == dict(net.users_of_relay)
    assert build_combination_network(H, r) == net


def test_symmetric_degrees(symmetric_network):
    net = symmetric_network
    assert net.relays_of_user[1] == (1, 2, 3)
    assert all(len(hs) == 3 for hs in net.relays_of_user.values())


def test_lopsided_degrees(lopsided_network):
    net = lopsided_network
    assert len(net.relays_of_user[2]) == 2
    assert len(net.relays_of_user[3]) == 4


def test_shared_link_degenerate():
    net = build_general_network({1: range(1, 6)})
    assert all(net.relays_of_user[k] == (1,) for k in range(1, 6))


def test_general_errors():
    with pytest.raises(TopologyError):
        build_general_network({1: [1, 1, 2]})
    with pytest.raises(TopologyError):
        build_general_network({1: [1, 3]})  # user 2 orphaned
    with pytest.raises(TopologyError):
        build_general_network({})


@given(st.dictionaries(st.integers(1, 5), st.frozensets(st.integers(1, 6), min_size=1), min_size=1))
def test_transpose_round_trip(raw):
    relays = {h: sorted(us) for h, us in raw.items()}
    try:
        net = build_general_network(relays)
    except TopologyError:
        return
    assert _transpose(net.relays_of_user) == {h: tuple(us) for h, us in relays.items()}


def test_parse_round_trip():
    net = build_general_network(LOPSIDED_RELAYS)
    assert parse_topology(net.describe()) == net
    assert parse_topology("combination H=4 r=2  # fig 1") == build_combination_network(4, 2)
    text = "general\nrelay 1: 1, 2, 3\nrelay 2: 1 3 4\nrelay 3: 1 4 5\nrelay 4: 2 4 5\nrelay 5: 2 3 5\n"
    assert parse_topology(text) == build_general_network(SYMMETRIC_RELAYS)
    with pytest.raises(TopologyError):
        parse_topology("ring H=4")
