from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from combcache.placement import (
    CachePlacement, PlacementError, Segment, cman_place, dman_place, hybrid_place,
)


def assert_partition(placement: CachePlacement, lo=Fraction(0)):
    for i in range(1, placement.N + 1):
        segs = sorted(sf.segment for sf in placement.subfiles_of(i))
        assert segs[0].lo == lo and segs[-1].hi == 1
        for a, b in zip(segs, segs[1:]):
            assert a.hi == b.lo


def test_cman_h4r2_counts():
    pl = cman_place(6, 6, 2)
    assert len(pl.subfiles_of(1)) == 15
    assert {sf.segment.length for sf in pl.subfiles} == {Fraction(1, 15)}
    assert sum(1 for s in pl.user_cache[1] if s.file_id == 1) == 5
    assert_partition(pl)


def test_cman_extremes():
    empty = cman_place(6, 6, 0)
    assert all(not segs for segs in empty.user_cache.values())
    assert len(empty.subfiles_of(3)) == 1
    full = cman_place(6, 6, 6)
    assert all(full.cache_usage(k) == 6 for k in range(1, 7))


@given(st.integers(1, 7), st.data())
def test_cman_budget(K, data):
    t = data.draw(st.integers(0, K))
    N = data.draw(st.integers(K, K + 3))
    pl = cman_place(K, N, t)
    for k in range(1, K + 1):
        expected = Fraction(N * comb(K - 1, t - 1), comb(K, t)) if t else 0
        assert pl.cache_usage(k) == expected == Fraction(N * t, K)
    assert_partition(pl)


def test_cman_errors():
    with pytest.raises(PlacementError):
        cman_place(6, 6, 7)
    with pytest.raises(PlacementError):
        cman_place(6, 5, 2)


def test_dman_extremes():
    none = dman_place(4, 4, 0, seed=1, B_concrete=50)
    assert {sf.cache_set for sf in none.subfiles} == {()}
    full = dman_place(4, 4, 4, seed=1, B_concrete=50)
    assert {sf.cache_set for sf in full.subfiles} == {(1, 2, 3, 4)}
    with pytest.raises(PlacementError):
        dman_place(4, 4, 5, seed=1, B_concrete=50)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4))
def test_dman_determinism_and_partition(seed, M):
    a = dman_place(5, 5, M, seed=seed, B_concrete=120)
    b = dman_place(5, 5, M, seed=seed, B_concrete=120)
    assert a.subfiles == b.subfiles
    assert_partition(a)
    per_user = (M * 120) // 5
    for k in range(1, 6):
        for i in range(1, 6):
            cached = sum(s.length for s in a.user_cache[k] if s.file_id == i)
            assert cached * 120 == per_user


def test_dman_subfile_law_small():
    # K=15, N=15, M=5 at B=10^6: fraction of each file cached by exactly W
    pl = dman_place(15, 15, 5, seed=2024, B_concrete=10**6)
    q = Fraction(1, 3)
    for size in (0, 1, 2):
        expected = float(q**size * (1 - q) ** (15 - size))
        got = np.mean([float(sf.segment.length) for sf in pl.subfiles if len(sf.cache_set) == size])
        assert abs(got / expected - 1) < 0.01


def test_hybrid_h4r2(h4r2_network):
    pl = hybrid_place(h4r2_network, 6, 1, 1, 2)
    assert pl.coded_length == Fraction(1, 3)
    assert 1 - pl.coded_length == Fraction(2, 3)
    assert pl.relay_units == Fraction(1, 6)
    assert pl.params["M2"] == Fraction(5, 3)
    assert_partition(pl, lo=Fraction(1, 3))


def test_hybrid_budget_slack(h4r2_network):
    pl = hybrid_place(h4r2_network, 6, 1, 1, 2, M2=2)
    assert pl.params["M2_slack"] == Fraction(1, 3)
    with pytest.raises(PlacementError):
        hybrid_place(h4r2_network, 6, 1, 1, 2, M2=Fraction(3, 2))


def test_hybrid_boundaries(h4r2_network):
    relay_only = hybrid_place(h4r2_network, 6, 3, 0, 0)
    assert relay_only.coded_length == 1 and relay_only.subfiles == []
    plain = hybrid_place(h4r2_network, 6, 0, 1, 2)
    ref = cman_place(6, 6, 2)
    assert plain.coded_length == 0
    assert plain.subfiles == ref.subfiles
    assert plain.user_cache == ref.user_cache


def test_hybrid_rejects_overfull(h4r2_network):
    with pytest.raises(PlacementError):
        hybrid_place(h4r2_network, 6, 0, 6, 6 + 1)


def test_segment_ops():
    s = Segment(1, Fraction(0), Fraction(1, 2))
    assert [p.length for p in s.split(3)] == [Fraction(1, 6)] * 3
    head, tail = s.cut(Fraction(1, 8))
    assert head.hi == tail.lo == Fraction(1, 8)
    assert s.cut(Fraction(1)) == (s, None)
    with pytest.raises(PlacementError):
        Segment(1, Fraction(1, 2), Fraction(1, 2))


def test_json_round_trip(h4r2_network):
    pl = cman_place(6, 6, 2)
    back = CachePlacement.from_json(pl.to_json(h4r2_network))
    assert back.subfiles == pl.subfiles
    assert back.user_cache == pl.user_cache
