from dataclasses import replace
from fractions import Fraction

import pytest

from combcache.delivery import MulticastMessage, decentralized_deliver, hybrid_deliver, rebalance, srds_deliver
from combcache.placement import Segment, cman_place, dman_place, hybrid_place
from combcache.topology import build_combination_network
from combcache.verifier import (
    VerificationError, build_atom_space, reports_to_json, required_denominator, simulate_concrete,
    verify_decodability,
)

F = Fraction


def all_pass(reports):
    return all(r.passed for r in reports)


@pytest.fixture
def h4r2(h4r2_network):
    pl = cman_place(6, 6, 2)
    return h4r2_network, pl, srds_deliver(h4r2_network, pl, range(1, 7))


def test_h4r2_decodes(h4r2):
    net, pl, plan = h4r2
    reports = verify_decodability(net, pl, plan, range(1, 7))
    assert all_pass(reports)
    assert {r.decoded_fraction for r in reports} == {F(1)}
    assert all(simulate_concrete(net, pl, plan, range(1, 7), 30, seed=s).values() for s in range(3))


def test_every_single_deletion_is_caught(h4r2):
    net, pl, plan = h4r2
    for idx, m in enumerate(plan.messages):
        cut = replace(plan, messages=plan.messages[:idx] + plan.messages[idx + 1:])
        reports = verify_decodability(net, pl, cut, range(1, 7))
        failed = {r.user for r in reports if not r.passed}
        assert failed and failed <= set(m.users)
        for r in reports:
            if not r.passed:
                f, lo, hi = r.missing_atom
                assert f == r.user and lo < hi
                assert r.decoded_fraction < 1


def test_corrupted_bit_hits_only_receivers(h4r2):
    net, pl, plan = h4r2
    idx = next(i for i, m in enumerate(plan.messages) if m.users == (1, 2))
    out = simulate_concrete(net, pl, plan, range(1, 7), 30, corrupt=(idx, 0))
    assert {k for k, ok in out.items() if not ok} == {1, 2}


def test_plan_on_wrong_link_rejected(h4r2):
    net, pl, plan = h4r2
    m = plan.messages[0]
    bad = replace(plan, messages=[replace(m, relay=4)] + plan.messages[1:])
    with pytest.raises(VerificationError):
        verify_decodability(net, pl, bad, range(1, 7))


def test_out_of_range_segment_rejected(h4r2):
    net, pl, plan = h4r2
    ghost = MulticastMessage(1, (1,), F(1, 15), {1: [Segment(9, F(0), F(1, 15))]})
    with pytest.raises(VerificationError):
        verify_decodability(net, pl, replace(plan, messages=plan.messages + [ghost]), range(1, 7))


def test_bad_block_size(h4r2):
    net, pl, plan = h4r2
    assert required_denominator(pl, plan) == 30
    with pytest.raises(VerificationError):
        simulate_concrete(net, pl, plan, range(1, 7), 45)


def test_atom_rows_are_equal_length(lopsided_network):
    pl = cman_place(5, 5, 2)
    plan = rebalance(srds_deliver(lopsided_network, pl, range(1, 6)), lopsided_network)
    space = build_atom_space(pl, plan)
    for idx in range(len(plan.messages)):
        for row in space.message_rows(idx):
            assert len({space.atom_length(a) for a in row}) == 1


def test_lopsided_needs_finer_blocks(lopsided_network):
    pl = cman_place(5, 5, 2)
    plan = srds_deliver(lopsided_network, pl, range(1, 6))
    assert all_pass(verify_decodability(lopsided_network, pl, plan, range(1, 6)))
    assert required_denominator(pl, plan) == 120
    assert all(simulate_concrete(lopsided_network, pl, plan, range(1, 6), 120).values())
    after = rebalance(plan, lopsided_network)
    assert all_pass(verify_decodability(lopsided_network, pl, after, range(1, 6)))
    B = required_denominator(pl, after)
    assert all(simulate_concrete(lopsided_network, pl, after, range(1, 6), B).values())


def test_repeated_demand(h4r2_network):
    pl = cman_place(6, 6, 2)
    demand = (1, 1, 2, 2, 3, 3)
    plan = srds_deliver(h4r2_network, pl, demand)
    assert all_pass(verify_decodability(h4r2_network, pl, plan, demand))
    assert all(simulate_concrete(h4r2_network, pl, plan, demand, 30).values())


def test_borrowing_plan_decodes():
    net = build_combination_network(5, 3)
    pl = cman_place(10, 10, 3)
    plan = srds_deliver(net, pl, range(1, 11))
    assert plan.ledger
    assert all_pass(verify_decodability(net, pl, plan, range(1, 11)))
    B = required_denominator(pl, plan)
    assert all(simulate_concrete(net, pl, plan, range(1, 11), B).values())


def test_dman_run_decodes():
    net = build_combination_network(5, 2)
    pl = dman_place(10, 10, 3, seed=4, B_concrete=200)
    plan = decentralized_deliver(net, pl, range(1, 11))
    assert all_pass(verify_decodability(net, pl, plan, range(1, 11)))
    B = required_denominator(pl, plan)
    assert all(simulate_concrete(net, pl, plan, range(1, 11), B, seed=1).values())


def test_hybrid_decodes(h4r2_network):
    pl = hybrid_place(h4r2_network, 6, 1, 1, 2)
    plan, _ = hybrid_deliver(h4r2_network, pl, range(1, 7))
    assert all_pass(verify_decodability(h4r2_network, pl, plan, range(1, 7)))
    B = required_denominator(pl, plan)
    assert all(simulate_concrete(h4r2_network, pl, plan, range(1, 7), B).values())
    starved = replace(plan, coded=plan.coded[1:])
    victim = plan.coded[0].user
    reports = verify_decodability(h4r2_network, pl, starved, range(1, 7))
    assert [r.user for r in reports if not r.passed] == [victim]
    assert not simulate_concrete(h4r2_network, pl, starved, range(1, 7), B)[victim]


def test_report_json(h4r2):
    net, pl, plan = h4r2
    text = reports_to_json(verify_decodability(net, pl, replace(plan, messages=[]), range(1, 7)))
    assert '"pass": false' in text and "missing_atom" in text
