"""Topology-aware multicast delivery on relay networks.

The pipeline for one placement is

1. ``partition_subfiles``: every subfile ``F_{d_k,W}`` wanted by user ``k``
   is split evenly over the relays of ``k`` that reach the most users of
   ``W``; the piece for relay ``h`` goes to the bucket ``T[h, k, W & U_h]``.
2. ``borrow_bits``: for each relay and user set ``J`` (smallest ``J``
   first) short operands are lengthened with bits taken from buckets of the
   same user whose known-set strictly contains ``J - {k}``.
3. ``generate_messages``: one XOR message per ``(h, J)`` whose operands are
   the buckets ``T[h, k, J - {k}]``, ``k in J``.

``rebalance`` then shifts message prefixes from heavily loaded relays to
lighter relays that reach the same users.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import floor, lcm
from typing import Iterable, Optional, Sequence

from .placement import CachePlacement, Segment, SubfileIndex
from .topology import RelayNetwork

log = logging.getLogger(__name__)

UserSet = tuple[int, ...]


class DeliveryError(ValueError):
    pass


def validate_demand(demand: Sequence[int], K: int, N: int) -> tuple[int, ...]:
    demand = tuple(int(d) for d in demand)
    if len(demand) != K:
        raise DeliveryError(f"demand has {len(demand)} entries, expected K={K}")
    if any(not 1 <= d <= N for d in demand):
        raise DeliveryError(f"demand entries must lie in [1, {N}]")
    return demand


def worst_case_demand(K: int) -> tuple[int, ...]:
    return tuple(range(1, K + 1))


# ---------------------------------------------------------------- T-sets --

@dataclass
class TSet:
    """Bits user ``user`` must get through ``relay`` that users ``known`` cache.

    With ``segments=None`` only the length is tracked (lengths-only mode).
    """

    relay: int
    user: int
    known: UserSet
    segments: Optional[list[Segment]] = field(default_factory=list)
    length: Fraction = Fraction(0)

    def append(self, pieces) -> None:
        if self.segments is None:
            self.length += pieces
        else:
            self.segments.extend(pieces)
            self.length += sum((s.length for s in pieces), Fraction(0))

    def take_prefix(self, amount: Fraction):
        """Remove and return the first ``amount`` of the bucket."""
        if amount > self.length:
            raise DeliveryError("cannot take more bits than a bucket holds")
        self.length -= amount
        if self.segments is None:
            return amount
        taken: list[Segment] = []
        while amount > 0:
            seg = self.segments.pop(0)
            head, tail = seg.cut(amount)
            taken.append(head)
            amount -= head.length
            if tail is not None:
                self.segments.insert(0, tail)
        return taken


class TSetTable:
    """All buckets, indexed by ``(relay, user)`` and then by known-set."""

    def __init__(self, lengths_only: bool = False):
        self.lengths_only = lengths_only
        self._by_pair: dict[tuple[int, int], dict[UserSet, TSet]] = {}

    def get(self, h: int, k: int, known: UserSet) -> Optional[TSet]:
        return self._by_pair.get((h, k), {}).get(known)

    def setdefault(self, h: int, k: int, known: UserSet) -> TSet:
        bucket = self._by_pair.setdefault((h, k), {})
        ts = bucket.get(known)
        if ts is None:
            ts = TSet(h, k, known, None if self.lengths_only else [])
            bucket[known] = ts
        return ts

    def length(self, h: int, k: int, known: UserSet) -> Fraction:
        ts = self.get(h, k, known)
        return ts.length if ts is not None else Fraction(0)

    def __iter__(self):
        for bucket in self._by_pair.values():
            yield from bucket.values()

    def items(self):
        for ts in self:
            yield (ts.relay, ts.user, ts.known), ts

    def user_total(self, k: int) -> Fraction:
        return sum((ts.length for ts in self if ts.user == k), Fraction(0))

    def message_keys(self) -> list[tuple[int, UserSet]]:
        """``(h, J)`` pairs with a non-empty operand, ordered by ``(|J|, h, J)``."""
        keys = {
            (ts.relay, tuple(sorted(ts.known + (ts.user,))))
            for ts in self
            if ts.length > 0
        }
        return sorted(keys, key=lambda hj: (len(hj[1]), hj[0], hj[1]))


def max_reach_relays(network: RelayNetwork, k: int, W: Iterable[int]) -> list[int]:
    """Relays of ``k`` connected to the largest number of users in ``W``."""
    W = set(W)
    counts = {h: len(W.intersection(network.users_of_relay[h])) for h in network.relays_of_user[k]}
    best = max(counts.values())
    return [h for h in sorted(counts) if counts[h] == best]


def partition_subfiles(network: RelayNetwork, placement: CachePlacement, demand: Sequence[int],
                       subfiles: Optional[Iterable[SubfileIndex]] = None,
                       provenance: Optional[list] = None) -> TSetTable:
    """Fill the buckets ``T[h, k, J']`` from the subfiles wanted by each user.

    ``subfiles`` restricts the pass to a subset of the subfile table (one
    ``|W|`` group of a decentralized placement, the ``F^2`` part of a hybrid
    one).  Users are visited in ascending order, subfiles in ``W``-lexicographic
    order, and relays of a split in ascending order.
    """
    if placement.K != network.num_users:
        raise DeliveryError("placement and network disagree on K")
    demand = validate_demand(demand, placement.K, placement.N)
    pool = placement.subfiles if subfiles is None else list(subfiles)
    by_file: dict[int, list[SubfileIndex]] = {}
    for sf in pool:
        by_file.setdefault(sf.file_id, []).append(sf)
    for entries in by_file.values():
        entries.sort(key=lambda sf: (len(sf.cache_set), sf.cache_set, sf.segment.lo))
    user_sets = {h: frozenset(us) for h, us in network.users_of_relay.items()}

    table = TSetTable()
    for k in network.users:
        for sf in by_file.get(demand[k - 1], ()):
            W = sf.cache_set
            if k in W:
                continue
            S = max_reach_relays(network, k, W)
            for h, piece in zip(S, sf.segment.split(len(S))):
                known = tuple(u for u in W if u in user_sets[h])
                table.setdefault(h, k, known).append([piece])
                if provenance is not None:
                    provenance.append(("piece", k, W, h, piece))
    return table


# ------------------------------------------------------------- borrowing --

@dataclass
class BorrowRecord:
    relay: int
    user: int
    users: UserSet
    deficit: Fraction
    takes: list[tuple[UserSet, Fraction]]
    thresholds: list[int]
    residual: Fraction

    @property
    def borrowed(self) -> Fraction:
        return sum((amt for _, amt in self.takes), Fraction(0))


def _donor_amounts(lengths: list[Fraction], need: Fraction) -> tuple[list[Fraction], int]:
    """How much to take from donors sorted by decreasing length.

    Returns per-donor amounts and the threshold index ``a``: the first
    ``a - 1`` donors are cut down to a common level so that exactly ``need``
    bits are taken.  ``need`` must be smaller than ``sum(lengths)``.
    """
    n = len(lengths)
    a = n + 1
    head = lengths[0] if lengths else Fraction(0)
    for i in range(2, n + 1):
        if head - (i - 1) * lengths[i - 1] >= need:
            a = i
            break
        head += lengths[i - 1]
    level = (head - need) / (a - 1)
    return [lengths[i] - level if i < a - 1 else Fraction(0) for i in range(n)], a


def borrow_bits(table: TSetTable, network: RelayNetwork, h: int, J: UserSet,
                provenance: Optional[list] = None) -> list[BorrowRecord]:
    """Equalize the operands of ``W^h_J`` by borrowing, in place.

    A deficit that survives every donor level is left in place; the operand
    is zero-padded when the message is formed.
    """
    J = tuple(sorted(J))
    U = network.users_of_relay[h]
    m1 = max(table.length(h, k, _without(J, k)) for k in J)
    outside = [u for u in U if u not in J]
    records = []
    for k in J:
        Jk = _without(J, k)
        current = table.length(h, k, Jk)
        if current >= m1:
            continue
        need = m1 - current
        t2 = len(J)
        takes: list[tuple[UserSet, Fraction]] = []
        thresholds: list[int] = []
        target = table.setdefault(h, k, Jk)
        while True:
            extra = t2 - len(Jk)
            donors = []
            if 0 < extra <= len(outside):
                for X in itertools.combinations(outside, extra):
                    W = tuple(sorted(Jk + X))
                    ts = table.get(h, k, W)
                    if ts is not None and ts.length > 0:
                        donors.append((W, ts))
            available = sum((ts.length for _, ts in donors), Fraction(0))
            if need >= available:
                amounts = [ts.length for _, ts in donors]
                thresholds.append(len(donors) + 1)
            else:
                donors.sort(key=lambda wt: (-wt[1].length, wt[0]))
                amounts, a = _donor_amounts([ts.length for _, ts in donors], need)
                thresholds.append(a)
            taken = Fraction(0)
            for (W, ts), amount in zip(donors, amounts):
                if amount <= 0:
                    continue
                target.append(ts.take_prefix(amount))
                takes.append((W, amount))
                taken += amount
                if provenance is not None:
                    provenance.append(("borrow", h, k, J, W, amount))
            need -= taken
            if need > 0 and t2 < len(U) - 1:
                t2 += 1
                continue
            break
        records.append(BorrowRecord(h, k, J, m1 - current, takes, thresholds, need))
    return records


def _without(J: UserSet, k: int) -> UserSet:
    return tuple(u for u in J if u != k)


# -------------------------------------------------------------- messages --

@dataclass
class MulticastMessage:
    """XOR of the aligned operands of the users in ``users``, sent via ``relay``.

    Operands shorter than ``length`` are zero-padded at the tail.
    """

    relay: int
    users: UserSet
    length: Fraction
    operands: dict[int, list[Segment]]

    def operand_length(self, k: int) -> Fraction:
        return sum((s.length for s in self.operands.get(k, ())), Fraction(0))

    def split(self, amount: Fraction) -> tuple["MulticastMessage", Optional["MulticastMessage"]]:
        """Cut the message into a prefix of ``amount`` and the remainder."""
        head_ops, tail_ops = {}, {}
        for k, segs in self.operands.items():
            head, tail, left = [], [], amount
            for seg in segs:
                if left <= 0:
                    tail.append(seg)
                    continue
                a, b = seg.cut(left)
                if a is not None:
                    head.append(a)
                    left -= a.length
                if b is not None:
                    tail.append(b)
            head_ops[k], tail_ops[k] = head, tail
        head_msg = MulticastMessage(self.relay, self.users, amount, head_ops)
        if amount >= self.length:
            return head_msg, None
        return head_msg, MulticastMessage(self.relay, self.users, self.length - amount, tail_ops)


@dataclass
class CodedTransmission:
    """Relay-sourced coded units of ``F^1_file`` sent to one user (hybrid)."""

    relay: int
    user: int
    file_id: int
    amount: Fraction


@dataclass
class DeliveryPlan:
    messages: list[MulticastMessage]
    demand: tuple[int, ...]
    ledger: list[BorrowRecord] = field(default_factory=list)
    coded: list[CodedTransmission] = field(default_factory=list)
    provenance: list = field(default_factory=list)
    moves: list = field(default_factory=list)

    def relay_loads(self, H: int) -> dict[int, Fraction]:
        loads = {h: Fraction(0) for h in range(1, H + 1)}
        for m in self.messages:
            loads[m.relay] += m.length
        return loads

    def lengths_by_key(self) -> dict[tuple[int, UserSet], Fraction]:
        out: dict[tuple[int, UserSet], Fraction] = {}
        for m in self.messages:
            out[(m.relay, m.users)] = out.get((m.relay, m.users), Fraction(0)) + m.length
        return out

    def denominator_lcm(self) -> int:
        den = 1
        for m in self.messages:
            den = lcm(den, m.length.denominator)
            for segs in m.operands.values():
                for s in segs:
                    den = lcm(den, s.lo.denominator, s.hi.denominator)
        for c in self.coded:
            den = lcm(den, c.amount.denominator)
        return den

    def to_json(self) -> str:
        doc = {
            "demand": list(self.demand),
            "messages": [
                {
                    "relay": m.relay,
                    "users": list(m.users),
                    "length_num": m.length.numerator,
                    "length_den": m.length.denominator,
                    "operands": [
                        {"user": k, "segments": [[s.file_id, str(s.lo), str(s.hi)] for s in segs]}
                        for k, segs in sorted(m.operands.items())
                    ],
                }
                for m in self.messages
            ],
            "coded": [[c.relay, c.user, c.file_id, str(c.amount)] for c in self.coded],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DeliveryPlan":
        doc = json.loads(text)
        messages = []
        for m in doc["messages"]:
            operands = {
                op["user"]: [Segment(f, Fraction(lo), Fraction(hi)) for f, lo, hi in op["segments"]]
                for op in m["operands"]
            }
            messages.append(MulticastMessage(
                m["relay"], tuple(m["users"]), Fraction(m["length_num"], m["length_den"]), operands))
        coded = [CodedTransmission(h, k, f, Fraction(a)) for h, k, f, a in doc.get("coded", [])]
        return cls(messages=messages, demand=tuple(doc["demand"]), coded=coded)


def generate_messages(table: TSetTable) -> list[MulticastMessage]:
    """One message per ``(h, J)`` with a non-empty operand."""
    messages = []
    for h, J in table.message_keys():
        operands = {}
        length = Fraction(0)
        for k in J:
            ts = table.get(h, k, _without(J, k))
            segs = list(ts.segments) if ts is not None and ts.segments is not None else []
            operands[k] = segs
            if ts is not None:
                length = max(length, ts.length)
        if length > 0:
            messages.append(MulticastMessage(h, J, length, operands))
    messages.sort(key=lambda m: (m.relay, len(m.users), m.users))
    return messages


def run_borrowing(table: TSetTable, network: RelayNetwork,
                  provenance: Optional[list] = None) -> list[BorrowRecord]:
    """Borrow for every ``(h, J)`` in order of increasing ``|J|``."""
    ledger = []
    for h, J in table.message_keys():
        ledger.extend(borrow_bits(table, network, h, J, provenance))
    return ledger


# -------------------------------------------------------------- pipelines --

def srds_deliver(network: RelayNetwork, placement: CachePlacement, demand: Sequence[int],
                 subfiles: Optional[Iterable[SubfileIndex]] = None) -> DeliveryPlan:
    """Partition, borrow and form messages for one (group of a) placement."""
    demand = validate_demand(demand, placement.K, placement.N)
    provenance: list = []
    table = partition_subfiles(network, placement, demand, subfiles, provenance)
    ledger = run_borrowing(table, network, provenance)
    return DeliveryPlan(generate_messages(table), demand, ledger=ledger, provenance=provenance)


def decentralized_deliver(network: RelayNetwork, placement: CachePlacement,
                          demand: Sequence[int]) -> DeliveryPlan:
    """Run the delivery separately on each group of subfiles known by ``t'`` users.

    Subfiles nobody caches (``t' = 0``) are routed uncoded, split across the
    relays of the requesting user.
    """
    if placement.kind != "dman":
        raise DeliveryError("decentralized delivery needs a dMAN placement")
    demand = validate_demand(demand, placement.K, placement.N)
    groups: dict[int, list[SubfileIndex]] = {}
    for sf in placement.subfiles:
        groups.setdefault(len(sf.cache_set), []).append(sf)
    plan = DeliveryPlan([], demand)
    for tp in sorted(groups):
        if tp >= placement.K:
            continue
        part = srds_deliver(network, placement, demand, groups[tp])
        plan.messages.extend(part.messages)
        plan.ledger.extend(part.ledger)
        plan.provenance.extend(("group", tp, entry) for entry in part.provenance)
    return plan


def hybrid_deliver(network: RelayNetwork, placement: CachePlacement,
                   demand: Sequence[int]) -> tuple[DeliveryPlan, tuple[Fraction, Fraction]]:
    """Coded ``F^1`` units from relay caches plus the usual delivery of ``F^2``.

    Returns the plan and the load pair ``(max_h R_h, max_{h,k} R_{h->k})``.
    """
    from .loads import compute_loads

    if placement.kind != "hybrid":
        raise DeliveryError("hybrid delivery needs a hybrid placement")
    plan = srds_deliver(network, placement, demand)
    f1 = placement.coded_length
    if f1 > 0:
        per_link = (f1 - placement.user_plain_coded) / network.r
        for h in network.relays:
            for k in network.users_of_relay[h]:
                plan.coded.append(CodedTransmission(h, k, plan.demand[k - 1], per_link))
    report = compute_loads(plan, network)
    return plan, (report.max_server_to_relay, report.max_relay_to_user)


# ------------------------------------------------------------- rebalance --

def rebalance(plan: DeliveryPlan, network: RelayNetwork, quantum="auto",
              max_moves: Optional[int] = None) -> DeliveryPlan:
    """Greedy load shifting between relays.

    Relays are ranked by load.  For the current candidate relay, a message
    whose receivers all hang off some strictly lighter, lower-ranked relay
    is cut and its prefix moved to the most loaded such relay; the move size
    is ``min(|W|, (L_from - L_to) / 2)``.  Among eligible messages the one
    allowing the largest move wins.  Without a move the next relay becomes
    the candidate.

    Moves are rounded down to multiples of ``quantum`` ("auto": the finest
    granularity already present in the plan, ``None``: exact) so the loop
    cannot creep forever with ever smaller moves; ``max_moves`` defaults to
    ``H * len(messages)``.
    """
    messages = list(plan.messages)
    H = network.num_relays
    if quantum == "auto":
        quantum = Fraction(1, plan.denominator_lcm()) if messages else None
    elif quantum is not None:
        quantum = Fraction(quantum)
    cap = H * max(len(messages), 1) if max_moves is None else max_moves
    loads = plan.relay_loads(H)
    reach = {h: frozenset(us) for h, us in network.users_of_relay.items()}
    moves = []
    i = 0
    while i < H - 1 and len(moves) < cap:
        order = sorted(network.relays, key=lambda h: (-loads[h], h))
        src, later = order[i], order[i + 1:]
        groups: dict[UserSet, Fraction] = {}
        for m in messages:
            if m.relay == src:
                groups[m.users] = groups.get(m.users, Fraction(0)) + m.length
        best = None
        for J in sorted(groups, key=lambda J: (len(J), J)):
            lighter = [h for h in later if loads[h] < loads[src] and reach[h].issuperset(J)]
            if not lighter:
                continue
            dst = max(lighter, key=lambda h: (loads[h], -h))
            amount = min(groups[J], (loads[src] - loads[dst]) / 2)
            if quantum:
                amount = floor(amount / quantum) * quantum
            if amount > 0 and (best is None or amount > best[2]):
                best = (J, dst, amount)
        if best is None:
            i += 1
            continue
        J, dst, amount = best
        messages = _move_prefix(messages, src, J, dst, amount)
        loads[src] -= amount
        loads[dst] += amount
        moves.append((src, dst, J, amount))
        log.debug("moved %s of W^%d_%s to relay %d", amount, src, J, dst)
    return DeliveryPlan(messages, plan.demand, ledger=plan.ledger, coded=list(plan.coded),
                        provenance=plan.provenance, moves=plan.moves + moves)


def _move_prefix(messages: list[MulticastMessage], src: int, J: UserSet, dst: int,
                 amount: Fraction) -> list[MulticastMessage]:
    out = []
    left = amount
    for m in messages:
        if left > 0 and m.relay == src and m.users == J:
            head, tail = m.split(min(left, m.length))
            left -= head.length
            head.relay = dst
            out.append(head)
            if tail is not None:
                out.append(tail)
        else:
            out.append(m)
    return out
