"""Decodability checks for delivery plans.

``verify_decodability`` works symbolically.  All segment boundaries are
refined into disjoint atoms; because message operands are aligned bit by
bit, the refinement is closed under the offsets that alignment induces, so
every aligned slice of a message is an XOR of whole atoms of one common
length.  A user decodes its file iff every wanted atom lies in the GF(2)
span of its cached atoms and the slices it receives.

``simulate_concrete`` instantiates random files of ``B`` bits and runs a
peeling decoder on actual payloads.
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Optional, Sequence

import numpy as np

from . import gf2
from .delivery import DeliveryPlan, MulticastMessage
from .loads import LoadReport, compute_loads  # noqa: F401  (re-exported)
from .placement import CachePlacement, Segment
from .topology import RelayNetwork


class VerificationError(ValueError):
    """The plan references content or links that do not exist."""


@dataclass
class UserReport:
    user: int
    passed: bool
    missing_atom: Optional[tuple[int, Fraction, Fraction]] = None
    decoded_fraction: Fraction = Fraction(1)

    def to_dict(self) -> dict:
        out = {"user": self.user, "pass": self.passed, "decoded_fraction": str(self.decoded_fraction)}
        if self.missing_atom is not None:
            f, lo, hi = self.missing_atom
            out["missing_atom"] = [f, str(lo), str(hi)]
        return out


def reports_to_json(reports: Sequence[UserReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=1)


class AtomSpace:
    """Refinement of every referenced file interval into disjoint atoms.

    Internally all positions are integers in units of ``1/scale``, the
    common denominator of every boundary and message length.
    """

    def __init__(self, N: int, intervals: dict[int, set[Fraction]], messages: Sequence[MulticastMessage]):
        self.N = N
        den = 1
        for bps in intervals.values():
            for b in bps:
                den = lcm(den, b.denominator)
        for m in messages:
            den = lcm(den, m.length.denominator)
        self.scale = den
        self.breaks = {f: {b.numerator * (den // b.denominator) for b in bps} for f, bps in intervals.items()}
        self._layouts = []
        for m in messages:
            layout = []
            for segs in m.operands.values():
                op, off = [], 0
                for seg in segs:
                    lo = seg.lo.numerator * (den // seg.lo.denominator)
                    hi = seg.hi.numerator * (den // seg.hi.denominator)
                    op.append((off, seg.file_id, lo, hi))
                    off += hi - lo
                layout.append(op)
            self._layouts.append(layout)
        self._lengths = [m.length.numerator * (den // m.length.denominator) for m in messages]
        self._refine()
        self.sorted = {f: sorted(bps) for f, bps in self.breaks.items()}
        self.base: dict[int, int] = {}
        n = 0
        for f in sorted(self.sorted):
            self.base[f] = n
            n += len(self.sorted[f]) - 1
        self.size = n
        self._starts = [self.base[f] for f in sorted(self.base)]
        self._files = sorted(self.base)

    def _positions(self, idx: int, sorted_breaks: dict[int, list[int]]) -> list[int]:
        pos = {0, self._lengths[idx]}
        for op in self._layouts[idx]:
            for off, f, lo, hi in op:
                pos.add(off)
                pos.add(off + hi - lo)
                bps = sorted_breaks[f]
                for b in bps[bisect_right(bps, lo): bisect_left(bps, hi)]:
                    pos.add(off + b - lo)
        return sorted(pos)

    def _refine(self) -> None:
        changed = True
        while changed:
            changed = False
            snap = {f: sorted(bps) for f, bps in self.breaks.items()}
            for idx, layout in enumerate(self._layouts):
                pos = self._positions(idx, snap)
                for op in layout:
                    for off, f, lo, hi in op:
                        end = off + hi - lo
                        target = self.breaks[f]
                        for p in pos[bisect_right(pos, off): bisect_left(pos, end)]:
                            b = lo + p - off
                            if b not in target:
                                target.add(b)
                                changed = True

    def _scaled(self, x: Fraction) -> Optional[int]:
        q, rem = divmod(self.scale, x.denominator)
        return None if rem else x.numerator * q

    def atoms(self, f: int, lo: Fraction, hi: Fraction) -> range:
        bps = self.sorted.get(f)
        if bps is None:
            raise VerificationError(f"unknown file {f}")
        a, b = self._scaled(Fraction(lo)), self._scaled(Fraction(hi))
        if a is not None and b is not None:
            i, j = bisect_left(bps, a), bisect_left(bps, b)
            if i < len(bps) and bps[i] == a and j < len(bps) and bps[j] == b:
                return range(self.base[f] + i, self.base[f] + j)
        raise VerificationError(f"interval F{f}[{lo},{hi}) is not aligned to atoms")

    def atom_interval(self, a: int) -> tuple[int, Fraction, Fraction]:
        if not 0 <= a < self.size:
            raise KeyError(a)
        f = self._files[bisect_right(self._starts, a) - 1]
        i = a - self.base[f]
        return f, Fraction(self.sorted[f][i], self.scale), Fraction(self.sorted[f][i + 1], self.scale)

    def atom_length(self, a: int) -> Fraction:
        _, lo, hi = self.atom_interval(a)
        return hi - lo

    def message_rows(self, idx: int) -> list[frozenset[int]]:
        """Aligned slices of message ``idx`` as sets of atom ids."""
        pos = self._positions(idx, self.sorted)
        rows: list[set[int]] = [set() for _ in pos[:-1]]
        for op in self._layouts[idx]:
            for off, f, lo, hi in op:
                bps, base = self.sorted[f], self.base[f]
                end = off + hi - lo
                first = bisect_left(bps, lo)
                for n in range(bisect_left(pos, off), bisect_left(pos, end)):
                    a = bisect_left(bps, lo + pos[n] - off, first)
                    rows[n] ^= {base + a}
        return [frozenset(r) for r in rows]


def _check_segment(seg: Segment, N: int) -> None:
    if not 1 <= seg.file_id <= N or seg.lo < 0 or seg.hi > 1:
        raise VerificationError(f"message references unknown segment {seg!r}")


def build_atom_space(placement: CachePlacement, plan: DeliveryPlan) -> AtomSpace:
    N = placement.N
    breaks: dict[int, set[Fraction]] = {f: {Fraction(0), Fraction(1)} for f in range(1, N + 1)}
    for f in range(1, N + 1):
        if 0 < placement.coded_length < 1:
            breaks[f].add(placement.coded_length)
    seen: set[int] = set()  # the same Segment object is shared by many caches
    every = [segs for segs in placement.user_cache.values()]
    every += [segs for m in plan.messages for segs in m.operands.values()]
    for segs in every:
        for s in segs:
            if id(s) in seen:
                continue
            seen.add(id(s))
            _check_segment(s, N)
            breaks[s.file_id].update((s.lo, s.hi))
    return AtomSpace(N, breaks, plan.messages)


def _received(network: RelayNetwork, plan: DeliveryPlan, k: int) -> list[int]:
    out = []
    for idx, m in enumerate(plan.messages):
        if k in m.users:
            if m.relay not in network.relays_of_user[k]:
                raise VerificationError(f"relay {m.relay} is not connected to user {k}")
            out.append(idx)
    return out


def verify_decodability(network: RelayNetwork, placement: CachePlacement, plan: DeliveryPlan,
                        demand: Sequence[int]) -> list[UserReport]:
    """Per-user decodability report."""
    demand = tuple(demand)
    space = build_atom_space(placement, plan)
    row_cache: dict[int, list[frozenset[int]]] = {}
    atom_cache: dict[int, range] = {}
    reports = []
    for k in network.users:
        f = demand[k - 1]
        known: set[int] = set()
        for s in placement.user_cache[k]:
            if id(s) not in atom_cache:
                atom_cache[id(s)] = space.atoms(s.file_id, s.lo, s.hi)
            known.update(atom_cache[id(s)])
        rows = []
        for idx in _received(network, plan, k):
            if idx not in row_cache:
                row_cache[idx] = space.message_rows(idx)
            rows.extend(row_cache[idx])
        known = _peel(known, rows)
        target = list(space.atoms(f, placement.coded_length, Fraction(1))) if placement.coded_length < 1 else []
        missing = [a for a in target if a not in known]
        if missing:
            missing = _span_rescue(missing, known, rows)
        coded_ok, coded_len = _coded_part_ok(network, placement, plan, k, f)
        decoded = sum((space.atom_length(a) for a in target if a not in set(missing)), Fraction(0))
        decoded += coded_len if coded_ok else 0
        missing_atom = space.atom_interval(missing[0]) if missing else None
        if missing_atom is None and not coded_ok:
            missing_atom = (f, Fraction(0), placement.coded_length)
        reports.append(UserReport(k, not missing and coded_ok, missing_atom, decoded))
    return reports


def _peel(known: set[int], rows: list[frozenset[int]]) -> set[int]:
    known = set(known)
    pending = [r for r in rows if r]
    progress = True
    while progress and pending:
        progress = False
        rest = []
        for r in pending:
            unknown = r - known
            if len(unknown) == 1:
                known |= unknown
                progress = True
            elif unknown:
                rest.append(r)
        pending = rest
    return known


def _span_rescue(missing: list[int], known: set[int], rows: list[frozenset[int]]) -> list[int]:
    """Gaussian elimination over the atoms peeling could not resolve."""
    residual = [r - known for r in rows]
    residual = [r for r in residual if len(r) > 1]
    if not residual:
        return missing
    index = {a: i for i, a in enumerate(sorted(set().union(*residual)))}
    basis = gf2.reduce_rows(sum(1 << index[a] for a in r) for r in residual)
    solved = {p for p, row in basis.items() if row == 1 << p}
    return [a for a in missing if a not in index or index[a] not in solved]


def _coded_part_ok(network, placement, plan, k, f) -> tuple[bool, Fraction]:
    """Any ``|F^1|`` distinct coded/plain units of ``F^1`` rebuild it."""
    f1 = placement.coded_length
    if f1 == 0:
        return True, Fraction(0)
    got = placement.user_plain_coded
    for c in plan.coded:
        if c.user == k and c.file_id == f:
            if c.relay not in network.relays_of_user[k]:
                raise VerificationError(f"relay {c.relay} is not connected to user {k}")
            got += min(c.amount, placement.relay_units)
    return got >= f1, f1


# ------------------------------------------------------- concrete bits --

def required_denominator(placement: CachePlacement, plan: DeliveryPlan) -> int:
    den = plan.denominator_lcm()
    for sf in placement.subfiles:
        den = lcm(den, sf.segment.lo.denominator, sf.segment.hi.denominator)
    for v in (placement.coded_length, placement.relay_units, placement.user_plain_coded):
        den = lcm(den, v.denominator)
    return den


def simulate_concrete(network: RelayNetwork, placement: CachePlacement, plan: DeliveryPlan,
                      demand: Sequence[int], B_concrete: int, seed: int = 0,
                      corrupt: Optional[tuple[int, int]] = None) -> dict[int, bool]:
    """Bit-exact end-to-end run; returns per-user success.

    ``corrupt=(message index, bit)`` flips one payload bit before delivery.
    """
    den = required_denominator(placement, plan)
    if B_concrete % den:
        raise VerificationError(f"B_concrete={B_concrete} is not a multiple of {den}")
    B = B_concrete
    demand = tuple(demand)
    rng = np.random.default_rng(seed)
    N = placement.N
    files = rng.integers(0, 2, size=(N + 1, B), dtype=np.uint8)

    spans: dict[int, tuple[int, int, int]] = {}

    def span(s: Segment) -> tuple[int, int, int]:
        got = spans.get(id(s))
        if got is None:
            got = spans[id(s)] = (s.file_id, s.lo.numerator * (B // s.lo.denominator),
                                  s.hi.numerator * (B // s.hi.denominator))
        return got

    payloads = []
    for m in plan.messages:
        buf = np.zeros(int(m.length * B), dtype=np.uint8)
        for segs in m.operands.values():
            bits = _gather(files, segs, span)
            buf[: len(bits)] ^= bits
        payloads.append(buf)
    if corrupt is not None:
        idx, bit = corrupt
        payloads[idx][bit] ^= 1

    coded = _CodedF1(network, placement, plan, demand, files, B, rng) if placement.coded_length else None
    result = {}
    for k in network.users:
        value = np.zeros_like(files)
        known = np.zeros(files.shape, dtype=bool)
        for s in placement.user_cache[k]:
            f, a, b = span(s)
            value[f, a:b] = files[f, a:b]
            known[f, a:b] = True
        todo = _received(network, plan, k)
        progress = True
        while todo and progress:
            progress = False
            left = []
            for idx in todo:
                m = plan.messages[idx]
                others = [segs for j, segs in m.operands.items() if j != k]
                if not all(known[f, a:b].all() for segs in others for f, a, b in map(span, segs)):
                    left.append(idx)
                    continue
                buf = payloads[idx].copy()
                for segs in others:
                    bits = _gather(value, segs, span)
                    buf[: len(bits)] ^= bits
                off = 0
                for s in m.operands.get(k, ()):
                    f, a, b = span(s)
                    value[f, a:b] = buf[off: off + b - a]
                    known[f, a:b] = True
                    off += b - a
                progress = True
            todo = left
        f = demand[k - 1]
        if coded is not None:
            n1 = int(placement.coded_length * B)
            bits = coded.decode(k)
            if bits is not None:
                value[f, :n1] = bits
                known[f, :n1] = True
        result[k] = bool(known[f].all() and np.array_equal(value[f], files[f]))
    return result


def _gather(source: np.ndarray, segs: Sequence[Segment], span) -> np.ndarray:
    parts = [source[f, a:b] for f, a, b in map(span, segs)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint8)


class _CodedF1:
    """Random GF(2) instantiation of the relay-cached coded units of ``F^1``.

    Relay ``h`` stores ``n1 / r`` random combinations of ``F^1_i`` and each
    user caches ``t3 n1 / K`` random plain bits.  Relay caches are redrawn
    until every user's plain bits plus its relays' caches span ``F^1``;
    transmitted combinations are drawn from the relay cache span and kept
    only when they raise the receiver's rank.
    """

    def __init__(self, network, placement, plan, demand, files, B, rng, attempts=200):
        self.n1 = n1 = int(placement.coded_length * B)
        self.files, self.demand, self.network, self.plan = files, demand, network, plan
        units = int(placement.relay_units * B)
        plain = int(placement.user_plain_coded * B)
        self.plain = {k: sorted(rng.choice(n1, size=plain, replace=False).tolist()) for k in network.users}
        self.plain_rows = {k: [1 << p for p in ps] for k, ps in self.plain.items()}
        for _ in range(attempts):
            self.cache = {h: [int(x) for x in _random_rows(rng, units, n1)] for h in network.relays}
            if all(
                gf2.rank(self.plain_rows[k] + [r for h in network.relays_of_user[k] for r in self.cache[h]]) == n1
                for k in network.users
            ):
                break
        else:
            self.cache = None
        self.rng = rng
        self.B = B

    def decode(self, k: int) -> Optional[np.ndarray]:
        if self.cache is None:
            return None
        f = self.demand[k - 1]
        x = self.files[f, : self.n1]
        rows = list(self.plain_rows[k])
        basis = gf2.reduce_rows(rows)
        sent = [c for c in self.plan.coded if c.user == k and c.file_id == f]
        for c in sent:
            quota = int(c.amount * self.B)
            pool = self.cache[c.relay]
            tries = 0
            while quota and tries < 64 * (quota + 1):
                tries += 1
                mix = 0
                for r, pick in zip(pool, self.rng.integers(0, 2, len(pool))):
                    if pick:
                        mix ^= r
                if mix and not gf2.in_span(mix, basis):
                    rows.append(mix)
                    basis = gf2.reduce_rows(rows)
                    quota -= 1
        rhs = [_dot(r, x) for r in rows]
        sol = gf2.solve(rows, rhs, self.n1)
        return None if sol is None else np.array(sol, dtype=np.uint8)


def _random_rows(rng, count: int, n: int) -> list[int]:
    bits = rng.integers(0, 2, size=(count, n), dtype=np.uint8)
    return [int("".join(map(str, row[::-1])), 2) if n else 0 for row in bits]


def _dot(row: int, x: np.ndarray) -> int:
    idx = [i for i in range(len(x)) if row >> i & 1]
    return int(x[idx].sum() % 2) if idx else 0
