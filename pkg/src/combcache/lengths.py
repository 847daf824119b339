"""Lengths-only delivery for large centralized instances.

Bucket and message lengths do not depend on which file each user wants,
only on the cache sets.  Here the subfile partition is counted with numpy
over all ``t``-subsets at once; borrowing and message formation reuse the
same code as the segment-level pipeline, with buckets that only track
their length.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb, lcm

import numpy as np

from .delivery import BorrowRecord, TSetTable, run_borrowing
from .topology import RelayNetwork


@dataclass
class LengthPlan:
    messages: dict[tuple[int, tuple[int, ...]], Fraction]
    ledger: list[BorrowRecord]
    table: TSetTable

    def relay_loads(self) -> dict[int, Fraction]:
        out: dict[int, Fraction] = {}
        for (h, _), L in self.messages.items():
            out[h] = out.get(h, Fraction(0)) + L
        return out

    def link_loads(self) -> dict[tuple[int, int], Fraction]:
        out: dict[tuple[int, int], Fraction] = {}
        for (h, J), L in self.messages.items():
            for k in J:
                out[(h, k)] = out.get((h, k), Fraction(0)) + L
        return out

    @property
    def max_link_load(self) -> Fraction:
        loads = list(self.relay_loads().values()) + list(self.link_loads().values())
        return max(loads, default=Fraction(0))


def _subset_masks(K: int, t: int) -> np.ndarray:
    masks = [sum(1 << (u - 1) for u in W) for W in itertools.combinations(range(1, K + 1), t)]
    return np.array(masks, dtype=np.int64)


def partition_lengths(network: RelayNetwork, t: int) -> TSetTable:
    K = network.num_users
    if K > 62:
        raise ValueError("lengths engine supports at most 62 users")
    W = _subset_masks(K, t)
    max_deg = max(len(hs) for hs in network.relays_of_user.values())
    scale = lcm(*range(1, max_deg + 1))
    unit = Fraction(1, comb(K, t) * scale)
    relay_mask = {h: sum(1 << (u - 1) for u in us) for h, us in network.users_of_relay.items()}
    inter = {h: W & m for h, m in relay_mask.items()}
    reach = {h: np.bitwise_count(x).astype(np.int64) for h, x in inter.items()}
    table = TSetTable(lengths_only=True)
    for k in network.users:
        free = (W >> (k - 1)) & 1 == 0
        hs = network.relays_of_user[k]
        counts = np.stack([reach[h][free] for h in hs])
        best = counts.max(axis=0)
        winners = counts == best
        share = scale // winners.sum(axis=0)
        for row, h in enumerate(hs):
            sel = winners[row]
            keys, idx = np.unique(inter[h][free][sel], return_inverse=True)
            weights = np.bincount(idx, weights=share[sel], minlength=len(keys))
            for key, w in zip(keys.tolist(), weights.tolist()):
                known = tuple(u for u in range(1, K + 1) if key >> (u - 1) & 1)
                table.setdefault(h, k, known).append(int(round(w)) * unit)
    return table


def srds_lengths(network: RelayNetwork, t: int) -> LengthPlan:
    """Message lengths of the centralized delivery with parameter ``t``."""
    if not 0 <= t <= network.num_users:
        raise ValueError("t must lie in [0, K]")
    table = partition_lengths(network, t)
    ledger = run_borrowing(table, network)
    messages = {}
    for h, J in table.message_keys():
        L = max(table.length(h, k, tuple(u for u in J if u != k)) for k in J)
        if L > 0:
            messages[(h, J)] = L
    return LengthPlan(messages, ledger, table)
