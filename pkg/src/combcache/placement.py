"""Cache placement: centralized (cMAN), decentralized (dMAN) and hybrid.

File contents are addressed by normalized position in ``[0, 1)``.  Every
piece of a file that the schemes talk about is a :class:`Segment` with
exact rational endpoints.  Decentralized placements pick bits at random;
since file bits are i.i.d. the bits of each file are relabelled so that
the bits cached by the same user set sit next to each other, which keeps
every subfile a single interval.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, floor
from typing import Iterable, Optional

import numpy as np

from .topology import RelayNetwork


class PlacementError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Segment:
    """Bits ``[lo, hi)`` of file ``file_id``."""

    file_id: int
    lo: Fraction
    hi: Fraction
    coded: bool = False

    def __post_init__(self):
        if not self.hi > self.lo:
            raise PlacementError(f"empty segment {self}")

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    def split(self, parts: int) -> list["Segment"]:
        if parts == 1:
            return [self]
        step = self.length / parts
        return [
            Segment(self.file_id, self.lo + i * step, self.lo + (i + 1) * step, self.coded)
            for i in range(parts)
        ]

    def cut(self, amount: Fraction) -> tuple[Optional["Segment"], Optional["Segment"]]:
        """Split off the first ``amount`` of the segment."""
        if amount <= 0:
            return None, self
        if amount >= self.length:
            return self, None
        mid = self.lo + amount
        return Segment(self.file_id, self.lo, mid, self.coded), Segment(self.file_id, mid, self.hi, self.coded)

    def __repr__(self) -> str:
        return f"F{self.file_id}[{self.lo},{self.hi})"


@dataclass(frozen=True)
class SubfileIndex:
    """The part of ``file_id`` cached by exactly the users in ``cache_set``."""

    file_id: int
    cache_set: tuple[int, ...]
    segment: Segment


@dataclass
class CachePlacement:
    K: int
    N: int
    kind: str
    params: dict
    subfiles: list[SubfileIndex]
    user_cache: dict[int, list[Segment]]
    # hybrid only: F^1 occupies [0, coded_length) of every file
    coded_length: Fraction = Fraction(0)
    relay_units: Fraction = Fraction(0)
    user_plain_coded: Fraction = Fraction(0)
    seed: Optional[int] = None
    B: Optional[int] = None
    _by_file: dict = field(default_factory=dict, repr=False, compare=False)

    def subfiles_of(self, file_id: int) -> list[SubfileIndex]:
        if not self._by_file:
            for sf in self.subfiles:
                self._by_file.setdefault(sf.file_id, []).append(sf)
        return self._by_file.get(file_id, [])

    def cache_usage(self, k: int) -> Fraction:
        """Normalized cache usage of user ``k`` (in files)."""
        plain = sum((s.length for s in self.user_cache[k]), Fraction(0))
        return plain + self.N * self.user_plain_coded

    def knows(self, k: int, seg: Segment) -> bool:
        """Whether user ``k`` caches every bit of ``seg`` as plain bits."""
        for c in self.user_cache[k]:
            if c.file_id == seg.file_id and c.lo <= seg.lo and seg.hi <= c.hi:
                return True
        return False

    def to_json(self, network: Optional[RelayNetwork] = None) -> str:
        doc = {
            "K": self.K,
            "N": self.N,
            "kind": self.kind,
            "params": {key: str(v) for key, v in self.params.items()},
            "coded_length": str(self.coded_length),
            "relay_units": str(self.relay_units),
            "user_plain_coded": str(self.user_plain_coded),
            "users": {
                str(k): [
                    [sf.file_id, list(sf.cache_set), str(sf.segment.lo), str(sf.segment.hi)]
                    for sf in self.subfiles
                    if k in sf.cache_set
                ]
                for k in range(1, self.K + 1)
            },
            "subfiles": [
                [sf.file_id, list(sf.cache_set), str(sf.segment.lo), str(sf.segment.hi)]
                for sf in self.subfiles
            ],
        }
        if network is not None:
            doc["users_of_relay"] = {str(h): list(us) for h, us in network.users_of_relay.items()}
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CachePlacement":
        doc = json.loads(text)
        subfiles = [
            SubfileIndex(f, tuple(W), Segment(f, Fraction(lo), Fraction(hi)))
            for f, W, lo, hi in doc["subfiles"]
        ]
        user_cache = {
            int(k): [Segment(f, Fraction(lo), Fraction(hi)) for f, _W, lo, hi in entries]
            for k, entries in doc["users"].items()
        }
        return cls(
            K=doc["K"],
            N=doc["N"],
            kind=doc["kind"],
            params=dict(doc.get("params", {})),
            subfiles=subfiles,
            user_cache=user_cache,
            coded_length=Fraction(doc.get("coded_length", "0")),
            relay_units=Fraction(doc.get("relay_units", "0")),
            user_plain_coded=Fraction(doc.get("user_plain_coded", "0")),
        )


def _user_caches(K: int, subfiles: Iterable[SubfileIndex]) -> dict[int, list[Segment]]:
    caches: dict[int, list[Segment]] = {k: [] for k in range(1, K + 1)}
    for sf in subfiles:
        for k in sf.cache_set:
            caches[k].append(sf.segment)
    return caches


def _cman_subfiles(K: int, N: int, t: int, lo: Fraction, hi: Fraction) -> list[SubfileIndex]:
    n_sub = comb(K, t)
    step = (hi - lo) / n_sub
    out = []
    for i in range(1, N + 1):
        for j, W in enumerate(itertools.combinations(range(1, K + 1), t)):
            out.append(SubfileIndex(i, W, Segment(i, lo + j * step, lo + (j + 1) * step)))
    return out


def _check_sizes(K: int, N: int) -> None:
    if K < 1:
        raise PlacementError("need at least one user")
    if N < K:
        raise PlacementError(f"only N >= K is supported (N={N}, K={K})")


def cman_place(K: int, N: int, t: int) -> CachePlacement:
    """Centralized placement: ``C(K, t)`` equal subfiles per file, user k
    caches ``F_{i,W}`` whenever ``k`` is in ``W``."""
    _check_sizes(K, N)
    if not 0 <= t <= K:
        raise PlacementError(f"t must lie in [0, K], got {t}")
    subfiles = _cman_subfiles(K, N, t, Fraction(0), Fraction(1))
    return CachePlacement(
        K=K, N=N, kind="cman", params={"t": t}, subfiles=subfiles,
        user_cache=_user_caches(K, subfiles),
    )


def dman_place(K: int, N: int, M, seed: int, B_concrete: int) -> CachePlacement:
    """Decentralized placement on files of ``B_concrete`` bits.

    Each user independently caches ``floor(M * B / N)`` uniformly chosen bits
    of every file.  Subfile ``F_{i,W}`` collects the bits cached by exactly
    ``W``; subfiles are laid out by ``(|W|, W)`` inside each file.
    """
    _check_sizes(K, N)
    M = Fraction(M)
    if not 0 <= M <= N:
        raise PlacementError(f"M must lie in [0, N], got {M}")
    if B_concrete < 1:
        raise PlacementError("B_concrete must be positive")
    if K > 62:
        raise PlacementError("dMAN bit masks support at most 62 users")
    rng = np.random.default_rng(seed)
    per_user = floor(M * B_concrete / N)
    subfiles: list[SubfileIndex] = []
    for i in range(1, N + 1):
        owners = np.zeros(B_concrete, dtype=np.int64)
        for k in range(K):
            picked = rng.choice(B_concrete, size=per_user, replace=False)
            owners[picked] |= 1 << k
        masks, counts = np.unique(owners, return_counts=True)
        groups = []
        for mask, count in zip(masks.tolist(), counts.tolist()):
            W = tuple(k + 1 for k in range(K) if mask >> k & 1)
            groups.append((len(W), W, count))
        groups.sort()
        offset = 0
        for _, W, count in groups:
            seg = Segment(i, Fraction(offset, B_concrete), Fraction(offset + count, B_concrete))
            subfiles.append(SubfileIndex(i, W, seg))
            offset += count
    return CachePlacement(
        K=K, N=N, kind="dman", params={"M": M, "per_user_bits": per_user},
        subfiles=subfiles, user_cache=_user_caches(K, subfiles), seed=seed, B=B_concrete,
    )


def hybrid_formula_M2(network: RelayNetwork, N: int, M1, t3: int, t4: int) -> Fraction:
    """User cache size used by the hybrid placement (in files)."""
    r, K, M1 = network.r, network.num_users, Fraction(M1)
    return Fraction(t3) * min(r * M1, N) / K + max(1 - r * M1 / N, Fraction(0)) * t4


def hybrid_place(network: RelayNetwork, N: int, M1, t3: int, t4: int,
                 seed: int = 0, M2=None) -> CachePlacement:
    """Relay caches hold MDS-coded units of ``F^1``; users cache random plain
    bits of ``F^1`` plus a cMAN placement with parameter ``t4`` over ``F^2``.

    Coded units are kept symbolic: any ``|F^1|`` distinct units (plain or
    coded) rebuild ``F^1``.  ``M2``, when given, is treated as a budget.
    """
    if not network.is_combination:
        raise PlacementError("hybrid placement needs a combination network")
    K, r = network.num_users, network.r
    _check_sizes(K, N)
    M1 = Fraction(M1)
    if not 0 <= M1 <= N:
        raise PlacementError(f"M1 must lie in [0, N], got {M1}")
    if not (0 <= t3 <= K and 0 <= t4 <= K):
        raise PlacementError("t3 and t4 must lie in [0, K]")
    f1 = min(r * M1 / N, Fraction(1))
    m2 = hybrid_formula_M2(network, N, M1, t3, t4)
    if m2 > N:
        raise PlacementError(f"hybrid user cache {m2} exceeds N={N}")
    if M2 is not None and m2 > Fraction(M2):
        raise PlacementError(f"hybrid user cache {m2} exceeds budget M2={M2}")
    subfiles = _cman_subfiles(K, N, t4, f1, Fraction(1)) if f1 < 1 else []
    params = {"M1": M1, "t3": t3, "t4": t4, "M2": m2}
    if M2 is not None:
        params["M2_budget"] = Fraction(M2)
        params["M2_slack"] = Fraction(M2) - m2
    return CachePlacement(
        K=K, N=N, kind="hybrid", params=params, subfiles=subfiles,
        user_cache=_user_caches(K, subfiles), coded_length=f1,
        relay_units=f1 / r, user_plain_coded=Fraction(t3) * f1 / K, seed=seed,
    )
