"""Two-hop relay topologies: server -> relays -> users.

Users and relays are numbered from 1.  ``users_of_relay[h]`` is the sorted
tuple of users attached to relay ``h`` and ``relays_of_user[k]`` is its
transpose.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Mapping, Optional


class TopologyError(ValueError):
    """Raised for invalid network parameters or malformed connectivity."""


@dataclass(frozen=True)
class RelayNetwork:
    num_relays: int
    num_users: int
    users_of_relay: Mapping[int, tuple[int, ...]]
    relays_of_user: Mapping[int, tuple[int, ...]]
    kind: str = "general"
    r: Optional[int] = None

    @property
    def relays(self) -> range:
        return range(1, self.num_relays + 1)

    @property
    def users(self) -> range:
        return range(1, self.num_users + 1)

    @property
    def is_combination(self) -> bool:
        return self.kind == "combination"

    def describe(self) -> str:
        if self.is_combination:
            return f"combination H={self.num_relays} r={self.r}"
        lines = ["general"]
        for h in self.relays:
            users = " ".join(str(k) for k in self.users_of_relay[h])
            lines.append(f"relay {h}: {users}")
        return "\n".join(lines)

    def validate(self) -> None:
        if set(self.users_of_relay) != set(self.relays):
            raise TopologyError("relay ids must be exactly 1..H")
        if set(self.relays_of_user) != set(self.users):
            raise TopologyError("user ids must be exactly 1..K")
        if _transpose(self.relays_of_user) != dict(self.users_of_relay):
            raise TopologyError("relays_of_user is not the transpose of users_of_relay")
        for k, hs in self.relays_of_user.items():
            if not hs:
                raise TopologyError(f"user {k} is not connected to any relay")
        if self.is_combination:
            H, r = self.num_relays, self.r
            if self.num_users != comb(H, r):
                raise TopologyError("combination network must have C(H, r) users")
            subsets = {tuple(hs) for hs in self.relays_of_user.values()}
            if len(subsets) != self.num_users or any(len(s) != r for s in subsets):
                raise TopologyError("users must attach to distinct r-subsets")
            for us in self.users_of_relay.values():
                if len(us) != comb(H - 1, r - 1):
                    raise TopologyError("relay degree must be C(H-1, r-1)")


def _transpose(adjacency: Mapping[int, tuple[int, ...]]) -> dict[int, tuple[int, ...]]:
    out: dict[int, list[int]] = {}
    for a, bs in adjacency.items():
        for b in bs:
            out.setdefault(b, []).append(a)
    return {b: tuple(sorted(a_s)) for b, a_s in sorted(out.items())}


def build_combination_network(H: int, r: int) -> RelayNetwork:
    """Combination network with ``C(H, r)`` users.

    User ``k`` is attached to the ``k``-th r-subset of ``1..H`` in
    lexicographic order, so for ``H=4, r=2`` user 1 sees relays {1, 2} and
    relay 1 serves users {1, 2, 3}.
    """
    if H < 1 or r < 1 or r > H:
        raise TopologyError(f"need 1 <= r <= H, got H={H}, r={r}")
    relays_of_user = {
        k: subset
        for k, subset in enumerate(itertools.combinations(range(1, H + 1), r), start=1)
    }
    users_of_relay = _transpose(relays_of_user)
    for h in range(1, H + 1):
        users_of_relay.setdefault(h, ())
    net = RelayNetwork(
        num_relays=H,
        num_users=len(relays_of_user),
        users_of_relay=dict(sorted(users_of_relay.items())),
        relays_of_user=relays_of_user,
        kind="combination",
        r=r,
    )
    net.validate()
    return net


def build_general_network(users_of_relay: Mapping[int, object]) -> RelayNetwork:
    """Arbitrary relay network from the per-relay user sets.

    Relay ids must be ``1..H`` and the union of user ids must be ``1..K``.
    Every user has to reach at least one relay.
    """
    if not users_of_relay:
        raise TopologyError("empty relay map")
    normalized: dict[int, tuple[int, ...]] = {}
    for h, users in users_of_relay.items():
        users = list(users)
        if len(set(users)) != len(users):
            raise TopologyError(f"duplicate user in relay {h}")
        normalized[int(h)] = tuple(sorted(int(u) for u in users))
    H = len(normalized)
    if set(normalized) != set(range(1, H + 1)):
        raise TopologyError("relay ids must be 1..H")
    all_users = set().union(*normalized.values())
    K = max(all_users) if all_users else 0
    orphans = sorted(set(range(1, K + 1)) - all_users)
    if K == 0 or orphans:
        raise TopologyError(f"users without a relay: {orphans or 'all'}")
    if min(all_users) < 1:
        raise TopologyError("user ids must start at 1")
    net = RelayNetwork(
        num_relays=H,
        num_users=K,
        users_of_relay=dict(sorted(normalized.items())),
        relays_of_user=_transpose(normalized),
        kind="general",
    )
    net.validate()
    return net


def parse_topology(text: str) -> RelayNetwork:
    """Parse the plain-text topology format.

    Either a single ``combination H=<int> r=<int>`` line, or ``general``
    followed by ``relay <id>: <user ids>`` lines.  ``#`` starts a comment.
    """
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise TopologyError("empty topology")
    head = lines[0].split()
    if head[0] == "combination":
        params = dict(tok.split("=", 1) for tok in head[1:])
        try:
            return build_combination_network(int(params["H"]), int(params["r"]))
        except (KeyError, ValueError) as exc:
            raise TopologyError(f"bad combination line: {lines[0]!r}") from exc
    if head[0] != "general":
        raise TopologyError(f"unknown topology kind {head[0]!r}")
    relays: dict[int, list[int]] = {}
    for ln in lines[1:]:
        key, _, rest = ln.partition(":")
        parts = key.split()
        if len(parts) != 2 or parts[0] != "relay" or not _:
            raise TopologyError(f"bad relay line: {ln!r}")
        users = rest.replace(",", " ").split()
        relays[int(parts[1])] = [int(u) for u in users]
    return build_general_network(relays)
