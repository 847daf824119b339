"""Link-load accounting for delivery plans."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING

from .topology import RelayNetwork

if TYPE_CHECKING:
    from .delivery import DeliveryPlan


@dataclass
class LoadReport:
    server_to_relay: dict[int, Fraction]
    relay_to_user: dict[tuple[int, int], Fraction]

    @property
    def max_server_to_relay(self) -> Fraction:
        return max(self.server_to_relay.values(), default=Fraction(0))

    @property
    def max_relay_to_user(self) -> Fraction:
        return max(self.relay_to_user.values(), default=Fraction(0))

    @property
    def max_link_load(self) -> Fraction:
        return max(self.max_server_to_relay, self.max_relay_to_user)


def compute_loads(plan: "DeliveryPlan", network: RelayNetwork) -> LoadReport:
    """Normalized loads ``R_h`` and ``R_{h->k}`` of a plan.

    Coded units served from relay caches (hybrid placements) use only the
    relay-to-user links.
    """
    R_h = {h: Fraction(0) for h in network.relays}
    R_hk = {(h, k): Fraction(0) for h in network.relays for k in network.users_of_relay[h]}
    for m in plan.messages:
        R_h[m.relay] += m.length
        for k in m.users:
            R_hk[(m.relay, k)] += m.length
    for c in plan.coded:
        R_hk[(c.relay, c.user)] += c.amount
    return LoadReport(R_h, R_hk)
