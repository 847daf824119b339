"""Closed-form loads and published reference values."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb


def binom(x: int, y: int) -> int:
    """Binomial coefficient, zero when ``x < 0``, ``y < 0`` or ``x < y``."""
    if x < 0 or y < 0 or x < y:
        return 0
    return comb(x, y)


def counting_sum_x(H: int, t: int) -> Fraction:
    """The counting sum ``X_{K,H}`` behind the r=2 load formula."""
    pairs_off = binom(H - 2, 2)  # users reaching neither relay of a fixed user
    X = Fraction(0)
    for b1 in range(0, min(t, H - 2) + 1):
        X += Fraction(1, b1 + 1) * binom(H - 2, b1) ** 2 * binom(pairs_off, t - 2 * b1)
        for b2 in range(0, b1):
            X += Fraction(2, b1 + 1) * binom(H - 2, b1) * binom(H - 2, b2) * binom(pairs_off, t - b1 - b2)
    return X


def closed_form_load_r2(H: int, t: int) -> Fraction:
    """Max link-load of the delivery on an ``r = 2`` combination network."""
    if H < 3:
        raise ValueError("closed form needs H >= 3")
    K = comb(H, 2)
    if not 0 <= t <= K:
        raise ValueError(f"t must lie in [0, {K}]")
    return K * counting_sum_x(H, t) / (H * comb(K, t))


def shared_link_cman_load(K: int, t: int) -> Fraction:
    """``C(K, t+1) / C(K, t) = (K - t) / (1 + t)``."""
    if not 0 <= t <= K:
        raise ValueError(f"t must lie in [0, {K}]")
    return Fraction(binom(K, t + 1), comb(K, t))


def shared_link_dman_load(K: int, M, N: int) -> Fraction:
    M = Fraction(M)
    if not 0 <= M <= N:
        raise ValueError("M must lie in [0, N]")
    if M == 0:
        return Fraction(K)
    q = M / N
    return (1 / q - 1) * (1 - (1 - q) ** K)


@dataclass(frozen=True)
class ReferenceConstant:
    scheme: str
    scenario: str
    value: Fraction
    citation: str
    note: str = ""


_F = Fraction

REFERENCE_CONSTANTS: tuple[ReferenceConstant, ...] = (
    # H=4, r=2, N=K=6, M=2
    ReferenceConstant("interference-elimination", "h4r2", _F(17, 30), "novelwan2017"),
    ReferenceConstant("routing/network-coding", "h4r2", _F(20, 30), "cachingincom"),
    ReferenceConstant("interference-alignment", "h4r2", _F(20, 30), "multiserver"),
    ReferenceConstant("mds-coded-placement", "h4r2", _F(15, 30), "Zewail2017codedcaching"),
    # symmetric 5-relay network
    ReferenceConstant("interference-elimination", "symmetric5", _F(4, 15), "novelwan2017"),
    ReferenceConstant("mds-coded-placement", "symmetric5", _F(13, 45), "Zewail2017codedcaching"),
    ReferenceConstant("routing/network-coding", "symmetric5", _F(1, 3), "cachingincom"),
    ReferenceConstant("interference-alignment", "symmetric5", _F(3, 5), "multiserver"),
    # asymmetric 5-relay network
    ReferenceConstant("interference-elimination", "lopsided5", _F(1, 3), "novelwan2017"),
    ReferenceConstant("routing/network-coding", "lopsided5", _F(1, 2), "cachingincom"),
    ReferenceConstant("interference-alignment", "lopsided5", _F(3, 5), "multiserver"),
    ReferenceConstant("cut-set-bound", "lopsided5", _F(3, 10), "novelwan2017"),
    # cache-aided relays and users, load pair (server->relay, relay->user)
    ReferenceConstant("mds-coded-placement/server-relay", "relay-cache", _F(1, 3), "Zewail2017codedcaching"),
    ReferenceConstant("mds-coded-placement/relay-user", "relay-cache", _F(1, 3), "Zewail2017codedcaching"),
    ReferenceConstant("published-srds/relay-user", "relay-cache", _F(1, 3), "this-scheme",
                      note="exact accounting of the described scheme gives 13/36"),
    # H=6, r=3, N=K=20 straight line for M <= 1
    ReferenceConstant("interference-elimination@M=0", "h6r3", _F(10, 3), "novelwan2017"),
    ReferenceConstant("interference-elimination@M=1", "h6r3", _F(8, 5), "novelwan2017"),
)


def reference_table(scenario: str) -> list[ReferenceConstant]:
    rows = [c for c in REFERENCE_CONSTANTS if c.scenario == scenario]
    if not rows:
        raise KeyError(f"no reference values for scenario {scenario!r}")
    return rows


def scenarios() -> list[str]:
    return sorted({c.scenario for c in REFERENCE_CONSTANTS})
