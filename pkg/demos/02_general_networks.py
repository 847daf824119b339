# Two 5-relay, 5-user networks that differ in one relay's users.
from combcache.delivery import rebalance, srds_deliver
from combcache.loads import compute_loads
from combcache.placement import cman_place
from combcache.topology import build_general_network

symmetric = build_general_network({1: [1, 2, 3], 2: [1, 3, 4], 3: [1, 4, 5], 4: [2, 4, 5], 5: [2, 3, 5]})
lopsided = build_general_network({1: [1, 2, 3], 2: [1, 3, 4], 3: [1, 4, 5], 4: [3, 4, 5], 5: [2, 3, 5]})
pl = cman_place(5, 5, 2)

plan = srds_deliver(symmetric, pl, range(1, 6))
print("symmetric:", compute_loads(plan, symmetric).server_to_relay)

plan = srds_deliver(lopsided, pl, range(1, 6))
print("lopsided: ", compute_loads(plan, lopsided).server_to_relay)
print("relays per user:", {k: len(hs) for k, hs in lopsided.relays_of_user.items()})

# buckets that came up short borrowed bits from larger known-sets
for rec in plan.ledger:
    print(f"relay {rec.relay} users {rec.users}: user {rec.user} short {rec.deficit}, took {rec.takes}")

for (h, J), L in sorted(plan.lengths_by_key().items()):
    print(f"  W^{h}_{J} length {L}")

# move traffic off the two busiest relays
after = rebalance(plan, lopsided)
for src, dst, J, amount in after.moves:
    print(f"moved {amount} of the {J} message from relay {src} to relay {dst}")
print("after:    ", compute_loads(after, lopsided).server_to_relay)
print("max link-load", compute_loads(after, lopsided).max_link_load)
