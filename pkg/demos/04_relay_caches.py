# Relays get caches too: part of each file is MDS-coded across relay caches.
from combcache.delivery import hybrid_deliver
from combcache.placement import hybrid_place
from combcache.topology import build_combination_network
from combcache.verifier import required_denominator, simulate_concrete, verify_decodability

net = build_combination_network(4, 2)
pl = hybrid_place(net, 6, M1=1, t3=1, t4=2)
print("coded part of each file:", pl.coded_length)
print("each relay stores per file:", pl.relay_units)
print("user cache used:", pl.params["M2"])

plan, (server, relay_user) = hybrid_deliver(net, pl, range(1, 7))
print("server->relay", server, "relay->user", relay_user)
print(plan.coded[:3])

print(all(r.passed for r in verify_decodability(net, pl, plan, range(1, 7))))
B = required_denominator(pl, plan)
print("B =", B, simulate_concrete(net, pl, plan, range(1, 7), B))

# relay memory against load
for M1 in (0, 1, 2, 3):
    hp = hybrid_place(net, 6, M1, 1, 2)
    _, pair = hybrid_deliver(net, hp, range(1, 7))
    print(M1, pair)
