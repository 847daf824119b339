# Break a plan on purpose and watch the checkers notice.
from dataclasses import replace

from combcache.delivery import srds_deliver
from combcache.placement import cman_place
from combcache.topology import build_combination_network
from combcache.verifier import reports_to_json, simulate_concrete, verify_decodability

net = build_combination_network(4, 2)
pl = cman_place(6, 6, 2)
plan = srds_deliver(net, pl, range(1, 7))

# drop one message
cut = replace(plan, messages=plan.messages[1:])
print("dropped", plan.messages[0].relay, plan.messages[0].users)
print(reports_to_json(verify_decodability(net, pl, cut, range(1, 7))))

# flip one bit in transit
idx = next(i for i, m in enumerate(plan.messages) if m.users == (1, 2))
print(simulate_concrete(net, pl, plan, range(1, 7), 30, corrupt=(idx, 0)))

# a user asks for the same file as a neighbour
demand = (1, 1, 2, 2, 3, 3)
plan = srds_deliver(net, pl, demand)
print(all(r.passed for r in verify_decodability(net, pl, plan, demand)))
