# Random (decentralized) placement: each user caches M/N of every file, chosen at random.
import numpy as np

from combcache.analysis import shared_link_dman_load
from combcache.delivery import decentralized_deliver
from combcache.loads import compute_loads
from combcache.placement import dman_place
from combcache.topology import build_combination_network
from combcache.verifier import required_denominator, simulate_concrete, verify_decodability

net = build_combination_network(6, 2)
K = N = 15

pl = dman_place(K, N, 5, seed=1, B_concrete=300)
sizes = {}
for sf in pl.subfiles_of(1):
    sizes.setdefault(len(sf.cache_set), []).append(float(sf.segment.length))
for size in sorted(sizes):
    print(f"|W|={size}: {len(sizes[size]):5d} subfiles, total share {sum(sizes[size]):.3f}")

plan = decentralized_deliver(net, pl, range(1, K + 1))
print(len(plan.messages), "messages")
print("max link-load", float(compute_loads(plan, net).max_link_load))
print("shared-link reference", float(shared_link_dman_load(K, 5, N)))

reports = verify_decodability(net, pl, plan, range(1, K + 1))
print("symbolic check:", all(r.passed for r in reports))
B = required_denominator(pl, plan)
print("bit-level run at B =", B, simulate_concrete(net, pl, plan, range(1, K + 1), B))

# load against memory, a few seeds each
for M in (1, 3, 5, 10, 15):
    loads = [float(compute_loads(decentralized_deliver(net, dman_place(K, N, M, seed=s, B_concrete=150),
                                                       range(1, K + 1)), net).max_link_load)
             for s in range(3)]
    print(M, np.round(loads, 3))
