# For two relays per user the max link-load has a closed form; check it and sweep memory.
from math import comb

from combcache.analysis import closed_form_load_r2, reference_table
from combcache.delivery import srds_deliver
from combcache.lengths import srds_lengths
from combcache.loads import compute_loads
from combcache.placement import cman_place
from combcache.topology import build_combination_network

for H in (3, 4, 5):
    net = build_combination_network(H, 2)
    K = net.num_users
    for t in range(K + 1):
        sim = compute_loads(srds_deliver(net, cman_place(K, K, t), range(1, K + 1)), net).max_link_load
        print(H, t, closed_form_load_r2(H, t), sim)

# H=6, r=3: 20 users; count lengths only, the full subfile table is too big near t=10
net = build_combination_network(6, 3)
for t in range(21):
    print(f"M={t:2d}  R={float(srds_lengths(net, t).max_link_load):.4f}")
print(reference_table("h6r3"))
print("subfiles per file at t=10:", comb(20, 10))
