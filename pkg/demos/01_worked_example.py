# H=4 relays, every user on 2 of them: 6 users, 6 files, each user caches 2 files' worth.
from fractions import Fraction

from combcache.delivery import partition_subfiles, srds_deliver
from combcache.loads import compute_loads
from combcache.placement import cman_place
from combcache.topology import build_combination_network

net = build_combination_network(4, 2)
print(net.describe())
print(net.relays_of_user)

# t = K*M/N = 2: every file cut into C(6,2) = 15 subfiles
pl = cman_place(6, 6, 2)
print(len(pl.subfiles_of(1)), "subfiles per file")

# what relay 1 must carry, bucketed by (user, users that already know it)
table = partition_subfiles(net, pl, range(1, 7))
for (h, k, known), ts in table.items():
    if h == 1:
        print(f"user {k}, known by {known}: {ts.segments}  length {ts.length}")

plan = srds_deliver(net, pl, range(1, 7))
for m in plan.messages:
    if m.relay == 1:
        print("relay 1 sends XOR for users", m.users, "length", m.length)

report = compute_loads(plan, net)
print("server->relay", report.server_to_relay)
print("max link-load", report.max_link_load, "=", float(report.max_link_load))
assert report.max_link_load == Fraction(7, 15)
