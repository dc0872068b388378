"""
Spreading a vector without flooding
===================================

Each process slow-broadcasts a vector: P_i waits delta * n^(i-1) between
sends, so P1 finishes first and the rest stop as soon as a threshold
signature over some digest comes back.  Prints the send timeline at n = 4.
"""

from validus.scenario import ScenarioSpec, dissemination_verdict, run_spec

spec = ScenarioSpec(n=4, t=1, protocol="dissemination", proposals=[[1, 0], [2, 1], [3, 1], [4, 1]],
                    name="dissemination n=4")
res = run_spec(spec)

slow = {}
for env in res.trace.envelopes:
    if env.msg_type == "SLOW_BROADCAST":
        slow.setdefault(env.sender, []).append(env.send_time)
for p in sorted(slow):
    print(f"P{p} slow sends at ticks {slow[p]}")

for ev in res.trace.notes("acquire"):
    print(f"P{ev[1]} acquired digest {ev[4]['digest']} at tick {ev[0]}")

print(dissemination_verdict(res.trace))

# %%
# Under a late GST with random delays, the slow senders with large indices
# barely get going before everybody has what they need.
spec = ScenarioSpec(n=7, t=2, protocol="dissemination",
                    proposals=[[1, 0], [2, 1], [3, 1], [4, 0], [5, 1]], adversary="silent",
                    gst=10, schedule="random", seed=4)
d = dissemination_verdict(run_spec(spec).trace)
print(f"n=7, gst=10: last acquire at {d['last_acquire']}, heavy slow senders {d['heavy_slow_senders']}, "
      f"redundancy {d['redundancy']}")
