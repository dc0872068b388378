"""
Universal in action
===================

Runs the generic protocol for strong validity at n = 4 with one silent
process, then again with a process that lies about its proposal, and shows
what each correct process saw.
"""

from validus import validity as V
from validus.scenario import ScenarioSpec, run_spec


def show(spec):
    res = run_spec(spec)
    print(f"--- {spec.name}")
    for ev in res.trace.notes("universal"):
        tick, proc, _, _, data = ev
        print(f"  t={tick:>3} P{proc} vector {data['vector']!r} -> decides {data['value']}")
    m = res.metrics
    print(f"  ok={res.ok}  messages after GST={m.msgs_after_gst}  words={m.words_after_gst}  latency={m.latency}")
    return res


strong = V.property_to_json(V.strong())

# everybody correct proposes 1, P4 never speaks
show(ScenarioSpec(n=4, t=1, protocol="universal/auth", proposals=[[1, 1], [2, 1], [3, 1]],
                  property=strong, adversary="silent", name="unanimous, P4 silent"))

# P1 tells half the system it proposed 0 and the other half 1; the vector
# may contain either, but Lambda cannot be pushed off 1
show(ScenarioSpec(n=4, t=1, protocol="universal/auth", proposals=[[2, 1], [3, 1], [4, 1]],
                  property=strong, adversary="equivocate_leader", faulty_proposal=0,
                  schedule="random", gst=4, seed=3, name="unanimous, P1 equivocates"))

# mixed proposals: strong validity allows either value
show(ScenarioSpec(n=4, t=1, protocol="universal/nonauth", proposals=[[1, 0], [2, 1], [3, 0], [4, 1]],
                  property=strong, name="mixed proposals, no signatures"))

# the same thing over the low-communication back end
show(ScenarioSpec(n=7, t=2, protocol="universal/lowcomm",
                  proposals=[[1, 0], [2, 1], [3, 1], [4, 0], [5, 1]],
                  property=V.property_to_json(V.correct_proposal()), adversary="crash_at:3",
                  name="correct_proposal at n=7, two crashes"))
