"""
Counting messages
=================

Message and word counts after GST for each vector back end as n doubles,
with t = floor((n-1)/3) silent processes.  Doubling n should roughly
quadruple the message count when the protocol is quadratic.
"""

from validus.bench import doubling_ratios, summary, sweep
from validus.scenario import lower_bound_spec, run_spec

for proto, sizes in [("vector/auth", [4, 8, 16]), ("vector/lowcomm", [4, 8, 16]),
                     ("vector/nonauth", [4, 8])]:
    rows = sweep(proto, sizes)
    print(f"== {proto}")
    print(summary(rows))
    print()

# the lower-bound adversary: half of the faulty set drops its first few
# messages and never talks to the other half; correct processes still send
# far more than ceil(t/2)^2 messages
for n, t, proto in [(10, 3, "universal/auth"), (16, 5, "vector/auth")]:
    res = run_spec(lower_bound_spec(n, t, proto))
    k = -(-t // 2)
    print(f"lower-bound adversary n={n} t={t}: {res.metrics.msgs_after_gst} messages from correct "
          f"processes, ceil(t/2)^2 = {k * k}, ok={res.ok}")
