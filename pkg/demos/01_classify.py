"""
Which validity properties can be solved?
=========================================

Walks through a handful of properties over binary inputs and prints what
the classifier says, along with a few entries of the Lambda table.
"""

from validus import validity as V

binary = V.ValueSpace.same([0, 1])

# strong validity: if every correct process proposed the same value, decide it
for n, t in [(3, 1), (4, 1), (7, 2)]:
    rep = V.classify(V.strong(), V.SystemParams(n, t), binary)
    print(f"strong      n={n} t={t}: {rep.verdict}")

# weak validity only constrains runs with no faults at all
rep = V.classify(V.weak(), V.SystemParams(3, 1), binary)
print(f"weak        n=3 t=1: {rep.verdict}")

# a constant is trivially fine, whatever n and t are
rep = V.classify(V.constant(1), V.SystemParams(3, 1), binary)
print(f"constant:1  n=3 t=1: {rep.verdict} (witness {rep.trivial_witness})")

# correct_proposal over three values breaks down even with n > 3t;
# the report carries the configuration where no common value exists
rep = V.classify(V.correct_proposal(), V.SystemParams(4, 1), V.ValueSpace.same([0, 1, 2]))
print(f"correct_proposal over {{0,1,2}} n=4 t=1: {rep.verdict}, stuck at {rep.cs_counterexample}")

# %%
# Lambda picks, for each vector of n - t proposals, a value that stays
# admissible whatever the missing processes actually proposed.
params = V.SystemParams(4, 1)
lam = V.classify(V.strong(), params, binary).lambda_table
print(f"\nLambda for strong at n=4, t=1 has {len(lam)} entries; a few of them:")
for c in list(lam)[:6]:
    others = V.sim_set(c, params, binary)
    print(f"  {c!r:>24} -> {lam(c)}   ({len(others)} similar configurations)")

# the same table, as the CLI would write it
print()
print(lam.to_csv().splitlines()[0])
print(lam.to_csv().splitlines()[1])
