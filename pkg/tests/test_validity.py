import itertools

import pytest
from hypothesis import given, settings, strategies as st

import oracle
from validus import validity as V
from validus.errors import BudgetExceeded, LambdaUndefined, SchemaError, TableMissingEntry
from validus.validity import InputConfiguration as IC, SystemParams, ValueSpace

BIN = ValueSpace.binary()
P31 = SystemParams(3, 1)
P41 = SystemParams(4, 1)


def ic(*pairs):
    return IC(tuple(pairs))


def test_params_and_space_validation():
    assert P41.supermajority and not P31.supermajority
    with pytest.raises(ValueError):
        SystemParams(3, 0)
    with pytest.raises(ValueError):
        SystemParams(3, 3)
    with pytest.raises(ValueError):
        ValueSpace((0, 0), (0,))
    with pytest.raises(ValueError):
        ValueSpace((), (0,))


def test_configuration_sorted_and_distinct():
    c = ic((3, 0), (1, 1))
    assert c.pairs == ((1, 1), (3, 0))
    assert c == ic((1, 1), (3, 0))
    with pytest.raises(ValueError):
        ic((1, 0), (1, 1))
    with pytest.raises(ValueError):
        ic((1, 0)).validate(P31)


def test_similar_paper_examples():
    c = ic((1, 0), (2, 1), (3, 0))
    assert V.similar(c, ic((1, 0), (3, 0)))
    assert not V.similar(c, ic((1, 0), (2, 0)))
    assert V.similar(c, c)


def test_compatible_paper_examples():
    c = ic((1, 0), (2, 0))
    assert V.compatible(c, ic((1, 1), (3, 1)), t=1)
    assert not V.compatible(c, ic((1, 1), (2, 1), (3, 1)), t=1)
    assert not V.compatible(c, c, t=1)


def test_enumerate_counts():
    space1 = ValueSpace.same(["v"])
    got = V.enumerate_configs(SystemParams(2, 1), space1, sizes=[1, 2])
    assert got == [ic((1, "v")), ic((2, "v")), ic((1, "v"), (2, "v"))]
    # C(3,2) * 2^2 and C(4,3)*2^3 + C(4,4)*2^4 from the independent enumerator
    assert len(V.enumerate_configs(P31, BIN, sizes=[2])) == 12
    assert len(V.enumerate_configs(P41, BIN, sizes=[3, 4])) == 48
    assert len(oracle.all_configs(4, 1, [0, 1])) == 48


def test_enumerate_canonical_order_and_uniqueness():
    got = V.enumerate_configs(P41, BIN)
    assert len(set(got)) == len(got)
    keys = [(len(c), [p for p, _ in c], c.values()) for c in got]
    assert keys == sorted(keys)


def test_budget_exceeded():
    with pytest.raises(BudgetExceeded):
        V.enumerate_configs(P41, BIN, budget=10)


def test_budget_env_override(monkeypatch):
    monkeypatch.setenv("VALIDUS_BUDGET", "5")
    with pytest.raises(BudgetExceeded):
        V.check_trivial(V.strong(), P41, BIN)


def test_sim_set_examples():
    c = ic((1, 0), (2, 1), (3, 0))
    s = V.sim_set(c, P31, BIN)
    assert ic((1, 0), (3, 0)) in s
    assert ic((1, 0), (2, 0)) not in s
    assert c in s
    c4 = ic((1, 0), (2, 0), (3, 0))
    assert len(V.sim_set(c4, P41, BIN)) == 9


def test_sim_set_matches_filter_over_everything():
    everything = V.enumerate_configs(P41, BIN)
    for c in everything:
        expected = [x for x in everything if V.similar(c, x)]
        assert V.sim_set(c, P41, BIN) == expected


def test_admissible_builtins():
    full = ic((1, 1), (2, 1), (3, 1))
    assert not V.admissible(V.strong(), full, 0, P31, BIN)
    assert V.admissible(V.strong(), full, 1, P31, BIN)
    partial = ic((1, 0), (2, 0))
    assert V.admissible(V.weak(), partial, 1, P31, BIN)
    assert not V.admissible(V.weak(), ic((1, 0), (2, 0), (3, 0)), 1, P31, BIN)
    assert V.admissible(V.correct_proposal(), ic((1, 0), (2, 1)), 1, P31, BIN)
    assert not V.admissible(V.correct_proposal(), ic((1, 0), (2, 0)), 1, P31, BIN)
    with pytest.raises(ValueError):
        V.admissible(V.strong(), full, 7, P31, BIN)


def test_interval_property():
    space = ValueSpace.same([0, 1, 2, 3])
    c = ic((1, 1), (2, 3), (3, 1))
    assert V.interval().admissible_set(c, SystemParams(4, 1), space) == {1, 2, 3}


def test_table_property_missing_entry_and_eager_check():
    c = ic((1, 0), (2, 0))
    prop = V.from_table({c: [0]})
    assert V.admissible(prop, c, 0, P31, BIN)
    with pytest.raises(TableMissingEntry):
        V.admissible(prop, ic((1, 1), (2, 0)), 0, P31, BIN)
    with pytest.raises(ValueError):
        V.from_table({c: []})


def test_property_json_roundtrip(tmp_path):
    c = ic((1, 0), (2, 1))
    for prop in (V.strong(), V.weak(), V.correct_proposal(), V.constant(1), V.interval(),
                 V.from_table({c: [0, 1]})):
        assert V.property_from_json(V.property_to_json(prop)) == prop
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "table", "table": [{"config": [[1, 0]]}]}')
    with pytest.raises(SchemaError, match=r"table\[0\]"):
        V.load_property(bad)
    bad.write_text('{"kind": ')
    with pytest.raises(SchemaError):
        V.load_property(bad)


def test_check_trivial():
    assert V.check_trivial(V.constant(1), P31, BIN) == 1
    assert V.check_trivial(V.strong(), P31, BIN) is None
    assert V.check_trivial(V.weak(), P31, BIN) is None


def test_compute_lambda_examples():
    table = V.compute_lambda(V.strong(), P41, BIN)
    assert table(ic((1, 0), (2, 0), (3, 0))) == 0
    assert table(ic((1, 1), (2, 1), (4, 1))) == 1
    assert len(table) == 32
    const = V.compute_lambda(V.constant(1), P41, BIN)
    assert set(const.entries.values()) == {1}
    assert len(V.compute_lambda(V.weak(), P41, BIN)) == 32


def test_compute_lambda_counterexample():
    space = ValueSpace.same([0, 1, 2])
    with pytest.raises(LambdaUndefined) as err:
        V.compute_lambda(V.correct_proposal(), P41, space)
    c = err.value.counterexample
    assert len(c) == 3
    assert V.common_admissible(V.correct_proposal(), c, P41, space) == ()


def test_lambda_chooser_hook():
    table = V.compute_lambda(V.weak(), P41, BIN, chooser=lambda cands: cands[-1])
    assert table(ic((1, 0), (2, 1), (3, 0))) == 1


def test_lambda_csv_roundtrip():
    table = V.compute_lambda(V.strong(), P41, BIN)
    text = table.to_csv()
    assert text.splitlines()[0] == "config_id,config,lambda_value"
    back = V.LambdaTable.from_csv(text, P41, BIN)
    assert back.entries == table.entries
    with pytest.raises(SchemaError):
        V.LambdaTable.from_csv("a,b\n1,2\n", P41, BIN)


def test_lambda_evaluator_agrees_with_table():
    table = V.compute_lambda(V.strong(), P41, BIN)
    ev = V.LambdaEvaluator(V.strong(), P41, BIN)
    for c, v in table.items():
        assert ev(c) == v


def test_classify_examples():
    assert V.classify(V.weak(), P31, BIN).verdict == V.UNSOLVABLE
    rep = V.classify(V.strong(), P41, BIN)
    assert rep.verdict == V.SOLVABLE_UNIVERSAL and rep.lambda_table is not None
    assert any("t^2" in note for note in rep.notes)
    rep = V.classify(V.constant(0), P31, BIN)
    assert rep.verdict == V.SOLVABLE_TRIVIAL and rep.trivial_witness == 0
    rep = V.classify(V.correct_proposal(), P41, ValueSpace.same([0, 1, 2]))
    assert rep.verdict == V.UNSOLVABLE and rep.cs_counterexample is not None


def _report_invariants(rep, params):
    if rep.verdict == V.SOLVABLE_TRIVIAL:
        assert rep.trivial_witness is not None
    if rep.verdict == V.SOLVABLE_UNIVERSAL:
        assert params.supermajority and rep.lambda_table is not None
    if rep.verdict == V.UNSOLVABLE:
        assert (not params.supermajority and rep.trivial_witness is None) or rep.cs_counterexample


BUILTINS = [
    (V.strong(), oracle.strong),
    (V.weak(), oracle.weak),
    (V.correct_proposal(), oracle.correct_proposal),
    (V.constant(0), oracle.constant(0)),
    (V.constant(1), oracle.constant(1)),
    (V.interval(), oracle.interval),
]


@pytest.mark.parametrize("n,t", [(3, 1), (4, 1), (5, 1), (3, 2)])
@pytest.mark.parametrize("values", [[0, 1], [0, 1, 2]])
def test_classify_matches_oracle(n, t, values):
    params, space = SystemParams(n, t), ValueSpace.same(values)
    for prop, ref in BUILTINS:
        rep = V.classify(prop, params, space)
        assert rep.verdict == oracle.verdict(ref, n, t, values), prop
        _report_invariants(rep, params)


# -- exhaustive invariants --------------------------------------------------

@pytest.mark.parametrize("n,t", [(2, 1), (3, 1), (4, 1), (3, 2), (4, 2)])
def test_relations_symmetric_reflexive(n, t):
    params = SystemParams(n, t)
    everything = V.enumerate_configs(params, BIN)
    for a in everything:
        assert V.similar(a, a)
        assert not V.compatible(a, a, t)
    for a, b in itertools.combinations(everything, 2):
        assert V.similar(a, b) == V.similar(b, a)
        assert V.compatible(a, b, t) == V.compatible(b, a, t)


@pytest.mark.parametrize("prop", [V.strong(), V.weak(), V.correct_proposal(), V.interval()])
def test_lambda_entries_admissible_for_whole_sim_set(prop):
    table = V.compute_lambda(prop, P41, BIN)
    for c, v in table.items():
        for other in V.sim_set(c, P41, BIN):
            assert V.admissible(prop, other, v, P41, BIN)


def test_trivial_witness_admissible_everywhere():
    space = ValueSpace.same([0, 1, 2])
    prop = V.from_table({c: ({2} | set(c.values())) for c in V.enumerate_configs(P31, space)})
    w = V.check_trivial(prop, P31, space)
    assert w == 2
    for c in V.enumerate_configs(P31, space):
        assert V.admissible(prop, c, w, P31, space)


def test_strong_and_correct_proposal_agree_on_unanimous():
    for c in V.enumerate_configs(P41, ValueSpace.same([0, 1, 2])):
        vals = set(c.values())
        if len(vals) == 1:
            space = ValueSpace.same([0, 1, 2])
            assert V.strong().admissible_set(c, P41, space) == vals
            assert V.correct_proposal().admissible_set(c, P41, space) == vals


@st.composite
def config_pairs(draw):
    n = draw(st.integers(2, 6))
    t = draw(st.integers(1, n - 1))
    procs = st.lists(st.integers(1, n), min_size=n - t, max_size=n, unique=True)
    a = draw(procs)
    b = draw(procs)
    vals = st.sampled_from([0, 1, 2])
    ca = IC(tuple((p, draw(vals)) for p in a))
    cb = IC(tuple((p, draw(vals)) for p in b))
    return t, ca, cb


@settings(max_examples=300, deadline=None)
@given(config_pairs())
def test_relations_match_oracle(case):
    t, a, b = case
    assert V.similar(a, b) == oracle.is_similar(a.as_dict(), b.as_dict())
    pa, pb = a.processes, b.processes
    assert V.compatible(a, b, t) == (len(pa & pb) <= t and bool(pa - pb) and bool(pb - pa))
