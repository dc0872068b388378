import random

import pytest

from validus import sim
from validus.adversary import make_adversary
from validus.core import BinaryConsensus, CoreBinary, ProvableConsensus, ValueProofPair
from validus.node import Component, Node
from validus.sim import NetworkParams, RandomDelay, Scenario, Sync, validate_trace
from validus.validity import InputConfiguration as IC, SystemParams, ValueSpace

VALS = ValueSpace.same([0, 1, 2, 3])


def good(pair):
    return pair.proof == "ok" and pair.value in (0, 1, 2, 3)


class CoreRoot(Component):
    def __init__(self, port, proposal):
        super().__init__(port)
        self.proposal = proposal
        self.core = ProvableConsensus(port.sub("core"), good, self.done,
                                      alt=lambda: ValueProofPair((proposal + 1) % 4, "ok"))

    def start(self):
        self.core.propose(ValueProofPair(self.proposal, "ok"))

    def done(self, pair):
        self.port.note("decided_pair", ok=good(pair))
        self.port.decide(pair.value)


class BinRoot(Component):
    def __init__(self, port, bit, kind):
        super().__init__(port)
        self.bit = bit
        cls = BinaryConsensus if kind == "dbft" else CoreBinary
        self.bc = cls(port.sub("bin"), self.port.decide)

    def start(self):
        self.bc.propose(self.bit)


def core_factory(pid, v, byzantine=None):
    return Node(lambda port: CoreRoot(port, v), byzantine=byzantine)


def bin_factory(kind="dbft"):
    def make(pid, v, byzantine=None):
        return Node(lambda port: BinRoot(port, v, kind), byzantine=byzantine)
    return make


def build(factory, n, proposals, adversary=None, faulty=(), gst=0, seed=0, schedule=None,
          space=VALS, max_ticks=None, delta=1):
    params = SystemParams(n, (n - 1) // 3)
    props = IC(tuple((p, proposals[p - 1]) for p in params.processes if p not in faulty))
    behaviors = {}
    if adversary:
        adv = make_adversary(adversary, params, faulty=faulty)
        behaviors = {p: adv.behavior(p, factory, proposals[p - 1]) for p in faulty}
    return Scenario(params, NetworkParams(gst=gst, delta=delta, seed=seed), space, props, factory,
                    behaviors, schedule=schedule or Sync(),
                    max_ticks=max_ticks or gst + 200 * delta)


def views_entered(trace, proc):
    return [ev[4]["view"] for ev in trace.notes("view") if ev[1] == proc]


def assert_lock_sound(trace):
    decided = [(ev[4]["view"], ev[4]["digest"]) for ev in trace.notes("core_decide")
               if ev[1] in trace.correct]
    qcs = {(ev[4]["phase"], ev[4]["view"], ev[4]["digest"]) for ev in trace.notes("qc")}
    for w, d in decided:
        for phase, view, digest in qcs:
            assert not (view > w and digest != d), (phase, view, digest, w, d)


def test_core_happy_path_single_view():
    trace, _ = sim.run(build(core_factory, 4, [2, 2, 2, 2]))
    assert {v for v, _ in trace.decisions.values()} == {2}
    assert len(trace.decisions) == 4
    assert all(views_entered(trace, p) == [1] for p in range(1, 5))
    assert validate_trace(trace) == []


def test_core_silent_leader_moves_to_view_two():
    # leader of view 1 is P2
    trace, _ = sim.run(build(core_factory, 4, [0, 1, 2, 3], adversary="silent", faulty=(2,)))
    decided = trace.correct_decisions()
    assert set(decided) == {1, 3, 4}
    assert len({v for v, _ in decided.values()}) == 1
    core_views = {ev[4]["view"] for ev in trace.notes("core_decide")}
    assert core_views == {2}


@pytest.mark.parametrize("kind", ["invalid", "equivocate"])
def test_core_faulty_leader_fuzz(kind):
    rng = random.Random(kind)
    for seed in range(500 if kind == "invalid" else 200):
        n = rng.choice([4, 7])
        t = (n - 1) // 3
        faulty = tuple(sorted(rng.sample(range(1, n + 1), t)))
        props = [rng.randrange(4) for _ in range(n)]
        gst = rng.choice([0, 5, 20])
        sc = build(core_factory, n, props, faulty=faulty, gst=gst, seed=seed, schedule=RandomDelay())
        sc.behaviors = {p: (lambda p_: core_factory(p_, props[p_ - 1], kind)) for p in faulty}
        trace, _ = sim.run(sc)
        decided = trace.correct_decisions()
        assert set(decided) == trace.correct, seed
        values = {v for v, _ in decided.values()}
        assert len(values) == 1, seed
        assert all(ev[4]["ok"] for ev in trace.notes("decided_pair") if ev[1] in trace.correct)
        assert_lock_sound(trace)
        assert not trace.redecisions


def test_core_view_bound_after_gst():
    rng = random.Random(9)
    for seed in range(100):
        n = rng.choice([4, 7, 10])
        t = (n - 1) // 3
        faulty = tuple(sorted(rng.sample(range(1, n + 1), t)))
        props = [rng.randrange(4) for _ in range(n)]
        gst = rng.choice([0, 5, 13])
        trace, _ = sim.run(build(core_factory, n, props, adversary="silent", faulty=faulty,
                                 gst=gst, seed=seed, schedule=RandomDelay()))
        assert set(trace.correct_decisions()) == trace.correct
        for p in trace.correct:
            after = [ev for ev in trace.notes("view") if ev[1] == p and ev[0] >= gst]
            assert len(after) <= t + 2, (seed, p, after)


def test_core_agreement_with_late_gst():
    # safety does not depend on GST; use long pre-GST chaos
    rng = random.Random(4)
    for seed in range(60):
        props = [rng.randrange(4) for _ in range(4)]
        gst = rng.choice([50, 150, 400])
        trace, _ = sim.run(build(core_factory, 4, props, gst=gst, seed=seed,
                                 schedule=RandomDelay(), max_ticks=gst + 400))
        vals = {v for v, _ in trace.correct_decisions().values()}
        assert len(vals) <= 1
        assert_lock_sound(trace)


@pytest.mark.parametrize("kind", ["dbft", "core"])
@pytest.mark.parametrize("bit", [0, 1])
def test_binary_unanimous(kind, bit):
    trace, _ = sim.run(build(bin_factory(kind), 4, [bit] * 4, space=ValueSpace.binary()))
    assert {v for v, _ in trace.decisions.values()} == {bit}
    assert len(trace.decisions) == 4


def test_binary_fuzz_mixed():
    rng = random.Random(17)
    advs = ["silent", "crash_at:3", "equivocate_leader"]
    for seed in range(500):
        n = rng.choice([4, 7])
        t = (n - 1) // 3
        faulty = tuple(sorted(rng.sample(range(1, n + 1), t)))
        props = [rng.randrange(2) for _ in range(n)]
        gst = rng.choice([0, 5])
        sc = build(bin_factory(), n, props, adversary=advs[seed % 3], faulty=faulty, gst=gst,
                   seed=seed, schedule=RandomDelay(), space=ValueSpace.binary())
        trace, _ = sim.run(sc)
        decided = trace.correct_decisions()
        assert set(decided) == trace.correct, seed
        values = {v for v, _ in decided.values()}
        assert len(values) == 1, seed
        correct_props = {props[p - 1] for p in trace.correct}
        assert values <= correct_props, seed
        assert validate_trace(trace) == []


def test_binary_strong_validity_under_equivocation():
    for seed in range(100):
        sc = build(bin_factory(), 4, [1, 1, 1, 0], adversary="equivocate_leader", faulty=(4,),
                   seed=seed, schedule=RandomDelay(), space=ValueSpace.binary())
        trace, _ = sim.run(sc)
        assert {v for v, _ in trace.correct_decisions().values()} == {1}
