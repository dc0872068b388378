"""Acceptance checks, one group per criterion.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary.  ``python3 tests/test_acceptance.py``
does the same without pytest's collection output.
"""

import math
import random
import time
from functools import lru_cache

import pytest

import oracle
from validus import validity as V
from validus.broadcast import BrbEcho, BrbReady, BrbSend
from validus.node import Component, Node
from validus.protocols import make_factory
from validus.sim import NetworkParams, RandomDelay, Scenario, run as sim_run, validate_trace
from validus.bench import GOLDEN_MSGS, RATIO_BAND, doubling_ratios, sweep
from validus.scenario import (ScenarioSpec, brb_verdict, bundled, dissemination_verdict, fuzz_spec,
                              lower_bound_spec, metrics_csv, run_spec, silent_spec)

DETAILS: dict = {}
BIN = [0, 1]
ORACLES = {
    "strong": (V.strong(), oracle.strong),
    "weak": (V.weak(), oracle.weak),
    "correct_proposal": (V.correct_proposal(), oracle.correct_proposal),
    "interval": (V.interval(), oracle.interval),
    "constant:0": (V.constant(0), oracle.constant(0)),
    "constant:1": (V.constant(1), oracle.constant(1)),
}
FUZZ_SEEDS = 500


def note(name, text):
    DETAILS[name] = text


# -- 1: classification --------------------------------------------------------------

@pytest.mark.acceptance(1)
def test_c1_classification_matches_brute_force():
    space = V.ValueSpace.same(BIN)
    spent = 0.0
    got = {}
    for n, t in [(3, 1), (4, 1), (5, 1), (7, 2)]:
        params = V.SystemParams(n, t)
        for name, (prop, ref) in ORACLES.items():
            t0 = time.perf_counter()
            rep = V.classify(prop, params, space)
            spent += time.perf_counter() - t0
            want = oracle.verdict(ref, n, t, BIN)
            assert rep.verdict == want, (name, n, t, rep.verdict, want)
            got[(name, n, t)] = rep.verdict
    assert got[("strong", 4, 1)] == V.SOLVABLE_UNIVERSAL
    assert got[("weak", 3, 1)] == V.UNSOLVABLE
    assert all(got[(c, n, t)] == V.SOLVABLE_TRIVIAL for c in ("constant:0", "constant:1")
               for n, t in [(3, 1), (4, 1), (5, 1), (7, 2)])
    note("test_c1_classification_matches_brute_force", f"24 verdicts match, classify took {spent:.2f}s")
    assert spent < 30


# -- 2: Lambda soundness ---------------------------------------------------------------

@pytest.mark.acceptance(2)
@pytest.mark.parametrize("n,t", [(4, 1), (7, 2)])
def test_c2_lambda_sound(n, t):
    space = V.ValueSpace.same(BIN)
    params = V.SystemParams(n, t)
    everything = oracle.all_configs(n, t, BIN)
    t0 = time.perf_counter()
    checked = 0
    for name, (prop, ref) in ORACLES.items():
        rep = V.classify(prop, params, space)
        if rep.lambda_table is None:
            continue
        adm = [(c, ref(c, n, BIN)) for c in everything]
        for c, v in rep.lambda_table.items():
            mine = c.as_dict()
            for other, ok in adm:
                if oracle.is_similar(mine, other):
                    assert v in ok, (name, c, v, other)
            checked += 1
    spent = time.perf_counter() - t0
    note(f"test_c2_lambda_sound[{n}-{t}]", f"{checked} entries checked in {spent:.1f}s")
    assert spent < 60


# -- 3 and 4: fuzzing ---------------------------------------------------------------------

@lru_cache(maxsize=None)
def fuzz(backend, universal):
    fails = []
    canonical_41 = []
    for seed in range(FUZZ_SEEDS):
        spec = fuzz_spec(backend, seed, universal=universal)
        res = run_spec(spec)
        v = res.verdict
        needed = ["termination", "agreement", "validity" if universal else "vector_validity"]
        bad = [k for k in needed if v.get(k) is not True] + (["model"] if v["model_violations"] else [])
        if universal and v.get("lambda_consistent") is False:
            bad.append("lambda")
        if bad:
            fails.append((seed, spec.n, spec.adversary, bad))
        if universal and spec.n == 4 and res.trace.canonical:
            decided = {val for val, _ in res.trace.correct_decisions().values()}
            canonical_41.append((spec, decided))
    return fails, canonical_41


def _fuzz_check(backend, universal, name):
    fails, _ = fuzz(backend, universal)
    kinds = {}
    for seed, n, adv, bad in fails:
        key = (n, adv.split(":")[0], tuple(bad))
        kinds[key] = kinds.get(key, 0) + 1
    note(name, f"{FUZZ_SEEDS - len(fails)}/{FUZZ_SEEDS} clean"
               + (f"; failures {sorted(kinds.items())}, seeds {[f[0] for f in fails][:10]}" if fails else ""))
    assert not fails, fails[:10]


@pytest.mark.acceptance(3)
@pytest.mark.parametrize("backend", ["auth", "nonauth", "lowcomm"])
def test_c3_universal_fuzz(backend):
    _fuzz_check(backend, True, f"test_c3_universal_fuzz[{backend}]")


@pytest.mark.acceptance(3)
@pytest.mark.parametrize("backend", ["auth", "nonauth", "lowcomm"])
def test_c3_vector_fuzz(backend):
    _fuzz_check(backend, False, f"test_c3_vector_fuzz[{backend}]")


@pytest.mark.acceptance(4)
def test_c4_canonical_similarity():
    checked = 0
    for backend in ("auth", "nonauth", "lowcomm"):
        _, traces = fuzz(backend, True)
        for spec, decided in traces:
            ref = ORACLES[spec.validity.name][1]
            c = spec.config.as_dict()
            common = set(BIN)
            for other in oracle.all_configs(4, 1, BIN):
                if oracle.is_similar(c, other):
                    common &= ref(other, 4, BIN)
            assert decided <= common, (spec.name, decided, common)
            checked += 1
    note("test_c4_canonical_similarity", f"{checked} canonical (4,1) traces")
    assert checked > 0


# -- 5: message complexity --------------------------------------------------------------

@pytest.mark.acceptance(5)
def test_c5_quadratic_messages():
    rows = sweep("vector/auth", [4, 8, 16])
    ratios = doubling_ratios(rows)
    lo, hi = RATIO_BAND
    for a, b, r in ratios:
        assert lo <= r <= hi, (a, b, r)
    for r in rows:
        assert r.msgs_after_gst == GOLDEN_MSGS[("vector/auth", r.n)]
    # Lambda is local, so Universal over the same back end sends the same messages
    for n in (4, 8):
        u = run_spec(silent_spec("universal/auth", n))
        assert u.ok and u.metrics.msgs_after_gst == GOLDEN_MSGS[("vector/auth", n)]
    note("test_c5_quadratic_messages",
         ", ".join(f"{b}/{a}={r:.3f}" for a, b, r in ratios) + f"; msgs {[r.msgs_after_gst for r in rows]}")


@pytest.mark.acceptance(5)
@pytest.mark.parametrize("n,t,protocol", [(10, 3, "universal/auth"), (16, 5, "vector/auth")])
def test_c5_lower_bound_adversary(n, t, protocol):
    res = run_spec(lower_bound_spec(n, t, protocol))
    bound = math.ceil(t / 2) ** 2
    m = res.metrics.msgs_after_gst
    note(f"test_c5_lower_bound_adversary[{n}-{t}-{protocol}]", f"{m} correct-sender messages > {bound}")
    assert res.ok, res.verdict
    assert m > bound


# -- 6: dissemination ---------------------------------------------------------------------

def _diss(proposals, n=4, t=1, **kw):
    return run_spec(ScenarioSpec(n=n, t=t, protocol="dissemination",
                                 proposals=[list(p) for p in proposals], **kw))


@pytest.mark.acceptance(6)
def test_c6_dissemination_latency_n4():
    worst = 0
    runs = 0
    layouts = [(1, 2, 3, 4), (1, 2, 3), (1, 2, 4), (1, 3, 4)]
    for procs in layouts:
        for seed in range(25):
            r = _diss([(p, p % 2) for p in procs], adversary="silent" if len(procs) < 4 else None,
                      seed=seed, schedule="sync" if seed == 0 else "random")
            d = r.verdict
            assert d["termination"], (procs, seed, d)
            # every process starts at 0, P1 is the earliest correct disseminator
            assert d["last_acquire"] <= 1 * 4 + 3 * 1, (procs, seed, d)
            worst = max(worst, d["last_acquire"])
            runs += 1
    note("test_c6_dissemination_latency_n4", f"{runs} runs, latest acquire at tick {worst} (bound 7)")


@pytest.mark.acceptance(6)
def test_c6_redundancy_and_heavy_senders():
    runs = 0
    for n in (4, 7, 10):
        t = (n - 1) // 3
        for seed in range(30):
            rng = random.Random(seed)
            faulty = set(rng.sample(range(1, n + 1), rng.randrange(t + 1)))
            props = [(p, rng.randrange(2)) for p in range(1, n + 1) if p not in faulty]
            r = _diss(props, n=n, t=t, adversary="silent" if faulty else None, seed=seed,
                      gst=(0, 7)[seed % 2], schedule="random", max_ticks=20000)
            d = dissemination_verdict(r.trace)
            assert d["redundancy"], (n, seed)
            assert len(d["heavy_slow_senders"]) <= 1, (n, seed, d)
            runs += 1
    # dissemination inside the low-communication vector back end
    for seed in range(60):
        r = run_spec(fuzz_spec("lowcomm", seed, universal=False))
        assert dissemination_verdict(r.trace)["redundancy"], seed
        assert len(dissemination_verdict(r.trace)["heavy_slow_senders"]) <= 1, seed
        runs += 1
    note("test_c6_redundancy_and_heavy_senders", f"{runs} traces")


# -- 7: reliable broadcast ---------------------------------------------------------------

class TwoFaced(Component):
    """Faulty BRB origin: per-recipient SEND values, and ECHO/READY for both
    values sent to random subsets.  Choices come from the seed."""

    def __init__(self, port, seed):
        super().__init__(port)
        self.rng = random.Random(seed)
        self.brb = port.sub("brb")

    def start(self):
        rng, n = self.rng, self.port.n
        for j in range(1, n + 1):
            if rng.random() < 0.9:
                self.brb.send(j, BrbSend(0, rng.randrange(2)))
        for value in (0, 1):
            for j in range(1, n + 1):
                if rng.random() < 0.5:
                    self.brb.send(j, BrbEcho(1, 0, value))
                if rng.random() < 0.3:
                    self.brb.send(j, BrbReady(1, 0, value))


def _brb_liar_run(seed):
    params = V.SystemParams(4, 1)
    c = V.InputConfiguration(((2, 0), (3, 0), (4, 0)))
    liar = {1: lambda p: Node(lambda port: TwoFaced(port, seed))}
    trace, _ = sim_run(Scenario(params, NetworkParams(seed % 4, 1, seed), V.ValueSpace.same(BIN), c,
                                make_factory("brb"), liar, schedule=RandomDelay(), max_ticks=200))
    return trace, brb_verdict(trace, c)


@pytest.mark.acceptance(7)
def test_c7_brb_equivocating_sender():
    delivered = 0
    for seed in range(1000):
        trace, v = _brb_liar_run(seed)
        assert v["agreement"] and v["totality"] and v["integrity"], (seed, v)
        assert validate_trace(trace) == []
        delivered += v["delivered"] > 0
    # the split-half equivocation of the built-in adversary, for good measure
    for seed in range(200):
        r = run_spec(ScenarioSpec(n=4, t=1, protocol="brb", proposals=[[2, 0], [3, 0], [4, 0]],
                                  adversary="equivocate_leader", faulty_proposal=seed % 2,
                                  seed=seed, schedule="random", gst=seed % 4))
        assert r.verdict["ok"], (seed, r.verdict)
    note("test_c7_brb_equivocating_sender", f"1000 seeds, {delivered} with a delivery by correct processes")
    assert 0 < delivered < 1000


@pytest.mark.acceptance(7)
def test_c7_brb_correct_sender_validity():
    for seed in range(1000):
        bad = 2 + seed % 3
        adv = ("silent", "equivocate_leader", "crash_at:1")[seed % 3]
        props = [[p, seed % 2] for p in range(1, 5) if p != bad]
        r = run_spec(ScenarioSpec(n=4, t=1, protocol="brb", proposals=props, adversary=adv,
                                  seed=seed, schedule="random", gst=seed % 5))
        assert r.verdict["ok"], (seed, r.verdict)
    note("test_c7_brb_correct_sender_validity", "1000 seeds")


# -- 8: determinism -----------------------------------------------------------------------

@pytest.mark.acceptance(8)
def test_c8_bundled_scenarios_deterministic():
    files = bundled()
    assert files
    for path in files:
        outs = []
        for _ in range(2):
            spec = ScenarioSpec.load(path)
            r = run_spec(spec)
            outs.append((r.trace.to_jsonl(), metrics_csv([r.metrics_row()])))
        assert outs[0][0] == outs[1][0], path.name
        assert outs[0][1] == outs[1][1], path.name
    note("test_c8_bundled_scenarios_deterministic", f"{len(files)} scenarios")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
