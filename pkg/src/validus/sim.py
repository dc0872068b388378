"""Deterministic discrete-event simulator for the partially synchronous model.

Time is integer ticks.  Every message sent at tick ``s`` is delivered at some
tick in ``[s + 1, max(s, gst) + delta]``; the schedule policy picks where.
Events at the same tick run in (time, process, sequence) order, so a run is
a pure function of its :class:`Scenario`.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .crypto import FAST, Keyring
from .validity import (InputConfiguration, SystemParams, ValidityProperty, ValueSpace,
                       common_admissible)

TRACE_SCHEMA = "validus-trace/1"


@dataclass(frozen=True)
class NetworkParams:
    gst: int = 0
    delta: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be at least one tick")
        if self.gst < 0:
            raise ValueError("gst must be nonnegative")


@dataclass(frozen=True)
class Accounting:
    """Word weights; a vector of k entries weighs k values."""

    value: int = 1
    signature: int = 1
    threshold: int = 1
    digest: int = 1
    qc: int = 1


DEFAULT_ACCOUNTING = Accounting()


def payload_size(payload, acc: Accounting = DEFAULT_ACCOUNTING) -> int:
    size = getattr(payload, "size", None)
    return max(1, size(acc)) if size else 1


def payload_tag(payload) -> str:
    return getattr(payload, "tag", type(payload).__name__)


def jsonable(v):
    if isinstance(v, InputConfiguration):
        return v.to_json()
    if isinstance(v, (bytes, bytearray)):
        return bytes(v).hex()
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    return v


# -- schedules ----------------------------------------------------------------

class Schedule:
    """Chooses delivery ticks; the result is clamped into the legal window."""

    name = "sync"

    def pick(self, send_time, sender, receiver, gst, delta, rng) -> int:
        return send_time + delta

    def deliver_time(self, send_time, sender, receiver, gst, delta, rng) -> int:
        latest = max(send_time, gst) + delta
        t = self.pick(send_time, sender, receiver, gst, delta, rng)
        return min(max(t, send_time + 1), latest)

    def to_json(self):
        return self.name


class Sync(Schedule):
    name = "sync"


class Immediate(Schedule):
    name = "immediate"

    def pick(self, send_time, sender, receiver, gst, delta, rng):
        return send_time + 1


class MaxDelay(Schedule):
    name = "max_delay"

    def pick(self, send_time, sender, receiver, gst, delta, rng):
        return max(send_time, gst) + delta


class RandomDelay(Schedule):
    name = "random"

    def pick(self, send_time, sender, receiver, gst, delta, rng):
        return rng.randint(send_time + 1, max(send_time, gst) + delta)


class Partition(Schedule):
    """Before GST, traffic between different groups is held until gst + delta."""

    name = "partition"

    def __init__(self, groups):
        self.groups = [sorted(g) for g in groups]
        self._where = {p: i for i, g in enumerate(self.groups) for p in g}

    def pick(self, send_time, sender, receiver, gst, delta, rng):
        if send_time < gst and self._where.get(sender) != self._where.get(receiver):
            return gst + delta
        return send_time + delta

    def to_json(self):
        return {"kind": "partition", "groups": self.groups}


SCHEDULES = {cls.name: cls for cls in (Sync, Immediate, MaxDelay, RandomDelay)}


def schedule_from_json(doc) -> Schedule:
    if isinstance(doc, str):
        if doc not in SCHEDULES:
            raise ValueError(f"unknown schedule {doc!r}")
        return SCHEDULES[doc]()
    if isinstance(doc, dict) and doc.get("kind") == "partition":
        return Partition(doc["groups"])
    raise ValueError(f"bad schedule {doc!r}")


# -- automata -----------------------------------------------------------------

class Automaton:
    """Deterministic protocol state machine driven by the simulator."""

    def on_start(self, ctx: "Context") -> None:
        pass

    def on_message(self, ctx: "Context", sender: int, payload) -> None:
        pass

    def on_timer(self, ctx: "Context", tag) -> None:
        pass


class Silent(Automaton):
    """Takes no steps at all."""


class Envelope:
    __slots__ = ("id", "sender", "receiver", "payload", "send_time", "deliver_time",
                 "words", "msg_type", "delivered")

    def __init__(self, id, sender, receiver, payload, send_time, deliver_time, words, msg_type):
        self.id = id
        self.sender = sender
        self.receiver = receiver
        self.payload = payload
        self.send_time = send_time
        self.deliver_time = deliver_time
        self.words = words
        self.msg_type = msg_type
        self.delivered = False

    def __repr__(self):
        return (f"Envelope(#{self.id} P{self.sender}->P{self.receiver} {self.msg_type} "
                f"@{self.send_time}->{self.deliver_time})")


class Context:
    """A process's handle on the simulator; persistent across its events."""

    def __init__(self, sim: "Simulator", me: int):
        self._sim = sim
        self.me = me
        self.n = sim.params.n
        self.t = sim.params.t
        self.delta = sim.net.delta
        self.keys = sim.keyring.keys[me]
        self.ring = sim.keyring
        self.space = sim.space

    @property
    def now(self) -> int:
        return self._sim.now

    def send(self, to: int, payload) -> None:
        self._sim._send(self.me, to, payload)

    def broadcast(self, payload) -> None:
        for j in range(1, self.n + 1):
            self._sim._send(self.me, j, payload)

    def set_timer(self, delay: int, tag) -> int:
        return self._sim._set_timer(self.me, delay, tag)

    def cancel_timer(self, timer_id: int) -> None:
        self._sim._cancelled.add(timer_id)

    def decide(self, value) -> None:
        self._sim._decide(self.me, value)

    def note(self, kind: str, **data) -> None:
        self._sim._note(self.me, kind, data)


# -- scenarios and traces -------------------------------------------------------

@dataclass
class Scenario:
    params: SystemParams
    net: NetworkParams
    space: ValueSpace
    proposals: InputConfiguration
    protocol: Callable[[int, Any], Automaton]
    behaviors: Mapping[int, Callable[[int], Automaton]] = field(default_factory=dict)
    schedule: Schedule = field(default_factory=Sync)
    max_ticks: int = 10_000
    crypto_mode: str = FAST
    heartbeats: bool = False
    name: str = ""

    def __post_init__(self):
        self.proposals.validate(self.params, self.space)
        extra = set(self.behaviors) - self.faulty
        if extra:
            raise ValueError(f"behaviors given for correct processes {sorted(extra)}")

    @property
    def faulty(self) -> frozenset:
        return frozenset(self.params.processes) - self.proposals.processes

    @property
    def correct(self) -> frozenset:
        return self.proposals.processes


@dataclass
class Trace:
    params: SystemParams
    gst: int
    delta: int
    faulty: frozenset
    events: list = field(default_factory=list)
    envelopes: list = field(default_factory=list)
    decisions: dict = field(default_factory=dict)
    redecisions: list = field(default_factory=list)
    end_time: int = 0
    horizon_exceeded: bool = False

    @property
    def correct(self) -> frozenset:
        return frozenset(self.params.processes) - self.faulty

    @property
    def canonical(self) -> bool:
        """No faulty process sent, decided or noted anything.  Deliveries to a
        faulty process are network events and do not count."""
        return not any(ev[2] in ("send", "decide", "note") and ev[1] in self.faulty
                       for ev in self.events)

    def notes(self, kind: str | None = None) -> list:
        return [ev for ev in self.events if ev[2] == "note" and (kind is None or ev[3] == kind)]

    def correct_decisions(self) -> dict:
        return {p: d for p, d in self.decisions.items() if p not in self.faulty}

    def to_records(self):
        yield {"schema": TRACE_SCHEMA, "n": self.params.n, "t": self.params.t, "gst": self.gst,
               "delta": self.delta, "faulty": sorted(self.faulty)}
        for ev in self.events:
            time, proc, kind = ev[0], ev[1], ev[2]
            rec = {"t": time, "proc": proc, "kind": kind}
            if kind == "send":
                rec.update({"env": ev[3], "to": ev[4], "msg_type": ev[5], "words": ev[6]})
            elif kind == "deliver":
                rec.update({"env": ev[3], "from": ev[4], "msg_type": ev[5], "words": ev[6]})
            elif kind == "timer":
                rec["tag"] = str(ev[3])
            elif kind == "decide":
                rec["value"] = jsonable(ev[3])
            elif kind == "note":
                rec["note"] = ev[3]
                rec["data"] = jsonable(ev[4])
            yield rec

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
                       for r in self.to_records())


@dataclass
class MetricsReport:
    msgs_after_gst: int
    words_after_gst: int
    decisions: dict
    latency: int | None
    horizon_exceeded: bool
    msgs_total: int = 0
    words_total: int = 0

    def row(self) -> dict:
        return {"msgs_after_gst": self.msgs_after_gst, "words_after_gst": self.words_after_gst,
                "latency": "" if self.latency is None else self.latency}


def count_metrics(trace: Trace, accounting: Accounting | None = None) -> MetricsReport:
    """Messages and words sent by correct processes at or after GST."""
    msgs = words = msgs_total = words_total = 0
    for env in trace.envelopes:
        if env.sender in trace.faulty:
            continue
        w = env.words if accounting is None else payload_size(env.payload, accounting)
        msgs_total += 1
        words_total += w
        if env.send_time >= trace.gst:
            msgs += 1
            words += w
    decided = trace.correct_decisions()
    latency = None
    if decided and len(decided) == len(trace.correct):
        latency = max(time for _, time in decided.values()) - trace.gst
    return MetricsReport(msgs, words, {p: v for p, (v, _) in sorted(decided.items())}, latency,
                         trace.horizon_exceeded, msgs_total, words_total)


# -- the simulator ---------------------------------------------------------------

class Simulator:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.params = scenario.params
        self.net = scenario.net
        self.space = scenario.space
        self.rng = random.Random(scenario.net.seed)
        self.keyring = Keyring(self.params.n, scenario.net.seed, scenario.crypto_mode)
        self.now = 0
        self._queue: list = []
        self._seq = 0
        self._cancelled: set = set()
        self.trace = Trace(self.params, self.net.gst, self.net.delta, scenario.faulty)
        self.automata: dict = {}
        self.contexts: dict = {}
        for p in self.params.processes:
            if p in scenario.faulty:
                make = scenario.behaviors.get(p)
                self.automata[p] = make(p) if make else Silent()
            else:
                self.automata[p] = scenario.protocol(p, scenario.proposals.proposal(p))
            self.contexts[p] = Context(self, p)

    def _push(self, time, proc, kind, data):
        self._seq += 1
        heapq.heappush(self._queue, (time, proc, self._seq, kind, data))

    def _send(self, sender, receiver, payload):
        if not 1 <= receiver <= self.params.n:
            return
        dt = self.scenario.schedule.deliver_time(self.now, sender, receiver, self.net.gst,
                                                 self.net.delta, self.rng)
        env = Envelope(len(self.trace.envelopes), sender, receiver, payload, self.now, dt,
                       payload_size(payload), payload_tag(payload))
        self.trace.envelopes.append(env)
        self.trace.events.append((self.now, sender, "send", env.id, receiver, env.msg_type, env.words))
        self._push(dt, receiver, "deliver", env)

    def _set_timer(self, proc, delay, tag):
        self._seq += 1
        tid = self._seq
        heapq.heappush(self._queue, (self.now + max(1, int(delay)), proc, tid, "timer", (tid, tag)))
        return tid

    def _decide(self, proc, value):
        if proc in self.trace.decisions:
            if self.trace.decisions[proc][0] != value:
                self.trace.redecisions.append((proc, value, self.now))
            return
        self.trace.decisions[proc] = (value, self.now)
        self.trace.events.append((self.now, proc, "decide", value))

    def _note(self, proc, kind, data):
        self.trace.events.append((self.now, proc, "note", kind, data))

    def run(self) -> Trace:
        horizon = self.scenario.max_ticks
        for p in self.params.processes:
            self._push(0, p, "start", None)
            if self.scenario.heartbeats and p not in self.scenario.faulty:
                self._push(self.net.delta, p, "heartbeat", None)
        events = self.trace.events
        while self._queue:
            time, proc, _, kind, data = self._queue[0]
            if time > horizon:
                break
            heapq.heappop(self._queue)
            self.now = time
            ctx = self.contexts[proc]
            aut = self.automata[proc]
            if kind == "deliver":
                data.delivered = True
                events.append((time, proc, "deliver", data.id, data.sender, data.msg_type, data.words))
                aut.on_message(ctx, data.sender, data.payload)
            elif kind == "timer":
                tid, tag = data
                if tid in self._cancelled:
                    self._cancelled.discard(tid)
                    continue
                events.append((time, proc, "timer", tag))
                aut.on_timer(ctx, tag)
            elif kind == "start":
                events.append((time, proc, "start"))
                aut.on_start(ctx)
            elif kind == "heartbeat":
                events.append((time, proc, "heartbeat"))
                self._push(time + self.net.delta, proc, "heartbeat", None)
        self.trace.end_time = self.now
        undecided = self.trace.correct - set(self.trace.decisions)
        self.trace.horizon_exceeded = bool(undecided)
        return self.trace


def run(scenario: Scenario) -> tuple[Trace, MetricsReport]:
    trace = Simulator(scenario).run()
    return trace, count_metrics(trace)


# -- verdicts ------------------------------------------------------------------

@dataclass
class Verdict:
    termination: bool
    agreement: bool
    validity: bool | None
    canonical: bool
    canonical_similarity: bool | None = None
    decided: tuple = ()
    horizon_exceeded: bool = False

    @property
    def ok(self) -> bool:
        return (self.termination and self.agreement and self.validity is not False
                and self.canonical_similarity is not False)

    def as_dict(self) -> dict:
        return {"termination": self.termination, "agreement": self.agreement,
                "validity": self.validity, "canonical": self.canonical,
                "canonical_similarity": self.canonical_similarity,
                "decided": jsonable(list(self.decided)),
                "horizon_exceeded": self.horizon_exceeded}


def check_consensus(trace: Trace, val: ValidityProperty | None, c: InputConfiguration,
                    space: ValueSpace | None = None, similarity: bool = True) -> Verdict:
    """Termination, agreement and validity of the correct processes' decisions.

    For canonical traces the decided value must also be admissible for every
    configuration similar to ``c`` (skipped when ``similarity`` is false).
    """
    decided = trace.correct_decisions()
    values = []
    for v, _ in decided.values():
        if v not in values:
            values.append(v)
    termination = len(decided) == len(trace.correct) and not trace.horizon_exceeded
    agreement = len(values) <= 1 and not any(p not in trace.faulty for p, _, _ in trace.redecisions)
    validity = None
    sim_ok = None
    canonical = trace.canonical
    if val is not None and space is not None:
        validity = all(v in space.outputs and v in val.admissible_set(c, trace.params, space)
                       for v in values)
        if canonical and similarity and values:
            common = common_admissible(val, c, trace.params, space)
            sim_ok = all(v in common for v in values)
    return Verdict(termination, agreement, validity, canonical, sim_ok, tuple(values),
                   trace.horizon_exceeded)


def vector_validity(trace: Trace, c: InputConfiguration) -> bool:
    """Every correct process's entry in a decided vector is its true proposal."""
    truth = c.as_dict()
    n_t = trace.params.n - trace.params.t
    for p, (vec, _) in trace.correct_decisions().items():
        if not isinstance(vec, InputConfiguration) or len(vec) != n_t:
            return False
        for q, v in vec:
            if q in truth and truth[q] != v:
                return False
    return True


def validate_trace(trace: Trace, scenario_correct: frozenset | None = None) -> list[str]:
    """Check the execution-model properties of a finished trace; returns violations."""
    bad = []
    sent_at = {}
    first_event = {}
    starts = {}
    for ev in trace.events:
        time, proc, kind = ev[0], ev[1], ev[2]
        first_event.setdefault(proc, kind)
        if kind == "start":
            starts[proc] = starts.get(proc, 0) + 1
            if proc in trace.correct and time > trace.gst:
                bad.append(f"P{proc} starts at {time} > GST")
        elif kind == "send":
            sent_at[ev[3]] = time
        elif kind == "deliver":
            eid = ev[3]
            if eid not in sent_at:
                bad.append(f"envelope {eid} delivered before being sent")
                continue
            if time > max(sent_at[eid], trace.gst) + trace.delta:
                bad.append(f"envelope {eid} delivered late at {time}")
    for proc, kind in first_event.items():
        if kind != "start":
            bad.append(f"P{proc} first event is {kind}")
    for proc, k in starts.items():
        if k > 1:
            bad.append(f"P{proc} started {k} times")
    for env in trace.envelopes:
        due = max(env.send_time, trace.gst) + trace.delta
        if not env.delivered and due < trace.end_time:
            bad.append(f"{env!r} never delivered though due at {due}")
        if env.delivered and env.deliver_time > due:
            bad.append(f"{env!r} exceeds the delay bound")
    for p, v, time in trace.redecisions:
        if p in trace.correct:
            bad.append(f"P{p} decided twice ({v!r} at {time})")
    return bad
