"""Scenario files: parse, serialize, build and run them.

A scenario file is canonical JSON (sorted keys, two-space indent, trailing
newline), so parse -> serialize reproduces it byte for byte.
"""

from __future__ import annotations

import builtins
import csv
import io
import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import validity as V
from .adversary import LOWER_BOUND, make_adversary, parse_kind
from .crypto import FAST, MODES
from .errors import SchemaError, UnknownAdversary
from .protocols import PROTOCOLS, make_factory
from .sim import (TRACE_SCHEMA, NetworkParams, Scenario, check_consensus, jsonable,
                  schedule_from_json, validate_trace, vector_validity)
from .universal import UniversalConfig
from .validity import InputConfiguration, SystemParams, ValueSpace

SCENARIO_SCHEMA = "validus-scenario/1"
METRICS_SCHEMA = "validus-metrics/1"
METRICS_COLUMNS = ["n", "t", "protocol", "adversary", "seed", "msgs_after_gst",
                   "words_after_gst", "latency"]
BUNDLED = Path(__file__).parent / "scenarios"


@dataclass
class ScenarioSpec:
    n: int
    t: int
    protocol: str
    proposals: list
    values: list = field(default_factory=lambda: [0, 1])
    outputs: list | None = None
    property: dict | None = None
    adversary: str | None = None
    faulty_proposal: object = None
    gst: int = 0
    delta: int = 1
    seed: int = 0
    schedule: object = "sync"
    max_ticks: int | None = None
    crypto_mode: str = FAST
    binary: str = "dbft"
    lambda_csv: str | None = None
    name: str = ""

    # -- derived -------------------------------------------------------------

    @builtins.property  # the 'property' field shadows the builtin here
    def params(self) -> SystemParams:
        return SystemParams(self.n, self.t)

    @builtins.property
    def space(self) -> ValueSpace:
        return ValueSpace(tuple(self.values), tuple(self.outputs if self.outputs is not None else self.values))

    @builtins.property
    def config(self) -> InputConfiguration:
        return InputConfiguration.from_json(self.proposals)

    @builtins.property
    def validity(self) -> V.ValidityProperty | None:
        return V.property_from_json(self.property) if self.property is not None else None

    @builtins.property
    def horizon(self) -> int:
        return self.max_ticks if self.max_ticks is not None else self.gst + 200 * self.delta

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = SCENARIO_SCHEMA
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc) -> "ScenarioSpec":
        if not isinstance(doc, dict):
            raise SchemaError("scenario: expected a JSON object")
        schema = doc.get("schema")
        if schema != SCENARIO_SCHEMA:
            raise SchemaError(f"scenario.schema: expected {SCENARIO_SCHEMA!r}, got {schema!r}")
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known - {"schema"}
        if extra:
            raise SchemaError(f"scenario: unknown fields {sorted(extra)}")
        for key in ("n", "t", "protocol", "proposals"):
            if key not in doc:
                raise SchemaError(f"scenario.{key}: missing")
        spec = cls(**{k: v for k, v in doc.items() if k != "schema"})
        spec.check()
        return spec

    @classmethod
    def loads(cls, text: str) -> "ScenarioSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"scenario: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        return cls.loads(Path(path).read_text())

    def check(self) -> None:
        def need(ok, where, what):
            if not ok:
                raise SchemaError(f"scenario.{where}: {what}")
        for key in ("n", "t", "gst", "delta", "seed"):
            need(isinstance(getattr(self, key), int), key, "expected an integer")
        need(self.protocol in PROTOCOLS, "protocol", f"unknown protocol {self.protocol!r}")
        need(self.crypto_mode in MODES, "crypto_mode", f"expected one of {MODES}")
        need(self.binary in ("dbft", "core"), "binary", "expected 'dbft' or 'core'")
        try:
            params = self.params
            space = self.space
        except (ValueError, TypeError) as exc:
            raise SchemaError(f"scenario: {exc}") from None
        try:
            self.config.validate(params, space)
        except (SchemaError, ValueError, TypeError) as exc:
            raise SchemaError(f"scenario.proposals: {exc}") from None
        try:
            schedule_from_json(self.schedule)
        except (SchemaError, ValueError, TypeError) as exc:
            raise SchemaError(f"scenario.schedule: {exc}") from None
        try:
            NetworkParams(self.gst, self.delta, self.seed)
        except ValueError as exc:
            raise SchemaError(f"scenario.gst/delta: {exc}") from None
        if self.property is not None:
            try:
                self.validity
            except SchemaError as exc:
                raise SchemaError(f"scenario.{exc}") from None
        if self.adversary is not None:
            try:
                parse_kind(self.adversary)
            except UnknownAdversary as exc:
                raise SchemaError(f"scenario.adversary: {exc}") from None
        faulty = set(params.processes) - self.config.processes
        need(len(faulty) <= self.t, "proposals", f"{len(faulty)} faulty processes exceed t")
        need(self.protocol.split("/")[0] != "universal" or self.property is not None,
             "property", "universal protocols need a validity property")

    # -- building --------------------------------------------------------------

    def universal_config(self) -> UniversalConfig | None:
        if not self.protocol.startswith("universal/"):
            return None
        lam = None
        if self.lambda_csv:
            lam = V.LambdaTable.from_csv(Path(self.lambda_csv).read_text(), self.params, self.space)
        return UniversalConfig.build(self.validity, self.params, self.space,
                                     backend=self.protocol.split("/")[1], lam=lam, binary=self.binary)

    def build(self) -> Scenario:
        params, space, c = self.params, self.space, self.config
        factory = make_factory(self.protocol, self.universal_config(), binary=self.binary)
        faulty = frozenset(params.processes) - c.processes
        behaviors = {}
        gst = self.gst
        schedule = schedule_from_json(self.schedule)
        if self.adversary is not None and faulty:
            adv = make_adversary(self.adversary, params, faulty=faulty)
            if adv.kind == LOWER_BOUND:
                if adv.faulty != faulty:
                    raise SchemaError(f"scenario.proposals: lower_bound needs faulty = {sorted(adv.faulty)}")
                gst, schedule = adv.gst, adv.schedule
            default = self.faulty_proposal if self.faulty_proposal is not None else c.pairs[0][1]
            behaviors = {p: adv.behavior(p, factory, default) for p in sorted(faulty)}
        return Scenario(params, NetworkParams(gst, self.delta, self.seed), space, c, factory,
                        behaviors, schedule=schedule, max_ticks=self.horizon,
                        crypto_mode=self.crypto_mode, name=self.name)


# -- running and judging -----------------------------------------------------------

@dataclass
class RunResult:
    spec: ScenarioSpec
    trace: object
    metrics: object
    verdict: dict

    @property
    def ok(self) -> bool:
        return self.verdict["ok"]

    def metrics_row(self) -> dict:
        row = {"n": self.spec.n, "t": self.spec.t, "protocol": self.spec.protocol,
               "adversary": self.spec.adversary or "none", "seed": self.spec.seed}
        row.update(self.metrics.row())
        return row


def judge(spec: ScenarioSpec, trace) -> dict:
    family = spec.protocol.split("/")[0]
    c = spec.config
    violations = validate_trace(trace)
    if family == "dissemination":
        out = dissemination_verdict(trace)
    elif family == "brb":
        out = brb_verdict(trace, c)
    elif family == "vector":
        v = check_consensus(trace, None, c)
        out = v.as_dict()
        out["vector_validity"] = vector_validity(trace, c)
        out["ok"] = v.ok and out["vector_validity"]
    else:
        v = check_consensus(trace, spec.validity, c, spec.space)
        out = v.as_dict()
        if family == "universal":
            out["lambda_consistent"] = universal_consistent(trace)
            out["ok"] = v.ok and out["lambda_consistent"]
        else:
            out["ok"] = v.ok
    out["model_violations"] = violations
    out["ok"] = out["ok"] and not violations
    return out


def brb_verdict(trace, c, origin=1) -> dict:
    """Agreement and totality always; validity when the origin is correct."""
    got = {p: v for p, (v, _) in trace.correct_decisions().items()}
    out = brb_properties(got, set(trace.correct), c, trace.horizon_exceeded, origin)
    # a second, different delivery at a correct process
    out["integrity"] = not any(p in trace.correct for p, _, _ in trace.redecisions)
    out["ok"] = out["ok"] and out["integrity"]
    return out


def brb_properties(got: dict, correct: set, c, horizon_exceeded=False, origin=1) -> dict:
    agreement = len(set(map(repr, got.values()))) <= 1
    totality = not got or set(got) == correct
    if origin in correct:
        validity = set(got) == correct and all(v == c.as_dict()[origin] for v in got.values())
    else:
        validity = True
    return {"agreement": agreement, "totality": totality, "validity": validity,
            "delivered": len(got), "horizon_exceeded": horizon_exceeded,
            "ok": agreement and totality and validity}


def universal_consistent(trace) -> bool:
    """Each correct decision equals the value derived from its own vector."""
    derived = {ev[1]: ev[4]["value"] for ev in trace.notes("universal")}
    return all(derived.get(p) == v for p, (v, _) in trace.correct_decisions().items())


def dissemination_verdict(trace) -> dict:
    t = trace.params.t
    cached = {}
    for ev in trace.notes("cached"):
        if ev[1] in trace.correct:
            cached.setdefault(ev[4]["digest"], set()).add(ev[1])
    acquired = {ev[4]["digest"] for ev in trace.notes("acquire") if ev[1] in trace.correct}
    redundancy = all(len(cached.get(d, ())) >= t + 1 for d in acquired)
    slow_after = {}
    for env in trace.envelopes:
        if env.sender in trace.correct and env.msg_type == "SLOW_BROADCAST" and env.send_time >= trace.gst:
            slow_after[env.sender] = slow_after.get(env.sender, 0) + 1
    heavy = sorted(p for p, k in slow_after.items() if k > 3)
    acquire_times = {p: time for p, (_, time) in trace.correct_decisions().items()}
    termination = len(acquire_times) == len(trace.correct) and not trace.horizon_exceeded
    return {"termination": termination, "redundancy": redundancy, "heavy_slow_senders": heavy,
            "last_acquire": max(acquire_times.values()) if acquire_times else None,
            "horizon_exceeded": trace.horizon_exceeded,
            "ok": termination and redundancy and len(heavy) <= 1}


def run_spec(spec: ScenarioSpec) -> RunResult:
    from .sim import run
    trace, metrics = run(spec.build())
    return RunResult(spec, trace, metrics, judge(spec, trace))


def metrics_csv(rows, fh=None) -> str:
    buf = io.StringIO()
    buf.write(f"# {METRICS_SCHEMA}\n")
    w = csv.DictWriter(buf, fieldnames=METRICS_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_metrics_csv(text: str) -> list[dict]:
    first, _, rest = text.partition("\n")
    if first != f"# {METRICS_SCHEMA}":
        raise SchemaError(f"metrics CSV: expected schema line '# {METRICS_SCHEMA}', got {first!r}")
    return list(csv.DictReader(io.StringIO(rest)))


# -- re-checking exported traces ----------------------------------------------------

def parse_trace(text: str) -> tuple[dict, list[dict]]:
    lines = [json.loads(x) for x in text.splitlines() if x.strip()]
    if not lines or lines[0].get("schema") != TRACE_SCHEMA:
        got = lines[0].get("schema") if lines else None
        raise SchemaError(f"trace: expected schema {TRACE_SCHEMA!r}, got {got!r}")
    return lines[0], lines[1:]


def check_trace_text(text: str, spec: ScenarioSpec) -> dict:
    """Recompute the verdict from an exported trace and its scenario."""
    header, records = parse_trace(text)
    if (header["n"], header["t"]) != (spec.n, spec.t):
        raise SchemaError("trace: n/t differ from the scenario")
    faulty = set(header["faulty"])
    correct = set(range(1, spec.n + 1)) - faulty
    gst, delta = header["gst"], header["delta"]
    problems = []
    sent = {}
    decided = {}
    for r in records:
        kind = r["kind"]
        if kind == "send":
            sent[r["env"]] = r["t"]
        elif kind == "deliver":
            s = sent.get(r["env"])
            if s is None:
                problems.append(f"envelope {r['env']} delivered but never sent")
            elif r["t"] > max(s, gst) + delta:
                problems.append(f"envelope {r['env']} late")
        elif kind == "decide" and r["proc"] in correct:
            if r["proc"] in decided:
                problems.append(f"P{r['proc']} decided twice")
            decided.setdefault(r["proc"], r["value"])
    values = []
    for v in decided.values():
        if v not in values:
            values.append(v)
    family = spec.protocol.split("/")[0]
    if family == "brb":
        out = brb_properties(decided, correct, spec.config)
        out["model_violations"] = problems
        out["ok"] = out["ok"] and not problems
        return out
    out = {"termination": set(decided) == correct, "agreement": len(values) <= 1,
           "model_violations": problems}
    if family == "vector":
        truth = spec.config.as_dict()
        out["vector_validity"] = all(
            len(vec) == spec.n - spec.t and all(truth.get(p, v) == v for p, v in vec) for vec in values)
    elif spec.property is not None and family != "dissemination":
        val = spec.validity
        adm = val.admissible_set(spec.config, spec.params, spec.space)
        out["validity"] = all(v in adm for v in values)
    if family == "dissemination":
        out.pop("agreement")
    out["ok"] = all(v for k, v in out.items() if k != "model_violations") and not problems
    return out


# -- scenario generators --------------------------------------------------------------

FUZZ_ADVERSARIES = ("silent", "crash_at", "equivocate_leader")


def fuzz_spec(backend: str, seed: int, universal: bool = True, delta: int = 3) -> ScenarioSpec:
    """One randomized scenario of the property fuzz campaign."""
    rng = random.Random(f"{backend}:{seed}:{universal}")
    n = (4, 7, 10)[seed % 3]
    t = (n - 1) // 3
    kind = FUZZ_ADVERSARIES[(seed // 3) % 3]
    gst = (0, 5 * delta)[(seed // 9) % 2]
    if kind == "crash_at":
        kind = f"crash_at:{rng.randrange(0, 12 * delta)}"
    faulty = set(rng.sample(range(1, n + 1), t))
    proposals = [[p, rng.randrange(2)] for p in range(1, n + 1) if p not in faulty]
    prop = (V.strong(), V.correct_proposal())[(seed // 18) % 2]
    family = "universal" if universal else "vector"
    return ScenarioSpec(n=n, t=t, protocol=f"{family}/{backend}", proposals=proposals,
                        property=V.property_to_json(prop), adversary=kind,
                        faulty_proposal=rng.randrange(2), gst=gst, delta=delta, seed=seed,
                        schedule="random", name=f"fuzz-{family}-{backend}-{seed}")


def silent_spec(protocol: str, n: int, seed: int = 0, prop=None) -> ScenarioSpec:
    """t = floor((n-1)/3) silent processes on the highest indices, GST = 0."""
    t = (n - 1) // 3
    rng = random.Random(seed)
    proposals = [[p, rng.randrange(2)] for p in range(1, n - t + 1)]
    prop = prop if prop is not None else V.strong()
    return ScenarioSpec(n=n, t=t, protocol=protocol, proposals=proposals,
                        property=V.property_to_json(prop), adversary="silent", seed=seed,
                        name=f"silent-{protocol}-{n}")


def lower_bound_spec(n: int, t: int, protocol: str = "universal/auth", seed: int = 0,
                     v_star=1) -> ScenarioSpec:
    k = -(-t // 2)
    proposals = [[p, v_star] for p in range(1, n - k + 1)]
    return ScenarioSpec(n=n, t=t, protocol=protocol, proposals=proposals,
                        property=V.property_to_json(V.strong()), adversary=LOWER_BOUND,
                        faulty_proposal=v_star, seed=seed, name=f"lowerbound-{n}-{t}")


def bundled() -> list[Path]:
    return sorted(BUNDLED.glob("*.json"))


def jsonable_verdict(verdict: dict) -> str:
    return json.dumps(jsonable(verdict), sort_keys=True)
