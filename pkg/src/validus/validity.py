"""Input configurations, validity properties and the solvability classifier.

Everything here is a pure function of immutable values.  Spaces are finite, so
triviality and the similarity condition are decided by exhaustive enumeration
under a configurable budget (``VALIDUS_BUDGET`` overrides the default cap).
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from itertools import combinations, product
from math import comb
from typing import Any, Callable, Iterable, Iterator, Mapping, NamedTuple, Sequence

from .errors import BudgetExceeded, LambdaUndefined, SchemaError, TableMissingEntry

DEFAULT_BUDGET = 10**6

STRONG = "strong"
WEAK = "weak"
CORRECT_PROPOSAL = "correct_proposal"
CONSTANT = "constant"
INTERVAL = "interval"
TABLE = "table"
KINDS = (STRONG, WEAK, CORRECT_PROPOSAL, CONSTANT, INTERVAL, TABLE)

SOLVABLE_TRIVIAL = "solvable_trivial"
SOLVABLE_UNIVERSAL = "solvable_universal"
UNSOLVABLE = "unsolvable"


def enumeration_budget() -> int:
    raw = os.environ.get("VALIDUS_BUDGET")
    return int(raw) if raw else DEFAULT_BUDGET


@dataclass(frozen=True)
class SystemParams:
    n: int
    t: int

    def __post_init__(self):
        if not (0 < self.t < self.n):
            raise ValueError(f"need 0 < t < n, got n={self.n}, t={self.t}")

    @property
    def supermajority(self) -> bool:
        return self.n > 3 * self.t

    @property
    def processes(self) -> range:
        return range(1, self.n + 1)

    @property
    def quorum(self) -> int:
        return self.n - self.t


@dataclass(frozen=True)
class ValueSpace:
    inputs: tuple
    outputs: tuple

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        for name in ("inputs", "outputs"):
            vals = getattr(self, name)
            if not vals:
                raise ValueError(f"{name} must be nonempty")
            if len(set(vals)) != len(vals):
                raise ValueError(f"{name} contains duplicates")

    @classmethod
    def same(cls, values: Iterable) -> "ValueSpace":
        values = tuple(values)
        return cls(values, values)

    @classmethod
    def binary(cls) -> "ValueSpace":
        return cls.same((0, 1))


class ProcessProposal(NamedTuple):
    process: int
    value: Any


@dataclass(frozen=True)
class InputConfiguration:
    """Proposals of a set of distinct processes, kept sorted by process index."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple(sorted((ProcessProposal(int(p), v) for p, v in self.pairs),
                             key=lambda pp: pp.process))
        procs = [pp.process for pp in pairs]
        if len(set(procs)) != len(procs):
            raise ValueError(f"duplicate process in configuration {procs}")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def of(cls, pairs: Iterable | Mapping) -> "InputConfiguration":
        if isinstance(pairs, Mapping):
            pairs = pairs.items()
        return cls(tuple(pairs))

    @property
    def processes(self) -> frozenset:
        return frozenset(pp.process for pp in self.pairs)

    def proposal(self, process: int):
        for pp in self.pairs:
            if pp.process == process:
                return pp.value
        return None

    def as_dict(self) -> dict:
        return {pp.process: pp.value for pp in self.pairs}

    def values(self) -> list:
        return [pp.value for pp in self.pairs]

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __repr__(self):
        body = ",".join(f"(P{p},{v!r})" for p, v in self.pairs)
        return f"[{body}]"

    def validate(self, params: SystemParams, space: ValueSpace | None = None) -> None:
        if not (params.n - params.t <= len(self.pairs) <= params.n):
            raise ValueError(f"{self!r} has {len(self.pairs)} pairs, "
                             f"need between {params.n - params.t} and {params.n}")
        for p, v in self.pairs:
            if not 1 <= p <= params.n:
                raise ValueError(f"process index {p} outside 1..{params.n}")
            if space is not None and v not in space.inputs:
                raise ValueError(f"proposal {v!r} of P{p} not in the input space")

    def to_json(self) -> list:
        return [[p, v] for p, v in self.pairs]

    @classmethod
    def from_json(cls, data) -> "InputConfiguration":
        try:
            return cls(tuple((int(p), v) for p, v in data))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad configuration {data!r}: {exc}") from exc


def similar(c1: InputConfiguration, c2: InputConfiguration) -> bool:
    d1, d2 = c1.as_dict(), c2.as_dict()
    common = d1.keys() & d2.keys()
    return bool(common) and all(d1[p] == d2[p] for p in common)


def compatible(c1: InputConfiguration, c2: InputConfiguration, t: int) -> bool:
    p1, p2 = c1.processes, c2.processes
    return len(p1 & p2) <= t and bool(p1 - p2) and bool(p2 - p1)


# -- enumeration ------------------------------------------------------------

def _sizes(params: SystemParams, sizes) -> list[int]:
    if sizes is None:
        return list(range(params.n - params.t, params.n + 1))
    sizes = sorted(set(sizes))
    for x in sizes:
        if not params.n - params.t <= x <= params.n:
            raise ValueError(f"size {x} outside [{params.n - params.t}, {params.n}]")
    return sizes


def count_configs(params: SystemParams, space: ValueSpace, sizes=None) -> int:
    k = len(space.inputs)
    return sum(comb(params.n, x) * k**x for x in _sizes(params, sizes))


def _check_budget(count: int, budget: int | None) -> None:
    cap = enumeration_budget() if budget is None else budget
    if count > cap:
        raise BudgetExceeded(count, cap)


def iter_configs(params: SystemParams, space: ValueSpace, sizes=None,
                 budget: int | None = None) -> Iterator[InputConfiguration]:
    """Yield every configuration once: by size, then process subset, then values."""
    _check_budget(count_configs(params, space, sizes), budget)
    for x in _sizes(params, sizes):
        for procs in combinations(params.processes, x):
            for vals in product(space.inputs, repeat=x):
                yield InputConfiguration(tuple(zip(procs, vals)))


def enumerate_configs(params: SystemParams, space: ValueSpace, sizes=None,
                      budget: int | None = None) -> list[InputConfiguration]:
    return list(iter_configs(params, space, sizes, budget))


def _iter_similar_raw(c: InputConfiguration, params: SystemParams, space: ValueSpace):
    """(processes, values) tuples of sim(c), in canonical order."""
    fixed = c.as_dict()
    for x in range(params.n - params.t, params.n + 1):
        for procs in combinations(params.processes, x):
            if not any(p in fixed for p in procs):
                continue
            free = [i for i, p in enumerate(procs) if p not in fixed]
            base = [fixed.get(p) for p in procs]
            for vals in product(space.inputs, repeat=len(free)):
                row = list(base)
                for i, v in zip(free, vals):
                    row[i] = v
                yield procs, tuple(row)


def sim_set(c: InputConfiguration, params: SystemParams, space: ValueSpace,
            budget: int | None = None) -> list[InputConfiguration]:
    _check_budget(count_configs(params, space), budget)
    return [InputConfiguration(tuple(zip(procs, vals)))
            for procs, vals in _iter_similar_raw(c, params, space)]


# -- validity properties ----------------------------------------------------

class ValidityProperty:
    """A map from input configurations to nonempty sets of admissible outputs.

    Builtins compute the set from the configuration; ``table`` properties hold
    an explicit, possibly partial, mapping.
    """

    def __init__(self, kind: str, constant=None, table: Mapping | None = None):
        if kind not in KINDS:
            raise ValueError(f"unknown property kind {kind!r}")
        if kind == TABLE and table is None:
            raise ValueError("table property needs a table")
        self.kind = kind
        self.constant = constant
        self.table = None
        if table is not None:
            self.table = {}
            for c, adm in table.items():
                adm = frozenset(adm)
                if not adm:
                    raise ValueError(f"empty admissible set for {c!r}")
                self.table[c] = adm

    def __repr__(self):
        if self.kind == CONSTANT:
            return f"ValidityProperty(constant:{self.constant!r})"
        if self.kind == TABLE:
            return f"ValidityProperty(table, {len(self.table)} entries)"
        return f"ValidityProperty({self.kind})"

    def __eq__(self, other):
        return (isinstance(other, ValidityProperty) and self.kind == other.kind
                and self.constant == other.constant and self.table == other.table)

    def __hash__(self):
        return hash((self.kind, self.constant))

    @property
    def name(self) -> str:
        return f"constant:{self.constant}" if self.kind == CONSTANT else self.kind

    def admissible_set(self, c: InputConfiguration, params: SystemParams,
                       space: ValueSpace) -> frozenset:
        outputs = space.outputs
        props = c.values()
        if self.kind == STRONG:
            first = props[0]
            if all(v == first for v in props):
                return frozenset([first]) & frozenset(outputs)
            return frozenset(outputs)
        if self.kind == WEAK:
            first = props[0]
            if len(props) == params.n and all(v == first for v in props):
                return frozenset([first]) & frozenset(outputs)
            return frozenset(outputs)
        if self.kind == CORRECT_PROPOSAL:
            return frozenset(props) & frozenset(outputs)
        if self.kind == CONSTANT:
            return frozenset([self.constant])
        if self.kind == INTERVAL:
            ranks = [outputs.index(v) for v in props]
            return frozenset(outputs[min(ranks):max(ranks) + 1])
        try:
            return self.table[c]
        except KeyError:
            raise TableMissingEntry(f"no table entry for {c!r}") from None

    def check_space(self, space: ValueSpace) -> None:
        """Builtins other than ``constant`` need every input to be an output."""
        if self.kind in (STRONG, WEAK, CORRECT_PROPOSAL, INTERVAL):
            missing = [v for v in space.inputs if v not in space.outputs]
            if missing:
                raise ValueError(f"{self.kind} needs inputs within outputs; missing {missing}")
        if self.kind == CONSTANT and self.constant not in space.outputs:
            raise ValueError(f"constant {self.constant!r} not an output value")


def strong() -> ValidityProperty:
    return ValidityProperty(STRONG)


def weak() -> ValidityProperty:
    return ValidityProperty(WEAK)


def correct_proposal() -> ValidityProperty:
    return ValidityProperty(CORRECT_PROPOSAL)


def constant(v) -> ValidityProperty:
    return ValidityProperty(CONSTANT, constant=v)


def interval() -> ValidityProperty:
    return ValidityProperty(INTERVAL)


def from_table(table: Mapping) -> ValidityProperty:
    return ValidityProperty(TABLE, table=table)


def builtin(spec: str) -> ValidityProperty:
    """Parse ``strong``, ``weak``, ``correct_proposal``, ``interval`` or ``constant:v``."""
    if spec.startswith("constant:"):
        return constant(_parse_scalar(spec.split(":", 1)[1]))
    if spec in (STRONG, WEAK, CORRECT_PROPOSAL, INTERVAL):
        return ValidityProperty(spec)
    raise ValueError(f"unknown builtin property {spec!r}")


def _parse_scalar(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def parse_values(text: str) -> tuple:
    return tuple(_parse_scalar(s.strip()) for s in text.split(",") if s.strip())


def admissible(val: ValidityProperty, c: InputConfiguration, v,
               params: SystemParams, space: ValueSpace) -> bool:
    if v not in space.outputs:
        raise ValueError(f"{v!r} is not an output value")
    return v in val.admissible_set(c, params, space)


def property_to_json(val: ValidityProperty) -> dict:
    doc: dict = {"kind": val.kind}
    if val.kind == CONSTANT:
        doc["constant"] = val.constant
    if val.kind == TABLE:
        doc["table"] = [{"config": c.to_json(), "admissible": sorted(adm, key=repr)}
                        for c, adm in val.table.items()]
    return doc


def property_from_json(doc) -> ValidityProperty:
    if not isinstance(doc, dict):
        raise SchemaError("property: expected a JSON object")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise SchemaError(f"property.kind: unknown kind {kind!r}")
    if kind == CONSTANT:
        if "constant" not in doc:
            raise SchemaError("property.constant: missing for kind 'constant'")
        return constant(doc["constant"])
    if kind != TABLE:
        return ValidityProperty(kind)
    rows = doc.get("table")
    if not isinstance(rows, list):
        raise SchemaError("property.table: expected a list")
    table = {}
    for i, row in enumerate(rows):
        where = f"property.table[{i}]"
        if not isinstance(row, dict) or "config" not in row or "admissible" not in row:
            raise SchemaError(f"{where}: needs 'config' and 'admissible'")
        try:
            c = InputConfiguration.from_json(row["config"])
        except SchemaError as exc:
            raise SchemaError(f"{where}.config: {exc}") from None
        adm = row["admissible"]
        if not isinstance(adm, list) or not adm:
            raise SchemaError(f"{where}.admissible: expected a nonempty list")
        if c in table:
            raise SchemaError(f"{where}: duplicate configuration {c!r}")
        table[c] = adm
    return from_table(table)


def load_property(path) -> ValidityProperty:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return property_from_json(doc)


# -- classification -----------------------------------------------------------

def _mask(adm: frozenset, space: ValueSpace) -> int:
    m = 0
    for i, v in enumerate(space.outputs):
        if v in adm:
            m |= 1 << i
    return m


def _unmask(mask: int, space: ValueSpace) -> tuple:
    return tuple(v for i, v in enumerate(space.outputs) if mask >> i & 1)


def least(candidates: Sequence):
    """Default tie-break: the first common admissible value in output order."""
    return candidates[0]


def check_trivial(val: ValidityProperty, params: SystemParams, space: ValueSpace,
                  budget: int | None = None):
    """The least output admissible for every configuration, or None."""
    common = (1 << len(space.outputs)) - 1
    for c in iter_configs(params, space, budget=budget):
        common &= _mask(val.admissible_set(c, params, space), space)
        if not common:
            return None
    return _unmask(common, space)[0]


class _MaskIndex:
    """val(c) bitmasks for every configuration, keyed by (processes, values)."""

    def __init__(self, val, params, space, budget):
        self.params, self.space, self.val = params, space, val
        self.masks: dict = {}
        for c in iter_configs(params, space, budget=budget):
            procs = tuple(pp.process for pp in c.pairs)
            self.masks[procs, tuple(c.values())] = _mask(val.admissible_set(c, params, space), space)

    def common(self, c: InputConfiguration) -> int:
        acc = (1 << len(self.space.outputs)) - 1
        for key in _iter_similar_raw(c, self.params, self.space):
            acc &= self.masks[key]
            if not acc:
                break
        return acc


def common_admissible(val: ValidityProperty, c: InputConfiguration, params: SystemParams,
                      space: ValueSpace, budget: int | None = None) -> tuple:
    """Outputs admissible for every configuration similar to ``c`` (output order)."""
    _check_budget(count_configs(params, space), budget)
    acc = (1 << len(space.outputs)) - 1
    for procs, vals in _iter_similar_raw(c, params, space):
        cc = InputConfiguration(tuple(zip(procs, vals)))
        acc &= _mask(val.admissible_set(cc, params, space), space)
        if not acc:
            break
    return _unmask(acc, space)


class LambdaTable:
    """Lambda restricted to the size n-t configurations, as an explicit table."""

    def __init__(self, params: SystemParams, space: ValueSpace, entries: Mapping):
        self.params = params
        self.space = space
        self.entries = dict(entries)

    def __call__(self, vector: InputConfiguration):
        return self.entries[vector]

    def __getitem__(self, vector):
        return self.entries[vector]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def items(self):
        return self.entries.items()

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config_id", "config", "lambda_value"])
        for i, (c, v) in enumerate(self.entries.items()):
            w.writerow([i, json.dumps(c.to_json(), separators=(",", ":")), json.dumps(v)])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str, params: SystemParams, space: ValueSpace) -> "LambdaTable":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["config_id", "config", "lambda_value"]:
            raise SchemaError(f"lambda CSV header {reader.fieldnames!r}")
        entries = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                c = InputConfiguration.from_json(json.loads(row["config"]))
                entries[c] = json.loads(row["lambda_value"])
            except (json.JSONDecodeError, SchemaError) as exc:
                raise SchemaError(f"lambda CSV line {lineno}: {exc}") from None
        return cls(params, space, entries)


class LambdaEvaluator:
    """Lambda computed on demand and memoized.

    Used where materializing the whole table is too slow; every process that
    builds one from the same inputs computes the same function.
    """

    def __init__(self, val: ValidityProperty, params: SystemParams, space: ValueSpace,
                 chooser: Callable = least, budget: int | None = None):
        self.val, self.params, self.space = val, params, space
        self.chooser = chooser
        self.budget = budget
        self._memo: dict = {}

    def __call__(self, vector: InputConfiguration):
        if vector not in self._memo:
            cands = common_admissible(self.val, vector, self.params, self.space, self.budget)
            if not cands:
                raise LambdaUndefined(vector)
            self._memo[vector] = self.chooser(cands)
        return self._memo[vector]


def compute_lambda(val: ValidityProperty, params: SystemParams, space: ValueSpace,
                   budget: int | None = None, chooser: Callable = least) -> LambdaTable:
    """Build Lambda over I_{n-t}; raises LambdaUndefined with the first failing c."""
    index = _MaskIndex(val, params, space, budget)
    entries = {}
    for c in iter_configs(params, space, sizes=[params.n - params.t], budget=budget):
        common = index.common(c)
        if not common:
            raise LambdaUndefined(c)
        entries[c] = chooser(_unmask(common, space))
    return LambdaTable(params, space, entries)


@dataclass
class ClassificationReport:
    verdict: str
    trivial_witness: Any = None
    cs_holds: bool = False
    cs_counterexample: InputConfiguration | None = None
    lambda_table: LambdaTable | None = None
    notes: list = field(default_factory=list)

    @property
    def solvable(self) -> bool:
        return self.verdict != UNSOLVABLE

    def render(self) -> str:
        lines = [f"verdict: {self.verdict}"]
        if self.trivial_witness is not None:
            lines.append(f"always-admissible value: {self.trivial_witness!r}")
        lines.append(f"similarity condition: {'holds' if self.cs_holds else 'fails'}")
        if self.cs_counterexample is not None:
            lines.append(f"counterexample: {self.cs_counterexample!r}")
        if self.lambda_table is not None:
            lines.append(f"lambda entries: {len(self.lambda_table)}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


def classify(val: ValidityProperty, params: SystemParams, space: ValueSpace,
             budget: int | None = None, chooser: Callable = least) -> ClassificationReport:
    val.check_space(space)
    witness = check_trivial(val, params, space, budget)
    report = ClassificationReport(verdict=UNSOLVABLE, trivial_witness=witness)
    try:
        report.lambda_table = compute_lambda(val, params, space, budget, chooser)
        report.cs_holds = True
    except LambdaUndefined as exc:
        report.cs_counterexample = exc.counterexample

    if witness is not None:
        # trivial properties need no communication, whatever n and t are
        report.verdict = SOLVABLE_TRIVIAL
        report.notes.append("trivial: every process decides the always-admissible value at once")
    elif not params.supermajority:
        report.notes.append("n <= 3t and no always-admissible value")
    elif report.cs_holds:
        report.verdict = SOLVABLE_UNIVERSAL
        report.notes.append(
            f"non-trivial: any solution sends more than ceil(t/2)^2 = {(-(-params.t // 2)) ** 2} "
            "messages after GST (Omega(t^2)); Universal over the authenticated "
            "back end sends O(n^2)")
    if report.verdict == UNSOLVABLE:
        report.lambda_table = None
    return report
