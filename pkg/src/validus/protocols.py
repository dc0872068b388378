"""Named protocols runnable from scenarios and the command line.

A factory has the shape ``factory(pid, proposal, byzantine=None) -> Automaton``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .broadcast import Brb
from .core import BinaryConsensus, CoreBinary, ProvableConsensus, ValueProofPair
from .node import Component, Node
from .sim import Automaton
from .universal import Universal, UniversalConfig
from .vector import BACKENDS, DisseminationRoot, VectorRoot

UNIVERSAL = [f"universal/{b}" for b in BACKENDS]
VECTOR = [f"vector/{b}" for b in BACKENDS]
PROTOCOLS = UNIVERSAL + VECTOR + ["core", "binary", "binary/core", "brb", "dissemination", "echo"]


@dataclass(frozen=True)
class Ping:
    tag = "PING"

    def size(self, acc):
        return 1


class EchoOnce(Automaton):
    """Sends one message to everybody at start; never decides."""

    def on_start(self, ctx):
        ctx.broadcast(Ping())


class BrbRoot(Component):
    """P1 reliably broadcasts its proposal; delivering it is the decision."""

    origin = 1

    def __init__(self, port, proposal):
        super().__init__(port)
        self.proposal = proposal
        self.brb = Brb(port.sub("brb"), self._delivered)

    def start(self):
        if self.port.me == self.origin:
            alt = next((x for x in self.port.space.inputs if x != self.proposal), None)
            self.brb.broadcast(self.proposal, alt=alt)

    def _delivered(self, origin, mid, value):
        if origin == self.origin:
            self.port.decide(value)


class BinaryRoot(Component):
    def __init__(self, port, proposal, kind="dbft"):
        super().__init__(port)
        self.proposal = proposal
        cls = BinaryConsensus if kind == "dbft" else CoreBinary
        self.bc = cls(port.sub("bin"), port.decide)

    def start(self):
        self.bc.propose(self.proposal)


class CoreRoot(Component):
    """Provable core where a pair is valid iff its value is a legal input."""

    def __init__(self, port, proposal):
        super().__init__(port)
        self.proposal = proposal
        inputs = set(port.space.inputs)
        self.core = ProvableConsensus(port.sub("quad"),
                                      lambda pr: pr.proof is None and pr.value in inputs,
                                      lambda pr: port.decide(pr.value))

    def start(self):
        self.core.propose(ValueProofPair(self.proposal))


def make_factory(protocol: str, config: UniversalConfig | None = None, binary: str = "dbft"):
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; known: {', '.join(PROTOCOLS)}")
    family, _, backend = protocol.partition("/")
    if family == "echo":
        return lambda pid, v, byzantine=None: EchoOnce()

    if family == "universal":
        if config is None:
            raise ValueError("universal protocols need a UniversalConfig")
        if config.backend != backend:
            config = UniversalConfig(config.property, config.lam, backend, config.binary)
        build = lambda v: (lambda port: Universal(port, v, config))
    elif family == "vector":
        build = lambda v: (lambda port: VectorRoot(port, v, backend, binary))
    elif family == "binary":
        kind = "core" if backend == "core" else "dbft"
        build = lambda v: (lambda port: BinaryRoot(port, v, kind))
    elif family == "core":
        build = lambda v: (lambda port: CoreRoot(port, v))
    elif family == "brb":
        build = lambda v: (lambda port: BrbRoot(port, v))
    else:
        build = lambda v: (lambda port: DisseminationRoot(port, v))

    def factory(pid, v, byzantine=None):
        return Node(build(v), byzantine=byzantine)
    return factory
