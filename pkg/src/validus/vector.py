"""Vector consensus: agree on n - t process-proposal pairs whose correct
entries are the true proposals.

Three variants share one interface (``propose(v)``, ``on_decide(vector)``):

* ``AuthVector``: signed proposals; the first n - t received, together with
  their signatures, are proposed to the provable core.
* ``NonAuthVector``: reliable broadcast of proposals and one binary
  agreement per process.  The decided vector takes the n - t lowest indices
  whose instance decided 1.
* ``LowCommVector``: signed proposals, vector dissemination, the core on
  (digest, threshold signature), then data recovery of the decided vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from . import crypto
from .broadcast import Brb, SlowBroadcast
from .core import (BinaryConsensus, CoreBinary, ProvableConsensus, ValueProofPair, canon_value,
                   value_digest)
from .node import Component, Port
from .validity import InputConfiguration

AUTH, NONAUTH, LOWCOMM = "auth", "nonauth", "lowcomm"
BACKENDS = (AUTH, NONAUTH, LOWCOMM)


def proposal_bytes(value) -> bytes:
    return crypto.encode(["PROPOSAL", canon_value(value)])


@dataclass(frozen=True)
class SignedProposal:
    process: int
    value: Any
    sig: crypto.Signature

    def size(self, acc):
        return acc.value + acc.signature

    def valid(self, ring) -> bool:
        return (isinstance(self.sig, crypto.Signature) and self.sig.signer == self.process
                and ring.verify(proposal_bytes(self.value), self.sig))


def sign_proposal(value, keys) -> SignedProposal:
    return SignedProposal(keys.process, value, crypto.sign(proposal_bytes(value), keys))


@dataclass(frozen=True)
class ProofSet:
    proposals: tuple

    def size(self, acc):
        return sum(p.size(acc) for p in self.proposals)


def verify_vector_proof(vector: InputConfiguration, sigma: ProofSet, ring) -> bool:
    if not isinstance(vector, InputConfiguration) or not isinstance(sigma, ProofSet):
        return False
    have = {}
    for sp in sigma.proposals:
        if isinstance(sp, SignedProposal) and sp.valid(ring):
            have.setdefault(sp.process, set()).add(sp.value)
    return all(v in have.get(p, ()) for p, v in vector)


def alternative_input(port: Port, v):
    for x in port.space.inputs:
        if x != v:
            return x
    return None


@dataclass(frozen=True)
class Proposal:
    signed: SignedProposal
    tag = "PROPOSAL"

    def size(self, acc):
        return self.signed.size(acc)


class VectorBase(Component):
    def __init__(self, port: Port, on_decide: Callable[[InputConfiguration], None]):
        super().__init__(port)
        self.on_decide = on_decide
        self.k = port.n - port.t
        self.decision = None

    def _decide(self, vector: InputConfiguration):
        if self.decision is not None:
            return
        self.decision = vector
        self.port.note("vector_decide", vector=vector)
        self.on_decide(vector)


class _SignedCollector(VectorBase):
    """Broadcasts a signed proposal and gathers the first n - t valid ones."""

    def __init__(self, port, on_decide):
        super().__init__(port, on_decide)
        self.first: dict = {}
        self.extra: dict = {}
        self.complete = False

    def propose(self, v) -> None:
        p = self.port
        mine = Proposal(sign_proposal(v, p.keys))
        alt = alternative_input(p, v) if p.byzantine == "equivocate" else None
        if alt is not None:
            other = Proposal(sign_proposal(alt, p.keys))
            half = (p.n + 1) // 2
            for j in range(1, p.n + 1):
                p.send(j, mine if j <= half else other)
            return
        p.broadcast(mine)

    def _on_proposal(self, sender, msg):
        sp = msg.signed
        if not isinstance(sp, SignedProposal) or sp.process != sender or not sp.valid(self.port.ring):
            return
        if sender in self.first or sender in self.extra:
            return
        if self.complete:
            self.extra[sender] = sp
            return
        self.first[sender] = sp
        if len(self.first) == self.k:
            self.complete = True
            vector = InputConfiguration(tuple((q, s.value) for q, s in self.first.items()))
            sigma = ProofSet(tuple(self.first[q] for q in sorted(self.first)))
            self._collected(vector, sigma)

    def _collected(self, vector, sigma):
        raise NotImplementedError

    def _alt_pair(self):
        # a faulty leader's second opinion: swap in a late proposal, if any
        if not self.extra:
            return None
        pool = dict(self.first)
        pool.pop(max(pool))
        q, sp = next(iter(self.extra.items()))
        pool[q] = sp
        vector = InputConfiguration(tuple((p, s.value) for p, s in pool.items()))
        return ValueProofPair(vector, ProofSet(tuple(pool[p] for p in sorted(pool))))


class AuthVector(_SignedCollector):
    def __init__(self, port, on_decide):
        super().__init__(port, on_decide)
        self.core = ProvableConsensus(port.sub("quad"), self._verify, self._core_decided,
                                      alt=self._alt_pair)

    def _verify(self, pair) -> bool:
        vec = pair.value
        return (isinstance(vec, InputConfiguration) and len(vec) == self.k
                and verify_vector_proof(vec, pair.proof, self.port.ring))

    def on_message(self, sender, msg):
        if isinstance(msg, Proposal):
            self._on_proposal(sender, msg)

    def _collected(self, vector, sigma):
        self.core.propose(ValueProofPair(vector, sigma))

    def _core_decided(self, pair):
        self._decide(pair.value)


class NonAuthVector(VectorBase):
    def __init__(self, port, on_decide, binary: str = "dbft"):
        super().__init__(port, on_decide)
        self.brb = Brb(port.sub("brb"), self._delivered)
        cls = BinaryConsensus if binary == "dbft" else CoreBinary
        self.bins = {j: cls(port.sub(f"bin{j}"), lambda b, j=j: self._bin_decided(j, b))
                     for j in range(1, port.n + 1)}
        self.proposals: dict = {}
        self.proposed: set = set()
        self.decided_bits: dict = {}
        self.phase_one = True

    def propose(self, v) -> None:
        self.brb.broadcast(v, alt=alternative_input(self.port, v))

    def _delivered(self, origin, mid, value):
        self.proposals[origin] = value
        if self.phase_one and origin not in self.proposed:
            self.proposed.add(origin)
            self.bins[origin].propose(1)
        self._try_finish()

    def _bin_decided(self, j, bit):
        self.decided_bits[j] = bit
        ones = sum(1 for b in self.decided_bits.values() if b == 1)
        if self.phase_one and ones >= self.k:
            self.phase_one = False
            for q, inst in self.bins.items():
                if q not in self.proposed:
                    self.proposed.add(q)
                    inst.propose(0)
        self._try_finish()

    def _try_finish(self):
        if self.decision is not None or len(self.decided_bits) < self.port.n:
            return
        chosen = sorted(j for j, b in self.decided_bits.items() if b == 1)[: self.k]
        if len(chosen) < self.k or any(j not in self.proposals for j in chosen):
            return
        self._decide(InputConfiguration(tuple((j, self.proposals[j]) for j in chosen)))


# -- vector dissemination ------------------------------------------------------

@dataclass(frozen=True)
class VecPayload:
    vector: InputConfiguration
    proofs: ProofSet | None

    def size(self, acc):
        # the vector counts n - t words; its signatures travel as attachments
        return len(self.vector) * acc.value


@dataclass(frozen=True)
class Stored:
    digest: bytes
    partial: crypto.PartialSignature
    tag = "STORED"

    def size(self, acc):
        return acc.digest + acc.signature


@dataclass(frozen=True)
class Confirm:
    digest: bytes
    tsig: crypto.ThresholdSignature
    tag = "CONFIRM"

    def size(self, acc):
        return acc.digest + acc.threshold


class Dissemination(Component):
    """Slow-broadcast a vector, collect n - t STORED acknowledgements, spread
    the resulting threshold signature, stop after the first valid CONFIRM."""

    def __init__(self, port: Port, on_acquire: Callable, check: Callable | None = None):
        super().__init__(port)
        self.on_acquire = on_acquire
        self.check = check
        self.k = port.n - port.t
        self.slow = SlowBroadcast(port.sub("slow"), self._slow_delivered)
        self.h = None
        self.cache: dict = {}
        self.disseminated: set = set()
        self.stored: dict = {}
        self.confirm_sent = False
        self.acquired = None
        self.participating = True

    def disseminate(self, vector: InputConfiguration, proofs: ProofSet | None = None) -> None:
        if not self.participating or self.h is not None:
            return
        self.h = value_digest(vector)
        self.port.note("disseminate", digest=self.h.hex()[:16])
        self.slow.broadcast(VecPayload(vector, proofs))

    def _slow_delivered(self, sender, payload):
        if not self.participating or sender in self.disseminated:
            return
        if not isinstance(payload, VecPayload) or not isinstance(payload.vector, InputConfiguration):
            return
        if len(payload.vector) != self.k:
            return
        if self.check is not None and not self.check(payload.vector, payload.proofs):
            self.port.note("reject_vector", sender=sender)
            return
        self.disseminated.add(sender)
        h = value_digest(payload.vector)
        self.cache[h] = payload.vector
        self.port.note("cached", digest=h.hex()[:16])
        self.port.send(sender, Stored(h, crypto.partial_sign(h, self.port.keys)))

    def on_message(self, sender, msg):
        if not self.participating:
            return
        if isinstance(msg, Stored):
            part = msg.partial
            if self.h is None or msg.digest != self.h or sender in self.stored:
                return
            if (not isinstance(part, crypto.PartialSignature) or part.signer != sender
                    or part.digest != self.h or not crypto.verify_partial(part, self.port.ring.publics)):
                return
            self.stored[sender] = part
            if len(self.stored) >= self.k and not self.confirm_sent:
                self.confirm_sent = True
                self.port.broadcast(Confirm(self.h, crypto.combine(self.stored.values(), self.k)))
        elif isinstance(msg, Confirm):
            if not self.port.ring.verify_threshold(msg.digest, msg.tsig, self.k):
                return
            self.port.broadcast(Confirm(msg.digest, msg.tsig))
            self.acquired = (msg.digest, msg.tsig)
            self.participating = False
            self.slow.stop()
            self.port.note("acquire", digest=msg.digest.hex()[:16])
            self.on_acquire(msg.digest, msg.tsig)


# -- data recovery -------------------------------------------------------------

@dataclass(frozen=True)
class AddShare:
    vector: InputConfiguration
    tag = "ADD_SHARE"

    def size(self, acc):
        return len(self.vector) * acc.value if isinstance(self.vector, InputConfiguration) else 1


class Add(Component):
    """Naive recovery: holders send the blob to everyone; receivers keep the
    first copy whose digest matches.  Nothing is output without a holder."""

    def __init__(self, port: Port, on_output: Callable):
        super().__init__(port)
        self.on_output = on_output
        self.expected = None
        self.output = None
        self.shares: list = []

    def input(self, vector: InputConfiguration | None, digest: bytes) -> None:
        if self.expected is not None:
            return
        self.expected = digest
        if vector is not None and value_digest(vector) == digest:
            self.port.broadcast(AddShare(vector))
            self._out(vector)
            return
        for vec in self.shares:
            if self._matches(vec):
                self._out(vec)
                return

    def _matches(self, vec):
        return isinstance(vec, InputConfiguration) and value_digest(vec) == self.expected

    def on_message(self, sender, msg):
        if self.output is not None or not isinstance(msg, AddShare):
            return
        if self.expected is None:
            self.shares.append(msg.vector)
        elif self._matches(msg.vector):
            self._out(msg.vector)
        else:
            self.port.note("add_reject", sender=sender)

    def _out(self, vec):
        if self.output is None:
            self.output = vec
            self.on_output(vec)


class LowCommVector(_SignedCollector):
    def __init__(self, port, on_decide):
        super().__init__(port, on_decide)
        self.dissem = Dissemination(port.sub("dissem"), self._acquired, check=self._check)
        self.core = ProvableConsensus(port.sub("quad"), self._verify, self._core_decided)
        self.add = Add(port.sub("add"), self._decide)

    def _check(self, vector, proofs):
        return verify_vector_proof(vector, proofs, self.port.ring)

    def _verify(self, pair) -> bool:
        return (isinstance(pair.value, bytes) and
                self.port.ring.verify_threshold(pair.value, pair.proof, self.k))

    def on_message(self, sender, msg):
        if isinstance(msg, Proposal):
            self._on_proposal(sender, msg)

    def _collected(self, vector, sigma):
        self.dissem.disseminate(vector, sigma)

    def _acquired(self, digest, tsig):
        self.core.propose(ValueProofPair(digest, tsig))

    def _core_decided(self, pair):
        self.port.note("lowcomm_core", digest=pair.value.hex()[:16])
        self.add.input(self.dissem.cache.get(pair.value), pair.value)


def make_vector(backend: str, port: Port, on_decide, binary: str = "dbft") -> VectorBase:
    if backend == AUTH:
        return AuthVector(port, on_decide)
    if backend == NONAUTH:
        return NonAuthVector(port, on_decide, binary=binary)
    if backend == LOWCOMM:
        return LowCommVector(port, on_decide)
    raise ValueError(f"unknown vector back end {backend!r}")


class VectorRoot(Component):
    """Top-level component deciding the raw vector."""

    def __init__(self, port, proposal, backend, binary="dbft"):
        super().__init__(port)
        self.proposal = proposal
        self.vc = make_vector(backend, port.sub(backend), port.decide, binary=binary)

    def start(self):
        self.vc.propose(self.proposal)


class DisseminationRoot(Component):
    """Each process disseminates a fixed vector; acquiring counts as deciding."""

    def __init__(self, port, proposal):
        super().__init__(port)
        self.proposal = proposal
        self.dissem = Dissemination(port.sub("dissem"), lambda h, tsig: port.decide(h))

    def start(self):
        k = self.port.n - self.port.t
        vec = InputConfiguration(tuple((q, self.proposal) for q in range(1, k + 1)))
        self.dissem.disseminate(vec)
