"""Consensus engines used as building blocks.

``ProvableConsensus`` agrees on value-proof pairs accepted by a shared
``verify`` predicate.  It is a three-phase locking protocol with quorum
certificates (QCs): prepare, precommit, commit.  Votes go to the view
leader only; view changes send NEW_VIEW to the next leader only.  Timeouts
double every view.

``BinaryConsensus`` is a signature-free binary agreement: BV-broadcast
rounds, a weak per-round coordinator and parity-based decisions.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable

from . import crypto
from .broadcast import value_words
from .node import Component, Port
from .validity import InputConfiguration

PREPARE, PRECOMMIT, COMMIT = "prepare", "precommit", "commit"


def canon_value(v):
    if isinstance(v, InputConfiguration):
        return ["ic", [list(p) for p in v.pairs]]
    if isinstance(v, tuple):
        return [canon_value(x) for x in v]
    return v


def value_digest(v) -> bytes:
    return crypto.digest_of(canon_value(v))


def proof_words(proof, acc) -> int:
    if proof is None:
        return 0
    if isinstance(proof, crypto.ThresholdSignature):
        return acc.threshold
    size = getattr(proof, "size", None)
    return size(acc) if size else 1


@dataclass(frozen=True)
class ValueProofPair:
    value: Any
    proof: Any = None

    @property
    def digest(self) -> bytes:
        return value_digest(self.value)

    def size(self, acc):
        return value_words(self.value, acc) + proof_words(self.proof, acc)


@dataclass(frozen=True)
class QC:
    phase: str
    view: int
    digest: bytes
    tsig: crypto.ThresholdSignature

    def size(self, acc):
        return acc.digest + acc.qc


def vote_digest(phase, view, digest) -> bytes:
    return crypto.digest_of(["vote", phase, view, digest])


# -- wire messages -----------------------------------------------------------

@dataclass(frozen=True)
class Propose:
    view: int
    pair: ValueProofPair
    justify: QC | None
    tag = "PROPOSE"

    def size(self, acc):
        return self.pair.size(acc) + (self.justify.size(acc) if self.justify else 0)


@dataclass(frozen=True)
class Vote:
    phase: str
    view: int
    digest: bytes
    partial: crypto.PartialSignature
    tag = "VOTE"

    def size(self, acc):
        return acc.digest + acc.signature


@dataclass(frozen=True)
class QCMsg:
    qc: QC
    tag = "QC"

    def size(self, acc):
        return self.qc.size(acc)


@dataclass(frozen=True)
class NewView:
    view: int
    qc: QC | None
    qc_pair: ValueProofPair | None
    pair: ValueProofPair | None
    tag = "NEW_VIEW"

    def size(self, acc):
        w = 1
        for part in (self.qc, self.qc_pair, self.pair):
            if part is not None:
                w += part.size(acc)
        return w


@dataclass(frozen=True)
class Decide:
    qc: QC
    pair: ValueProofPair
    tag = "DECIDE"

    def size(self, acc):
        return self.qc.size(acc) + self.pair.size(acc)


class ProvableConsensus(Component):
    def __init__(self, port: Port, verify: Callable[[ValueProofPair], bool],
                 on_decide: Callable[[ValueProofPair], None], base_timeout: int | None = None,
                 alt: Callable[[], ValueProofPair | None] | None = None):
        super().__init__(port)
        self.verify = verify
        self.on_decide = on_decide
        self.alt = alt
        self.k = port.n - port.t
        self.base_timeout = base_timeout or 10 * port.delta
        self.view = 0
        self.pair = None
        self.locked: QC | None = None
        self.prepare_qc: QC | None = None
        self.prepare_pair = None
        self.known: dict = {}
        self.voted: set = set()
        self.votes = defaultdict(dict)
        self.formed: set = set()
        self.leading: dict = {}
        self.new_views = defaultdict(dict)
        self.pending: list = []
        self.timer = None
        self.decided = None
        self.halted = False
        self._valid_cache: dict = {}

    def leader(self, view: int) -> int:
        return view % self.port.n + 1

    # -- helpers ---------------------------------------------------------------

    def _valid(self, pair) -> bool:
        if not isinstance(pair, ValueProofPair):
            return False
        try:
            return self._valid_cache[pair]
        except KeyError:
            pass
        except TypeError:
            return False
        ok = bool(self.verify(pair))
        self._valid_cache[pair] = ok
        return ok

    def _qc_ok(self, qc, phase=None) -> bool:
        if not isinstance(qc, QC) or (phase and qc.phase != phase):
            return False
        ok = self.port.ring.verify_threshold(vote_digest(qc.phase, qc.view, qc.digest), qc.tsig, self.k)
        if ok:
            self.port.note("qc", phase=qc.phase, view=qc.view, digest=qc.digest.hex()[:16])
        return ok

    def _enter(self, view: int) -> None:
        self.view = view
        self.port.note("view", view=view)
        if self.timer is not None:
            self.port.cancel_timer(self.timer)
        self.timer = self.port.set_timer(self.base_timeout * 2 ** min(view - 1, 30), ("view", view))

    # -- interface -------------------------------------------------------------

    def propose(self, pair: ValueProofPair) -> None:
        if self.pair is not None:
            return
        self.pair = pair
        self.known[pair.digest] = pair
        if self.view == 0:
            self._enter(1)
        if self.leader(self.view) == self.port.me and self.view == 1:
            self._lead(1, pair, None)
        self._try_lead()
        pending, self.pending = self.pending, []
        for sender, msg in pending:
            self.on_message(sender, msg)

    def _lead(self, view, pair, justify):
        if view in self.leading:
            return
        self.leading[view] = pair.digest
        p = self.port
        if p.byzantine in ("equivocate", "invalid"):
            other = self.alt() if (self.alt and p.byzantine == "equivocate") else None
            if other is None or other.digest == pair.digest:
                other = ValueProofPair(pair.value, ("forged", p.me, view))
            if p.byzantine == "invalid":
                p.broadcast(Propose(view, other, justify))
                return
            half = (p.n + 1) // 2
            for j in range(1, p.n + 1):
                p.send(j, Propose(view, pair if j <= half else other, justify))
            return
        p.broadcast(Propose(view, pair, justify))

    def _try_lead(self):
        v = self.view
        if v < 2 or self.leader(v) != self.port.me or v in self.leading:
            return
        nvs = self.new_views.get(v, {})
        if len(nvs) < self.k:
            return
        best = None
        fallback = self.pair
        for nv in nvs.values():
            if nv.qc is not None and (best is None or nv.qc.view > best.qc.view):
                best = nv
            if fallback is None and nv.pair is not None:
                fallback = nv.pair
        if best is not None:
            self._lead(v, best.qc_pair, best.qc)
        elif fallback is not None:
            self._lead(v, fallback, None)

    # -- events ------------------------------------------------------------------

    def on_timer(self, tag):
        if self.halted or self.decided is not None:
            return
        kind, view = tag
        if kind != "view" or view != self.view:
            return
        nxt = view + 1
        self.port.send(self.leader(nxt), NewView(nxt, self.prepare_qc, self.prepare_pair, self.pair))
        self._enter(nxt)
        self._try_lead()

    def on_message(self, sender, msg):
        if self.halted:
            return
        if isinstance(msg, Decide):
            self._on_decide(msg)
            return
        if self.pair is None:
            self.pending.append((sender, msg))
            return
        if isinstance(msg, Propose):
            self._on_propose(sender, msg)
        elif isinstance(msg, Vote):
            self._on_vote(sender, msg)
        elif isinstance(msg, QCMsg):
            self._on_qc(sender, msg.qc)
        elif isinstance(msg, NewView):
            self._on_new_view(sender, msg)

    def _on_propose(self, sender, msg: Propose):
        v = msg.view
        if not isinstance(v, int) or v < max(self.view, 1) or sender != self.leader(v):
            return
        pair = msg.pair
        if not self._valid(pair):
            self.port.note("discard", view=v, sender=sender)
            return
        d = pair.digest
        justify = msg.justify
        if justify is not None and not (self._qc_ok(justify, PREPARE) and justify.digest == d):
            return
        if v > self.view:
            self._enter(v)
        if (PREPARE, v) in self.voted:
            return
        locked = self.locked
        if locked is not None and locked.digest != d and not (justify and justify.view > locked.view):
            return
        self.known[d] = pair
        self.voted.add((PREPARE, v))
        self._vote(PREPARE, v, d)

    def _vote(self, phase, view, digest):
        partial = crypto.partial_sign(vote_digest(phase, view, digest), self.port.keys)
        self.port.send(self.leader(view), Vote(phase, view, digest, partial))

    def _on_vote(self, sender, msg: Vote):
        v = msg.view
        if self.leading.get(v) is None or self.leader(v) != self.port.me:
            return
        key = (msg.phase, v, msg.digest)
        if key in self.formed or msg.phase not in (PREPARE, PRECOMMIT, COMMIT):
            return
        part = msg.partial
        if (not isinstance(part, crypto.PartialSignature) or part.signer != sender
                or part.digest != vote_digest(msg.phase, v, msg.digest)
                or not crypto.verify_partial(part, self.port.ring.publics)):
            return
        bucket = self.votes[key]
        bucket[sender] = part
        if len(bucket) < self.k:
            return
        self.formed.add(key)
        qc = QC(msg.phase, v, msg.digest, crypto.combine(bucket.values(), self.k))
        self.port.note("qc", phase=qc.phase, view=v, digest=qc.digest.hex()[:16])
        if msg.phase == COMMIT:
            pair = self.known.get(msg.digest)
            if pair is not None:
                # deciding here broadcasts DECIDE once; no second copy to forward
                self._on_decide(Decide(qc, pair))
        else:
            self.port.broadcast(QCMsg(qc))

    def _on_qc(self, sender, qc):
        if not isinstance(qc, QC) or qc.phase not in (PREPARE, PRECOMMIT):
            return
        if qc.view < self.view or sender != self.leader(qc.view):
            return
        if qc.digest not in self.known or not self._qc_ok(qc):
            return
        if qc.view > self.view:
            self._enter(qc.view)
        v = qc.view
        if qc.phase == PREPARE:
            if self.prepare_qc is None or qc.view > self.prepare_qc.view:
                self.prepare_qc = qc
                self.prepare_pair = self.known[qc.digest]
            if (PRECOMMIT, v) not in self.voted:
                self.voted.add((PRECOMMIT, v))
                self._vote(PRECOMMIT, v, qc.digest)
        else:
            if self.locked is None or qc.view > self.locked.view:
                self.locked = qc
            if (COMMIT, v) not in self.voted:
                self.voted.add((COMMIT, v))
                self._vote(COMMIT, v, qc.digest)

    def _on_new_view(self, sender, msg: NewView):
        v = msg.view
        if not isinstance(v, int) or v < max(self.view, 2) or self.leader(v) != self.port.me:
            return
        qc, qc_pair = msg.qc, msg.qc_pair
        if qc is not None and not (self._valid(qc_pair) and qc_pair.digest == qc.digest
                                   and self._qc_ok(qc, PREPARE)):
            qc = qc_pair = None
        pair = msg.pair if self._valid(msg.pair) else None
        self.new_views[v][sender] = NewView(v, qc, qc_pair, pair)
        if len(self.new_views[v]) >= self.k and v > self.view:
            self._enter(v)
        self._try_lead()

    def _on_decide(self, msg: Decide):
        if self.decided is not None or not isinstance(msg.qc, QC):
            return
        pair = msg.pair
        if not self._valid(pair) or msg.qc.digest != pair.digest or not self._qc_ok(msg.qc, COMMIT):
            return
        self.decided = pair
        self.port.note("core_decide", view=msg.qc.view, digest=pair.digest.hex()[:16])
        self.port.broadcast(msg)
        self.halted = True
        if self.timer is not None:
            self.port.cancel_timer(self.timer)
        self.on_decide(pair)


# -- binary consensus -------------------------------------------------------------

@dataclass(frozen=True)
class BvVal:
    round: int
    bit: int
    tag = "BV_VAL"

    def size(self, acc):
        return acc.value


@dataclass(frozen=True)
class Coord:
    round: int
    bit: int
    tag = "COORD"

    def size(self, acc):
        return acc.value


@dataclass(frozen=True)
class Aux:
    round: int
    bits: frozenset
    tag = "AUX"

    def size(self, acc):
        return max(1, len(self.bits)) * acc.value


@dataclass(frozen=True)
class BinDecide:
    bit: int
    tag = "DECIDE"

    def size(self, acc):
        return acc.value


class _Round:
    __slots__ = ("bv", "sent_bv", "bin_values", "coord", "aux", "aux_sent", "timed_out", "coord_sent")

    def __init__(self):
        self.bv = ({0: set(), 1: set()})
        self.sent_bv = set()
        self.bin_values = set()
        self.coord = None
        self.aux = {}
        self.aux_sent = False
        self.timed_out = False
        self.coord_sent = False


class BinaryConsensus(Component):
    """Binary agreement with Strong Validity and no signatures."""

    def __init__(self, port: Port, on_decide: Callable[[int], None]):
        super().__init__(port)
        self.on_decide = on_decide
        self.n, self.t = port.n, port.t
        self.rounds = defaultdict(_Round)
        self.round = 0
        self.est = None
        self.decided = None
        self.halted = False
        self.decide_from = {0: set(), 1: set()}
        self.decide_sent = False

    def coordinator(self, r: int) -> int:
        return r % self.n + 1

    def propose(self, bit: int) -> None:
        if self.est is not None or self.halted:
            return
        self.est = bit
        self._start_round(1)

    def _start_round(self, r):
        self.round = r
        st = self.rounds[r]
        self._bv_send(r, st, self.est)
        self.port.set_timer((3 + r) * self.port.delta, ("round", r))
        self._progress()

    def _bv_send(self, r, st, bit):
        if bit in st.sent_bv:
            return
        st.sent_bv.add(bit)
        p = self.port
        if p.byzantine == "equivocate":
            half = (p.n + 1) // 2
            for j in range(1, p.n + 1):
                p.send(j, BvVal(r, bit if j <= half else 1 - bit))
            return
        p.broadcast(BvVal(r, bit))

    def on_timer(self, tag):
        if self.halted:
            return
        _, r = tag
        self.rounds[r].timed_out = True
        if r == self.round:
            self._progress()

    def on_message(self, sender, msg):
        if self.halted:
            return
        if isinstance(msg, BinDecide):
            if msg.bit in (0, 1):
                self._on_decide_msg(sender, msg.bit)
            return
        r = getattr(msg, "round", None)
        if not isinstance(r, int) or r < 1:
            return
        st = self.rounds[r]
        if isinstance(msg, BvVal) and msg.bit in (0, 1):
            voters = st.bv[msg.bit]
            voters.add(sender)
            if len(voters) >= self.t + 1:
                self._bv_send(r, st, msg.bit)
            if len(voters) >= 2 * self.t + 1 and msg.bit not in st.bin_values:
                st.bin_values.add(msg.bit)
                if self.coordinator(r) == self.port.me and not st.coord_sent and r <= self.round:
                    st.coord_sent = True
                    self.port.broadcast(Coord(r, msg.bit))
        elif isinstance(msg, Coord) and msg.bit in (0, 1):
            if sender == self.coordinator(r) and st.coord is None:
                st.coord = msg.bit
        elif isinstance(msg, Aux) and isinstance(msg.bits, frozenset) and msg.bits <= {0, 1}:
            if msg.bits and sender not in st.aux:
                st.aux[sender] = msg.bits
        else:
            return
        if r == self.round:
            self._progress()

    def _progress(self):
        while not self.halted and self.est is not None:
            r = self.round
            st = self.rounds[r]
            if not st.bin_values:
                return
            if self.coordinator(r) == self.port.me and not st.coord_sent:
                st.coord_sent = True
                self.port.broadcast(Coord(r, min(st.bin_values)))
            if not st.aux_sent:
                if st.coord is not None and st.coord in st.bin_values:
                    aux = frozenset({st.coord})
                elif st.timed_out:
                    aux = frozenset(st.bin_values)
                else:
                    return
                st.aux_sent = True
                self.port.broadcast(Aux(r, aux))
            senders = [s for s, bits in st.aux.items() if bits <= st.bin_values]
            if len(senders) < self.n - self.t:
                return
            vals = set()
            for s in senders:
                vals |= st.aux[s]
            parity = r % 2
            if len(vals) == 1:
                (b,) = vals
                self.est = b
                if b == parity:
                    self._decide(b)
            else:
                self.est = parity
            self._start_round(r + 1)
            return

    def _decide(self, bit):
        if self.decided is None:
            self.decided = bit
            self.port.note("binary_decide", bit=bit, round=self.round)
            self.on_decide(bit)
        if not self.decide_sent:
            self.decide_sent = True
            self.port.broadcast(BinDecide(bit))

    def _on_decide_msg(self, sender, bit):
        self.decide_from[bit].add(sender)
        if len(self.decide_from[bit]) >= self.t + 1:
            self._decide(bit)
        if len(self.decide_from[bit]) >= self.n - self.t and self.decided is not None:
            self.halted = True


class CoreBinary(Component):
    """Binary agreement via the provable core with trivial proofs.

    Meant for cross-checking in benign runs.  With trivial proofs a faulty
    leader can push a bit nobody correct proposed, so it lacks Strong Validity.
    """

    def __init__(self, port: Port, on_decide: Callable[[int], None]):
        super().__init__(port)
        self.on_decide = on_decide
        self.decided = None
        self.core = ProvableConsensus(port.sub("core"), lambda pr: pr.value in (0, 1) and pr.proof is None,
                                      self._done)

    def propose(self, bit: int) -> None:
        self.core.propose(ValueProofPair(bit))

    def _done(self, pair):
        self.decided = pair.value
        self.on_decide(pair.value)
