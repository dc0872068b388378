"""Best-effort, Byzantine reliable (Bracha) and slow broadcast."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable

from .node import Component, Port
from .validity import InputConfiguration


def value_words(v, acc=None) -> int:
    if isinstance(v, InputConfiguration):
        return len(v) * (acc.value if acc else 1)
    size = getattr(v, "size", None)
    if size is not None and acc is not None:
        return size(acc)
    return 1


def echo_threshold(n: int, t: int) -> int:
    return (n + t + 2) // 2  # ceil((n + t + 1) / 2)


def beb_broadcast(port: Port, msg) -> None:
    port.broadcast(msg)


@dataclass(frozen=True)
class BrbSend:
    mid: Any
    value: Any
    tag = "SEND"

    def size(self, acc):
        return value_words(self.value, acc)


@dataclass(frozen=True)
class BrbEcho:
    origin: int
    mid: Any
    value: Any
    tag = "ECHO"

    def size(self, acc):
        return value_words(self.value, acc)


@dataclass(frozen=True)
class BrbReady:
    origin: int
    mid: Any
    value: Any
    tag = "READY"

    def size(self, acc):
        return value_words(self.value, acc)


INIT, ECHOED, READIED, DELIVERED = "init", "echoed", "readied", "delivered"


class BrbInstance:
    __slots__ = ("phase", "echoed", "readied", "delivered", "echoes", "readies")

    def __init__(self):
        self.phase = INIT
        self.echoed = False
        self.readied = False
        self.delivered = None
        self.echoes = defaultdict(set)
        self.readies = defaultdict(set)


class Brb(Component):
    """Bracha broadcast; many instances keyed by (origin, mid).

    ``on_deliver(origin, mid, value)`` fires at most once per instance.
    """

    def __init__(self, port: Port, on_deliver: Callable):
        super().__init__(port)
        self.on_deliver = on_deliver
        self.instances: dict = {}
        n, t = port.n, port.t
        self.echo_q = echo_threshold(n, t)
        self.ready_amp = t + 1
        self.deliver_q = 2 * t + 1

    def state(self, origin, mid) -> BrbInstance:
        key = (origin, mid)
        st = self.instances.get(key)
        if st is None:
            st = self.instances[key] = BrbInstance()
        return st

    def broadcast(self, value, mid=0, alt=None) -> None:
        p = self.port
        if p.byzantine == "equivocate" and alt is not None and alt != value:
            half = (p.n + 1) // 2
            for j in range(1, p.n + 1):
                p.send(j, BrbSend(mid, value if j <= half else alt))
            return
        p.broadcast(BrbSend(mid, value))

    def on_message(self, sender, msg):
        try:
            hash(msg)
        except TypeError:
            return
        if isinstance(msg, BrbSend):
            st = self.state(sender, msg.mid)
            if not st.echoed:
                st.echoed = True
                st.phase = ECHOED
                self.port.broadcast(BrbEcho(sender, msg.mid, msg.value))
        elif isinstance(msg, BrbEcho):
            st = self.state(msg.origin, msg.mid)
            voters = st.echoes[msg.value]
            voters.add(sender)
            if len(voters) >= self.echo_q:
                self._ready(st, msg.origin, msg.mid, msg.value)
        elif isinstance(msg, BrbReady):
            st = self.state(msg.origin, msg.mid)
            voters = st.readies[msg.value]
            voters.add(sender)
            if len(voters) >= self.ready_amp:
                self._ready(st, msg.origin, msg.mid, msg.value)
            if len(voters) >= self.deliver_q and st.delivered is None:
                st.delivered = (msg.value,)
                st.phase = DELIVERED
                self.on_deliver(msg.origin, msg.mid, msg.value)

    def _ready(self, st, origin, mid, value):
        if st.readied:
            return
        st.readied = True
        if st.phase != DELIVERED:
            st.phase = READIED
        self.port.broadcast(BrbReady(origin, mid, value))


@dataclass(frozen=True)
class SlowMsg:
    payload: Any
    tag = "SLOW_BROADCAST"

    def size(self, acc):
        return value_words(self.payload, acc)


class SlowBroadcast(Component):
    """Sends to P1..Pn in index order, waiting delta * n**(i-1) between sends."""

    def __init__(self, port: Port, on_deliver: Callable):
        super().__init__(port)
        self.on_deliver = on_deliver
        self.gap = port.delta * port.n ** (port.me - 1)
        self.payload = None
        self.next_target = None
        self.stopped = False
        self.sent_at: list = []

    def broadcast(self, payload) -> None:
        self.payload = payload
        self.next_target = 1
        self._step()

    def stop(self) -> None:
        self.stopped = True

    def _step(self):
        if self.stopped or self.next_target is None or self.next_target > self.port.n:
            return
        self.port.send(self.next_target, SlowMsg(self.payload))
        self.sent_at.append(self.port.now)
        self.next_target += 1
        if self.next_target <= self.port.n:
            self.port.set_timer(self.gap, "next")

    def on_timer(self, tag):
        if tag == "next":
            self._step()

    def on_message(self, sender, msg):
        if isinstance(msg, SlowMsg):
            self.on_deliver(sender, msg.payload)
