"""Composable protocol components hosted inside one simulator automaton.

Each component owns a channel name; its messages travel wrapped in
:class:`Routed` so the host can dispatch them, and its timers carry the
channel as well.  Wrapping is free in word accounting.
"""

from __future__ import annotations

from .sim import Automaton, payload_size, payload_tag


class Routed:
    __slots__ = ("channel", "inner")

    def __init__(self, channel: str, inner):
        self.channel = channel
        self.inner = inner

    @property
    def tag(self):
        return payload_tag(self.inner)

    def size(self, acc):
        return payload_size(self.inner, acc)

    def __repr__(self):
        return f"{self.channel}:{self.inner!r}"


class Port:
    """A component's view of its process: identity, keys, send, timers."""

    def __init__(self, node: "Node", channel: str):
        self.node = node
        self.channel = channel

    @property
    def ctx(self):
        return self.node.ctx

    @property
    def me(self):
        return self.node.ctx.me

    @property
    def n(self):
        return self.node.ctx.n

    @property
    def t(self):
        return self.node.ctx.t

    @property
    def delta(self):
        return self.node.ctx.delta

    @property
    def now(self):
        return self.node.ctx.now

    @property
    def keys(self):
        return self.node.ctx.keys

    @property
    def ring(self):
        return self.node.ctx.ring

    @property
    def space(self):
        return self.node.ctx.space

    @property
    def byzantine(self):
        return self.node.byzantine

    def send(self, to: int, msg) -> None:
        self.node.ctx.send(to, Routed(self.channel, msg))

    def broadcast(self, msg) -> None:
        # one shared wrapper; envelopes are immutable in practice
        self.node.ctx.broadcast(Routed(self.channel, msg))

    def set_timer(self, delay: int, tag) -> int:
        return self.node.ctx.set_timer(delay, (self.channel, tag))

    def cancel_timer(self, tid: int) -> None:
        self.node.ctx.cancel_timer(tid)

    def note(self, kind: str, **data) -> None:
        self.node.ctx.note(kind, **data)

    def decide(self, value) -> None:
        self.node.ctx.decide(value)

    def sub(self, name: str) -> "Port":
        return Port(self.node, f"{self.channel}/{name}" if self.channel else name)


class Component:
    def __init__(self, port: Port):
        self.port = port
        port.node.routes[port.channel] = self

    def on_message(self, sender: int, msg) -> None:
        pass

    def on_timer(self, tag) -> None:
        pass


class Node(Automaton):
    """Hosts a component tree; ``build(port)`` returns the root, which must
    provide ``start()``."""

    def __init__(self, build, byzantine: str | None = None):
        self.build = build
        self.byzantine = byzantine
        self.routes: dict = {}
        self.ctx = None
        self.root = None

    def on_start(self, ctx):
        self.ctx = ctx
        self.root = self.build(Port(self, ""))
        self.root.start()

    def on_message(self, ctx, sender, payload):
        self.ctx = ctx
        if isinstance(payload, Routed):
            comp = self.routes.get(payload.channel)
            if comp is not None:
                comp.on_message(sender, payload.inner)

    def on_timer(self, ctx, tag):
        self.ctx = ctx
        channel, inner = tag
        comp = self.routes.get(channel)
        if comp is not None:
            comp.on_timer(inner)
