"""Byzantine behaviors for faulty processes.

A behavior is built from the honest protocol factory, so "faulty but mostly
honest" processes (crash, equivocation, the lower-bound group) run the real
protocol code with a twist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import UnknownAdversary
from .sim import Automaton, Schedule, Silent, Sync

SILENT = "silent"
CRASH_AT = "crash_at"
EQUIVOCATE = "equivocate_leader"
LOWER_BOUND = "lower_bound"
KINDS = (SILENT, CRASH_AT, EQUIVOCATE, LOWER_BOUND)


class Crash(Automaton):
    """Runs the honest automaton and takes no steps after tick ``at``."""

    def __init__(self, inner: Automaton, at: int):
        self.inner = inner
        self.at = at

    def on_start(self, ctx):
        if ctx.now <= self.at:
            self.inner.on_start(ctx)

    def on_message(self, ctx, sender, payload):
        if ctx.now <= self.at:
            self.inner.on_message(ctx, sender, payload)

    def on_timer(self, ctx, tag):
        if ctx.now <= self.at:
            self.inner.on_timer(ctx, tag)


class _Filtered:
    # context proxy that drops sends to a set of processes
    def __init__(self, ctx, drop):
        self._ctx = ctx
        self._drop = drop

    def __getattr__(self, name):
        return getattr(self._ctx, name)

    def send(self, to, payload):
        if to not in self._drop:
            self._ctx.send(to, payload)

    def broadcast(self, payload):
        for j in range(1, self._ctx.n + 1):
            self.send(j, payload)


class LowerBoundMember(Automaton):
    """Honest code, except: skip the first ``ignore`` messages from others and
    never send to the other members of the group."""

    def __init__(self, inner: Automaton, me: int, group, ignore: int):
        self.inner = inner
        self.ignore = ignore
        self.dropped = 0
        self.drop = frozenset(group) - {me}
        self._proxy = None

    def _wrap(self, ctx):
        if self._proxy is None:
            self._proxy = _Filtered(ctx, self.drop)
        return self._proxy

    def on_start(self, ctx):
        self.inner.on_start(self._wrap(ctx))

    def on_message(self, ctx, sender, payload):
        if sender != ctx.me and self.dropped < self.ignore:
            self.dropped += 1
            ctx.note("ignored", sender=sender)
            return
        self.inner.on_message(self._wrap(ctx), sender, payload)

    def on_timer(self, ctx, tag):
        self.inner.on_timer(self._wrap(ctx), tag)


@dataclass
class Adversary:
    kind: str
    faulty: frozenset
    schedule: Schedule | None = None
    gst: int | None = None
    crash_time: int | None = None
    group_proposal: Any = None
    params: dict = field(default_factory=dict)

    def behavior(self, pid: int, factory: Callable, proposal: Any) -> Callable[[int], Automaton]:
        """``factory(pid, proposal, byzantine=None)`` builds the honest automaton."""
        if self.kind == SILENT:
            return lambda p: Silent()
        if self.kind == CRASH_AT:
            return lambda p: Crash(factory(p, proposal), self.crash_time)
        if self.kind == EQUIVOCATE:
            return lambda p: factory(p, proposal, byzantine="equivocate")
        if self.kind == LOWER_BOUND:
            ignore = math.ceil(self.params["t"] / 2)
            return lambda p: LowerBoundMember(factory(p, proposal), p, self.faulty, ignore)
        raise UnknownAdversary(self.kind)


def parse_kind(spec: str) -> tuple[str, dict]:
    """``"crash_at:5"`` -> ("crash_at", {"at": 5}); other kinds take no argument."""
    name, _, arg = str(spec).partition(":")
    if name not in KINDS:
        raise UnknownAdversary(f"unknown adversary {spec!r}; known: {', '.join(KINDS)}")
    if name == CRASH_AT:
        try:
            return name, {"at": int(arg) if arg else 0}
        except ValueError:
            raise UnknownAdversary(f"bad crash time in {spec!r}") from None
    if arg:
        raise UnknownAdversary(f"{name} takes no argument")
    return name, {}


def make_adversary(kind: str, params, faulty=None) -> Adversary:
    """Build an adversary for ``params`` (a SystemParams).

    ``faulty`` defaults to the t highest indices; the lower-bound adversary
    always uses the ceil(t/2) highest indices and forces a synchronous run.
    """
    name, args = parse_kind(kind)
    if name == LOWER_BOUND:
        k = math.ceil(params.t / 2)
        group = frozenset(range(params.n - k + 1, params.n + 1))
        return Adversary(name, group, schedule=Sync(), gst=0, params={"t": params.t})
    if faulty is None:
        faulty = range(params.n - params.t + 1, params.n + 1)
    faulty = frozenset(faulty)
    if len(faulty) > params.t:
        raise ValueError(f"{len(faulty)} faulty processes exceed t={params.t}")
    return Adversary(name, faulty, crash_time=args.get("at"), params={"t": params.t})
