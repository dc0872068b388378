"""Consensus for any solvable validity property: run vector consensus, then
decide Lambda of the decided vector."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .errors import LambdaUndefined
from .node import Component
from .validity import (SystemParams, ValidityProperty, ValueSpace, classify, count_configs,
                       ClassificationReport)
from .vector import AUTH, BACKENDS, make_vector

_reports: dict = {}


def classified(prop: ValidityProperty, params: SystemParams, space: ValueSpace,
               budget: int | None = None) -> ClassificationReport:
    """classify() memoized per process; the result is a pure function of its inputs."""
    key = (prop, params, space)
    if key not in _reports:
        _reports[key] = classify(prop, params, space, budget=budget)
    return _reports[key]


@dataclass
class UniversalConfig:
    property: ValidityProperty
    lam: Callable
    backend: str = AUTH
    binary: str = "dbft"

    @classmethod
    def build(cls, prop: ValidityProperty, params: SystemParams, space: ValueSpace,
              backend: str = AUTH, lam: Callable | None = None, budget: int | None = None,
              binary: str = "dbft") -> "UniversalConfig":
        """Refuses (LambdaUndefined) unless Lambda exists for ``prop``."""
        if backend not in BACKENDS:
            raise ValueError(f"unknown back end {backend!r}; pick one of {BACKENDS}")
        if not params.supermajority:
            raise LambdaUndefined(None, f"vector consensus needs n > 3t (n={params.n}, t={params.t})")
        if lam is None:
            rep = classified(prop, params, space, budget)
            if rep.lambda_table is None:
                raise LambdaUndefined(rep.cs_counterexample,
                                      f"{prop.name} has no Lambda at n={params.n}, t={params.t}")
            lam = rep.lambda_table
        elif hasattr(lam, "__len__"):
            want = count_configs(params, space, sizes=[params.n - params.t])
            if len(lam) != want:
                raise LambdaUndefined(None, f"Lambda table has {len(lam)} entries, expected {want}")
        return cls(prop, lam, backend, binary)


class Universal(Component):
    def __init__(self, port, proposal, config: UniversalConfig):
        super().__init__(port)
        self.proposal = proposal
        self.config = config
        self.vc = make_vector(config.backend, port.sub(config.backend), self._vector,
                              binary=config.binary)

    def start(self):
        self.vc.propose(self.proposal)

    def _vector(self, vector):
        value = self.config.lam(vector)
        self.port.note("universal", vector=vector, value=value)
        self.port.decide(value)
