"""Message-complexity sweeps over n with silent faults and GST = 0."""

from __future__ import annotations

from dataclasses import dataclass

from .scenario import METRICS_COLUMNS, ScenarioSpec, run_spec, silent_spec

RATIO_BAND = (3.0, 5.0)

# exact counts from the first verified run; the simulator is deterministic
GOLDEN_MSGS = {
    ("vector/auth", 4): 45,
    ("vector/auth", 8): 138,
    ("vector/auth", 16): 433,
}


class BenchAbort(RuntimeError):
    def __init__(self, spec: ScenarioSpec, verdict: dict):
        super().__init__(f"verdict failed for {spec.name or spec.protocol} (n={spec.n}, seed={spec.seed}): "
                         f"{ {k: v for k, v in verdict.items() if v is False} }")
        self.spec = spec
        self.verdict = verdict


@dataclass
class BenchRow:
    n: int
    t: int
    protocol: str
    adversary: str
    seed: int
    msgs_after_gst: int
    words_after_gst: int
    latency_ticks: int | None
    verdicts: str

    def as_metrics(self) -> dict:
        return {"n": self.n, "t": self.t, "protocol": self.protocol, "adversary": self.adversary,
                "seed": self.seed, "msgs_after_gst": self.msgs_after_gst,
                "words_after_gst": self.words_after_gst,
                "latency": "" if self.latency_ticks is None else self.latency_ticks}


def sweep(protocol: str, sizes, seed: int = 0) -> list[BenchRow]:
    rows = []
    for n in sorted(sizes):
        spec = silent_spec(protocol, n, seed)
        res = run_spec(spec)
        if not res.ok:
            raise BenchAbort(spec, res.verdict)
        m = res.metrics
        rows.append(BenchRow(n, spec.t, protocol, "silent", seed, m.msgs_after_gst,
                             m.words_after_gst, m.latency, "pass"))
    return rows


def doubling_ratios(rows, key="msgs_after_gst") -> list[tuple[int, int, float]]:
    by_n = {r.n: getattr(r, key) for r in rows}
    return [(n, 2 * n, by_n[2 * n] / by_n[n]) for n in sorted(by_n) if 2 * n in by_n and by_n[n]]


def flag_ratios(ratios, band=RATIO_BAND):
    lo, hi = band
    return [(a, b, r) for a, b, r in ratios if not lo <= r <= hi]


def quadratic_fit(rows, key="words_after_gst") -> tuple[float, float]:
    """Least-squares C in y = C n^2 and the worst relative residual."""
    xs = [r.n ** 2 for r in rows]
    ys = [getattr(r, key) for r in rows]
    c = sum(x * y for x, y in zip(xs, ys)) / sum(x * x for x in xs)
    worst = max(abs(y - c * x) / (c * x) for x, y in zip(xs, ys))
    return c, worst


def summary(rows, band=RATIO_BAND) -> str:
    lines = [f"{'n':>4} {'t':>3} {'msgs':>8} {'words':>9} {'latency':>8}"]
    for r in rows:
        lines.append(f"{r.n:>4} {r.t:>3} {r.msgs_after_gst:>8} {r.words_after_gst:>9} "
                     f"{'' if r.latency_ticks is None else r.latency_ticks:>8}")
    ratios = doubling_ratios(rows)
    flagged = {(a, b) for a, b, _ in flag_ratios(ratios, band)}
    for a, b, r in ratios:
        mark = "  <-- outside band" if (a, b) in flagged else ""
        lines.append(f"msgs({b})/msgs({a}) = {r:.3f}{mark}")
    if len(rows) >= 2:
        c, worst = quadratic_fit(rows)
        lines.append(f"words ~ {c:.2f} n^2, worst residual {worst:.1%}")
    return "\n".join(lines)


__all__ = ["BenchRow", "BenchAbort", "sweep", "doubling_ratios", "flag_ratios", "quadratic_fit",
           "summary", "METRICS_COLUMNS", "GOLDEN_MSGS"]
