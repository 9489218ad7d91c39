"""Instrumentation counters and the loop iteration policy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

COUNTERS = ("tuplesScanned", "arithmeticOps", "dictLookups", "dictInserts", "loopIterations")


@dataclass
class IterationPolicy:
    """Bound on the top-level while loop.

    The loop stops when its condition is false, after ``max_iters`` rounds,
    or when the largest absolute change of the loop state drops below
    ``epsilon``.
    """

    max_iters: int = 100
    epsilon: float | None = None

    def __post_init__(self):
        if self.max_iters is None or self.max_iters < 0:
            raise ValueError("max_iters must be a non-negative integer")


@dataclass
class CostStats:
    tuplesScanned: int = 0
    arithmeticOps: int = 0
    dictLookups: int = 0
    dictInserts: int = 0
    loopIterations: int = 0
    # rounds of the top-level while loop and the counters spent inside it
    whileIterations: int = 0
    loop: "CostStats | None" = field(default=None, repr=False)
    # sorted-merge cursor moves of the physical engine; not a reported counter
    mergeAdvances: int = field(default=0, repr=False)

    def snapshot(self) -> tuple:
        return tuple(getattr(self, c) for c in COUNTERS)

    def since(self, snap: tuple) -> "CostStats":
        return CostStats(*(getattr(self, c) - s for c, s in zip(COUNTERS, snap)))

    def counters(self) -> dict:
        return {c: getattr(self, c) for c in COUNTERS}

    def to_json(self) -> dict:
        out = self.counters()
        out["whileIterations"] = self.whileIterations
        out["loop"] = self.loop.counters() if self.loop is not None else None
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False)

    def __add__(self, other: "CostStats") -> "CostStats":
        return CostStats(*(getattr(self, c) + getattr(other, c) for c in COUNTERS))
