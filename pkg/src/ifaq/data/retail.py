"""Deterministic generator for the three-relation retail star schema.

Sales(i, s, u) references Items(i, p) and Stores(s, c). The relation names
are S, I and R so that generated databases plug straight into the linear
regression and regression tree builders.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..frontend.schema import Schema, schema_from_json
from ..interp.database import Database
from ..ir.values import Record

MASK64 = (1 << 64) - 1


class GenerationError(ValueError):
    pass


class SplitMix64:
    """splitmix64 with the usual constants (golden-ratio increment,
    multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB)."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next()
            if x < limit:
                return x % n

    def between(self, lo: int, hi: int) -> int:
        return lo + self.below(hi - lo + 1)


@dataclass
class GenSpec:
    seed: int = 1
    sales: int = 1000
    items: int = 50
    stores: int = 10
    cities: int = 5
    price: tuple = (1, 100)
    units: tuple = (1, 10)

    def validate(self) -> None:
        for name in ("sales", "items", "stores", "cities"):
            if getattr(self, name) < 0:
                raise GenerationError(f"{name} must be non-negative")
        for name in ("price", "units"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise GenerationError(f"empty {name} range {lo}..{hi}")
        if self.sales and (self.items == 0 or self.stores == 0):
            raise GenerationError("sales need at least one item and one store")
        if self.stores and self.cities == 0:
            raise GenerationError("stores need at least one city")
        space = self.items * self.stores * (self.units[1] - self.units[0] + 1)
        if self.sales > space:
            raise GenerationError(
                f"cannot draw {self.sales} distinct sales from {space} (item, store, units) combinations")


RETAIL_SCHEMA = {
    "relations": [
        {"name": "S", "attrs": [{"name": "i", "type": "int"}, {"name": "s", "type": "int"},
                                {"name": "u", "type": "int"}]},
        {"name": "R", "attrs": [{"name": "s", "type": "int"}, {"name": "c", "type": "int"}]},
        {"name": "I", "attrs": [{"name": "i", "type": "int"}, {"name": "p", "type": "int"}]},
    ],
    "featureSets": {"F": ["i", "s", "c", "p"]},
    "label": "u",
    "joinTree": {"root": "S", "edges": [
        {"parent": "S", "child": "R", "attrs": ["s"]},
        {"parent": "S", "child": "I", "attrs": ["i"]},
    ]},
}


def retail_schema() -> Schema:
    return schema_from_json(RETAIL_SCHEMA)


def _sample_distinct(rng: SplitMix64, n: int, k: int) -> list:
    """k distinct indices from range(n): a partial Fisher-Yates shuffle over a
    sparse swap table."""
    swaps: dict = {}
    out = []
    for j in range(k):
        r = j + rng.below(n - j)
        out.append(swaps.get(r, r))
        swaps[r] = swaps.get(j, j)
    return out


def generate_retail(spec: GenSpec) -> Database:
    spec.validate()
    rng = SplitMix64(spec.seed)
    schema = retail_schema()
    stores = [(s, rng.between(1, spec.cities)) for s in range(1, spec.stores + 1)]
    items = [(i, rng.between(*spec.price)) for i in range(1, spec.items + 1)]
    nu = spec.units[1] - spec.units[0] + 1
    sales = []
    for ix in _sample_distinct(rng, spec.items * spec.stores * nu, spec.sales):
        ix, u = divmod(ix, nu)
        i, s = divmod(ix, spec.stores)
        sales.append((i + 1, s + 1, spec.units[0] + u))
    sales.sort(key=lambda t: (t[1], t[0], t[2]))
    db = Database(schema=schema)
    db.add("S", {Record({"i": i, "s": s, "u": u}): 1 for i, s, u in sales})
    db.add("R", {Record({"s": s, "c": c}): 1 for s, c in stores})
    db.add("I", {Record({"i": i, "p": p}): 1 for i, p in items})
    return db
