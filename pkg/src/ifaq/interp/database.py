"""In-memory databases: relations as dictionaries from tuples to multiplicities."""

from __future__ import annotations

from collections import Counter
from typing import Iterable

from ..frontend.schema import Schema
from ..ir.values import DictV, Record


class Database:
    def __init__(self, relations: dict[str, DictV] | None = None, schema: Schema | None = None):
        self.relations: dict[str, DictV] = {}
        self.schema = schema
        self._tries: dict = {}
        for name, d in (relations or {}).items():
            self.add(name, d)

    def add(self, name: str, rel: DictV | dict) -> None:
        data = rel.data if isinstance(rel, DictV) else dict(rel)
        self.relations[name] = DictV(data, relation=name)
        self._tries = {k: v for k, v in self._tries.items() if k[0] != name}

    @classmethod
    def from_rows(cls, schema: Schema, rows: dict[str, Iterable]) -> "Database":
        """Rows are tuples in declared attribute order or mappings."""
        db = cls(schema=schema)
        for name, rs in rows.items():
            attrs = schema.relation(name).attr_names
            counts: Counter = Counter()
            for r in rs:
                vals = [r[a] for a in attrs] if isinstance(r, dict) else list(r)
                counts[Record(zip(attrs, vals))] += 1
            db.add(name, dict(counts))
        for name in schema.relations:
            if name not in db.relations:
                db.add(name, {})
        return db

    def __getitem__(self, name: str) -> DictV:
        return self.relations[name]

    def __contains__(self, name: str) -> bool:
        return name in self.relations

    def names(self) -> list[str]:
        return list(self.relations)

    def cardinalities(self) -> dict[str, int]:
        return {n: len(d) for n, d in self.relations.items()}

    def total_tuples(self) -> int:
        return sum(len(d) for d in self.relations.values())

    def unit_multiplicities(self, name: str) -> bool:
        return all(v == 1 for v in self.relations[name].data.values())

    def trie(self, name: str, attrs: tuple) -> DictV:
        """Nested dictionary over ``attrs``; level keys are one-field records.

        The leaf level carries the relation tag so that iterating it counts
        tuple visits.
        """
        key = (name, tuple(attrs))
        t = self._tries.get(key)
        if t is None:
            t = build_trie(self.relations[name], tuple(attrs), name)
            self._tries[key] = t
        return t

    def schema_with_cardinalities(self) -> Schema | None:
        if self.schema is None:
            return None
        return self.schema.with_cardinalities(self.cardinalities())


def build_trie(rel: DictV, attrs: tuple, tag: str | None) -> DictV:
    if not attrs:
        raise ValueError("a trie needs at least one attribute")
    root: dict = {}
    for tup, mult in rel.data.items():
        node = root
        for a in attrs[:-1]:
            k = Record._raw((a,), (tup.get(a),))
            node = node.setdefault(k, {})
        a = attrs[-1]
        k = Record._raw((a,), (tup.get(a),))
        node[k] = node.get(k, 0) + mult

    def freeze(d: dict, depth: int) -> DictV:
        if depth == len(attrs) - 1:
            return DictV(d, relation=tag)
        return DictV({k: freeze(v, depth + 1) for k, v in d.items()})
    return freeze(root, 0)
