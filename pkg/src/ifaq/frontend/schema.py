"""Relation schemas, feature sets and join trees loaded from JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..ir.types import DictT, INT, IfaqType, RecordT, SCALAR_NAMES, SetT, FIELD


class SchemaError(Exception):
    pass


@dataclass(frozen=True)
class RelationSchema:
    name: str
    attrs: tuple  # tuple[tuple[str, IfaqType], ...] in declared order
    cardinality: int | None = None

    @property
    def attr_names(self) -> tuple:
        return tuple(a for a, _ in self.attrs)

    def attr_type(self, name: str) -> IfaqType:
        for a, t in self.attrs:
            if a == name:
                return t
        raise SchemaError(f"relation {self.name} has no attribute {name!r}")

    @property
    def tuple_type(self) -> RecordT:
        return RecordT(tuple(sorted(self.attrs)))

    @property
    def dict_type(self) -> DictT:
        return DictT(self.tuple_type, INT)


@dataclass(frozen=True)
class JoinEdge:
    parent: str
    child: str
    attrs: tuple


@dataclass
class JoinTree:
    """Rooted tree of relations; each edge carries its join attributes."""

    root: str
    edges: list = field(default_factory=list)

    def children(self, node: str) -> list[JoinEdge]:
        return [e for e in self.edges if e.parent == node]

    def parent_edge(self, node: str) -> JoinEdge | None:
        for e in self.edges:
            if e.child == node:
                return e
        return None

    @property
    def nodes(self) -> list[str]:
        out = [self.root]
        i = 0
        while i < len(out):
            out.extend(e.child for e in self.children(out[i]))
            i += 1
        return out

    def restrict(self, keep) -> "JoinTree | None":
        """The subtree induced by ``keep``, or None when it is not connected."""
        keep = set(keep)
        if not keep <= set(self.nodes):
            return None
        tops = [n for n in keep if (pe := self.parent_edge(n)) is None or pe.parent not in keep]
        if len(tops) != 1:
            return None
        return JoinTree(tops[0], [e for e in self.edges if e.parent in keep and e.child in keep])

    def postorder(self) -> list[str]:
        out = []

        def go(n):
            for e in self.children(n):
                go(e.child)
            out.append(n)
        go(self.root)
        return out

    def validate(self, schema: "Schema | None" = None) -> None:
        seen = {self.root}
        for e in self.edges:
            if e.child in seen:
                raise SchemaError(f"join tree node {e.child!r} has two parents or forms a cycle")
            seen.add(e.child)
        reach = set(self.nodes)
        if reach != seen:
            raise SchemaError(f"join tree is not connected from root {self.root!r}: {sorted(seen - reach)}")
        if schema is not None:
            for n in seen:
                if n not in schema.relations:
                    raise SchemaError(f"join tree mentions unknown relation {n!r}")
            for e in self.edges:
                if not e.attrs:
                    raise SchemaError(f"join edge {e.parent}-{e.child} has no attributes")
                for a in e.attrs:
                    for rel in (e.parent, e.child):
                        if a not in schema.relations[rel].attr_names:
                            raise SchemaError(f"join attribute {a!r} missing from relation {rel!r}")

    def to_json(self) -> dict:
        return {"root": self.root,
                "edges": [{"parent": e.parent, "child": e.child, "attrs": list(e.attrs)}
                          for e in self.edges]}


@dataclass
class Schema:
    relations: dict  # name -> RelationSchema, in declaration order
    feature_sets: dict = field(default_factory=dict)  # name -> tuple[str]
    label: str | None = None
    join_tree: JoinTree | None = None

    def relation(self, name: str) -> RelationSchema:
        try:
            return self.relations[name]
        except KeyError:
            raise SchemaError(f"unknown relation {name!r}") from None

    def cardinality(self, name: str) -> int | None:
        r = self.relations.get(name)
        return r.cardinality if r else None

    def owners(self, attr: str) -> list[str]:
        return [r.name for r in self.relations.values() if attr in r.attr_names]

    def all_attrs(self) -> set[str]:
        return {a for r in self.relations.values() for a in r.attr_names}

    def var_types(self) -> dict[str, IfaqType]:
        env = {n: r.dict_type for n, r in self.relations.items()}
        for n in self.feature_sets:
            env.setdefault(n, SetT(FIELD))
        return env

    def with_cardinalities(self, counts: dict) -> "Schema":
        rels = {n: RelationSchema(r.name, r.attrs, counts.get(n, r.cardinality))
                for n, r in self.relations.items()}
        return Schema(rels, dict(self.feature_sets), self.label, self.join_tree)

    def to_json(self) -> dict:
        out = {"relations": [
            {"name": r.name,
             "attrs": [{"name": a, "type": str(t).lower()} for a, t in r.attrs],
             "cardinality": r.cardinality} for r in self.relations.values()],
            "featureSets": {k: list(v) for k, v in self.feature_sets.items()},
            "label": self.label}
        if self.join_tree is not None:
            out["joinTree"] = self.join_tree.to_json()
        return out


def schema_from_json(data: dict) -> Schema:
    if not isinstance(data, dict) or "relations" not in data:
        raise SchemaError("schema must be an object with a 'relations' list")
    rels = {}
    for r in data["relations"]:
        name = r.get("name")
        if not name:
            raise SchemaError("relation without a name")
        if name in rels:
            raise SchemaError(f"duplicate relation {name!r}")
        attrs = []
        for a in r.get("attrs", []):
            an, ty = (a, "real") if isinstance(a, str) else (a.get("name"), a.get("type", "real"))
            if ty.lower() not in SCALAR_NAMES:
                raise SchemaError(f"unknown attribute type {ty!r} in {name}.{an}")
            if any(an == x for x, _ in attrs):
                raise SchemaError(f"duplicate attribute {an!r} in relation {name!r}")
            attrs.append((an, SCALAR_NAMES[ty.lower()]))
        card = r.get("cardinality")
        rels[name] = RelationSchema(name, tuple(attrs), int(card) if card is not None else None)
    fs = data.get("featureSets", {}) or {}
    if isinstance(fs, list):
        fs = {f["name"]: f["fields"] for f in fs}
    all_attrs = {a for r in rels.values() for a in r.attr_names}
    feature_sets = {}
    for k, v in fs.items():
        for f in v:
            if f not in all_attrs:
                raise SchemaError(f"feature {f!r} of set {k!r} is not an attribute of any relation")
        feature_sets[k] = tuple(v)
    label = data.get("label")
    if label is not None and label not in all_attrs:
        raise SchemaError(f"label {label!r} is not an attribute of any relation")
    jt = None
    if data.get("joinTree"):
        j = data["joinTree"]
        jt = JoinTree(j["root"], [JoinEdge(e["parent"], e["child"], tuple(e["attrs"]))
                                  for e in j.get("edges", [])])
    schema = Schema(rels, feature_sets, label, jt)
    if jt is not None:
        jt.validate(schema)
    return schema


def load_schema(path) -> Schema:
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"schema file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file {p} is not valid JSON: {exc}") from None
    return schema_from_json(data)
