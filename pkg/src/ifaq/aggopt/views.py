"""View trees: aggregates decomposed along a join tree."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..frontend.printer import pretty
from ..frontend.schema import JoinTree, SchemaError
from ..ir.ast import Const, Expr, FieldStatic, Var, build_mul, flatten_mul, map_children, walk
from ..ir.ops import canonical
from .extract import TUPLE_VAR, AggregateSpec
from .join import JoinSpec


class PushDownError(Exception):
    pass


@dataclass
class View:
    node: str
    name: str
    key: tuple  # join attributes shared with the parent; () at the root
    payload: list = field(default_factory=list)  # list[(entry name, Expr)]

    def entry_names(self) -> list[str]:
        return [n for n, _ in self.payload]

    def to_json(self) -> dict:
        return {"node": self.node, "name": self.name, "key": list(self.key),
                "payload": [{"name": n, "expr": pretty(e)} for n, e in self.payload]}


def ref_var(view_name: str) -> str:
    """Variable bound to a probed child view entry inside the parent scan."""
    return "w" + view_name[1:]


@dataclass
class ViewTree:
    tree: JoinTree
    join: JoinSpec
    views: dict  # node -> list[View]
    outputs: dict  # spec id -> (root view name, entry name)

    def view(self, name: str) -> View:
        for vs in self.views.values():
            for v in vs:
                if v.name == name:
                    return v
        raise KeyError(name)

    def is_merged(self) -> bool:
        return all(len(vs) == 1 for vs in self.views.values())

    def to_json(self) -> list:
        return [v.to_json() for n in self.tree.postorder() for v in self.views.get(n, [])]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _depths(jt: JoinTree) -> dict:
    d = {jt.root: 0}
    for n in jt.nodes:
        for e in jt.children(n):
            d[e.child] = d[n] + 1
    return d


def place_factor(f: Expr, join: JoinSpec, jt: JoinTree) -> str | None:
    """Deepest join-tree node that carries every field of ``f`` (None: constant)."""
    depth = _depths(jt)
    fields = {n.name for n in walk(f) if isinstance(n, FieldStatic)
              and isinstance(n.expr, Var) and n.expr.name == TUPLE_VAR}
    nodes = None
    for fl in fields:
        c = join.carriers(fl)
        if not c:
            continue
        nodes = set(c) if nodes is None else nodes & set(c)
    if nodes is None:
        return None
    if not nodes:
        raise PushDownError(f"measure factor {pretty(f)} spans several relations")
    order = jt.nodes
    return max(nodes, key=lambda n: (depth[n], -order.index(n)))


def localize(f: Expr, node: str, join: JoinSpec) -> Expr:
    """Rewrite output-field accesses of ``f`` to attributes of ``node``."""
    def go(e: Expr) -> Expr:
        if isinstance(e, FieldStatic) and isinstance(e.expr, Var) and e.expr.name == TUPLE_VAR:
            src = join.outputs[e.name]
            if isinstance(src, Const):
                return src
            return FieldStatic(Var(TUPLE_VAR), join.carriers(e.name)[node])
        return map_children(e, go)
    return go(f)


def push_down(batch: list[AggregateSpec], jt: JoinTree, join: JoinSpec) -> ViewTree:
    for n in jt.nodes:
        if n not in join.relations:
            raise PushDownError(f"join tree node {n!r} is not part of the query")
    views: dict = {n: [] for n in jt.nodes}
    outputs = {}
    for k, spec in enumerate(batch):
        own: dict = {n: [] for n in jt.nodes}
        for f in spec.factors:
            n = place_factor(f, join, jt)
            own[n or jt.root].append(localize(f, n or jt.root, join))
        names = {}
        for n in jt.postorder():
            names[n] = f"V{k}_{n}"
            refs = [FieldStatic(Var(ref_var(names[e.child])), "v") for e in jt.children(n)]
            facs = own[n] + refs
            expr = build_mul(facs) if facs else Const(1)
            pe = jt.parent_edge(n)
            views[n].append(View(n, names[n], tuple(pe.attrs) if pe else (), [("v", expr)]))
        outputs[spec.id] = (names[jt.root], "v")
    return ViewTree(jt, join, views, outputs)


def merged_name(node: str) -> str:
    return f"W_{node}"


def merge_views(vt: ViewTree) -> ViewTree:
    """One view per node; payload entries deduplicated up to expression equality."""
    jt = vt.tree
    remap: dict = {}  # (old view name, old entry) -> new entry name
    new_views: dict = {}
    for n in jt.postorder():
        name = merged_name(n)
        subst = {}
        for e in jt.children(n):
            for old in vt.views[e.child]:
                subst[ref_var(old.name)] = (ref_var(merged_name(e.child)), old.name)
        seen: dict = {}
        payload = []
        key = vt.views[n][0].key if vt.views[n] else ()
        for old in vt.views[n]:
            for ent, expr in old.payload:
                expr = _remap_refs(expr, subst, remap)
                c = canonical(expr)
                if c not in seen:
                    seen[c] = f"v{len(payload)}"
                    payload.append((seen[c], expr))
                remap[(old.name, ent)] = seen[c]
        new_views[n] = [View(n, name, key, payload)]
    outputs = {sid: (merged_name(jt.root), remap[(vn, ent)]) for sid, (vn, ent) in vt.outputs.items()}
    return ViewTree(jt, vt.join, new_views, outputs)


def _remap_refs(e: Expr, subst: dict, remap: dict) -> Expr:
    if isinstance(e, FieldStatic) and isinstance(e.expr, Var) and e.expr.name in subst:
        new_var, old_view = subst[e.expr.name]
        return FieldStatic(Var(new_var), remap[(old_view, e.name)])
    return map_children(e, lambda c: _remap_refs(c, subst, remap))


def payload_factors(e: Expr) -> list[Expr]:
    return [f for f in flatten_mul(e) if not (isinstance(f, Const) and f.value == 1)]


def check_key_coverage(vt: ViewTree) -> None:
    for e in vt.tree.edges:
        for v in vt.views[e.child]:
            if tuple(v.key) != tuple(e.attrs):
                raise SchemaError(f"view {v.name} keyed by {v.key}, edge attributes {e.attrs}")
