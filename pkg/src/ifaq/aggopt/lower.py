"""Multi-aggregate code generation from merged view trees.

``lower_multi_aggregate`` emits one summation per join-tree node that
scans the relation once and builds every payload entry of the node's view.
``dict_to_trie`` replaces those scans with nested summations over a trie
index of the relation: each child-view probe and each measure factor is
placed at the shallowest trie level that binds the attributes it reads, and
the partial aggregates of the deeper levels are carried up as records.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..frontend.printer import pretty
from ..frontend.schema import JoinTree
from ..ir.ast import (
    Const, DictLit, Dom, Expr, FieldStatic, IndexDecl, Let, Lookup, RecordLit, Sum, Var,
    build_mul, lets, map_children, walk,
)
from ..ir.ops import canonical
from .extract import TUPLE_VAR
from .views import ViewTree, merge_views, payload_factors, ref_var


@dataclass
class Fragment:
    bindings: list = field(default_factory=list)  # [(name, Expr)] in dependency order
    indexes: list = field(default_factory=list)  # [IndexDecl]
    outputs: dict = field(default_factory=dict)  # spec id -> Expr reading the result
    view_tree: ViewTree | None = None
    trie_orders: dict = field(default_factory=dict)  # node -> attribute order

    @property
    def empty(self) -> bool:
        return not self.bindings

    def pretty(self) -> str:
        lines = [f"index {ix.name} = trie({ix.relation}, {', '.join(ix.attrs)});" for ix in self.indexes]
        lines += [f"let {n} = {pretty(e)};" for n, e in self.bindings]
        return "\n".join(lines)


def _zero_record(view) -> Expr:
    return RecordLit(tuple((n, Const(0)) for n in view.entry_names()))


def _child_probe(vt: ViewTree, child: str, key_of) -> tuple:
    """(ref var, lookup expr) for the merged view of ``child``."""
    v = vt.views[child][0]
    key = RecordLit(tuple((a, key_of(a)) for a in v.key))
    return ref_var(v.name), Lookup(Var(v.name), key, _zero_record(v))


def _refs_in(e: Expr) -> set:
    return {n.name for n in walk(e) if isinstance(n, Var)}


def lower_multi_aggregate(vt: ViewTree, unit_relations=()) -> Fragment:
    """Flat lowering: one scan per relation over its tuple dictionary."""
    if not vt.outputs:
        return Fragment(view_tree=vt)
    if not vt.is_merged():
        vt = merge_views(vt)
    jt = vt.tree
    frag = Fragment(view_tree=vt)
    for n in jt.postorder():
        frag.bindings.append((vt.views[n][0].name, _flat_scan(vt, n, unit_relations)))
    root = vt.views[jt.root][0].name
    frag.outputs = {sid: FieldStatic(Var(root), ent) for sid, (_, ent) in vt.outputs.items()}
    return frag


def _flat_scan(vt: ViewTree, n: str, unit_relations) -> Expr:
    jt = vt.tree
    view = vt.views[n][0]
    x = Var(TUPLE_VAR)
    used = set().union(*(_refs_in(e) for _, e in view.payload)) if view.payload else set()
    probes = []
    for e in jt.children(n):
        w, look = _child_probe(vt, e.child, lambda a: FieldStatic(x, a))
        if w in used:
            probes.append((w, look))
    value: Expr = lets(probes, RecordLit(tuple(view.payload)))
    if n not in unit_relations:
        value = build_mul([Lookup(Var(n), x), value])
    if view.key:
        value = DictLit(((RecordLit(tuple((a, FieldStatic(x, a)) for a in view.key)), value),))
    return Sum(TUPLE_VAR, Dom(Var(n)), value)


def trie_order(jt: JoinTree, node: str, attrs) -> tuple:
    """Parent-edge attributes, then child-edge attributes, then the rest by name."""
    out: list = []
    pe = jt.parent_edge(node)
    for a in (pe.attrs if pe else ()):
        if a not in out:
            out.append(a)
    for e in jt.children(node):
        for a in e.attrs:
            if a not in out:
                out.append(a)
    out += sorted(a for a in attrs if a not in out)
    return tuple(out)


def dict_to_trie(frag: Fragment, jt: JoinTree, relation_attrs: dict, unit_relations=(),
                 index_names: dict | None = None) -> Fragment:
    """Rewrite each relation scan of ``frag`` over a trie index.

    ``relation_attrs`` maps relation names to their attribute names.
    Relations with a single attribute keep their flat scan.
    """
    vt = frag.view_tree
    if vt is None or frag.empty:
        return frag
    out = Fragment(outputs=dict(frag.outputs), view_tree=vt)
    flat = dict(frag.bindings)
    for n in jt.postorder():
        name = vt.views[n][0].name
        attrs = relation_attrs[n]
        if len(attrs) < 2:
            out.bindings.append((name, flat[name]))
            continue
        order = trie_order(jt, n, attrs)
        tname = (index_names or {}).get(n, f"T_{n}")
        out.indexes.append(IndexDecl(tname, n, order))
        out.trie_orders[n] = order
        out.bindings.append((name, _TrieScan(vt, jt, n, order, tname, n in unit_relations).build()))
    return out


class _TrieScan:
    def __init__(self, vt: ViewTree, jt: JoinTree, node: str, order: tuple, tname: str, unit: bool):
        self.vt, self.jt, self.node = vt, jt, node
        self.order = order
        self.level = {a: i + 1 for i, a in enumerate(order)}
        self.m = len(order)
        self.tname = tname
        self.unit = unit
        self.view = vt.views[node][0]
        self.key_level = len(self.view.key)
        # child ref var -> (probe lookup, level at which its key is bound)
        self.probes = {}
        for e in jt.children(node):
            w, look = _child_probe(vt, e.child, lambda a: FieldStatic(Var(self.y(a)), a))
            self.probes[w] = (look, max(self.level[a] for a in e.attrs))

    # naming
    def y(self, a: str) -> str:
        return f"y_{a}"

    def t(self, lvl: int) -> str:
        return f"t_{self.order[lvl - 1]}"

    def r(self, lvl: int) -> str:
        return f"r_{self.order[lvl - 1]}"

    def dict_at(self, lvl: int) -> Expr:
        return Var(self.tname) if lvl == 1 else Var(self.t(lvl - 1))

    def factor_level(self, f: Expr) -> int:
        lvl = 0
        for n in walk(f):
            if isinstance(n, FieldStatic) and isinstance(n.expr, Var):
                if n.expr.name == TUPLE_VAR:
                    lvl = max(lvl, self.level[n.name])
                elif n.expr.name in self.probes:
                    lvl = max(lvl, self.probes[n.expr.name][1])
        return lvl

    def localize(self, f: Expr) -> Expr:
        def go(e):
            if isinstance(e, FieldStatic) and isinstance(e.expr, Var) and e.expr.name == TUPLE_VAR:
                return FieldStatic(Var(self.y(e.name)), e.name)
            return map_children(e, go)
        return go(f)

    def build(self) -> Expr:
        prods = []
        for _, e in self.view.payload:
            fs = []
            for f in payload_factors(e):
                lvl = max(self.factor_level(f), self.key_level)
                fs.append((lvl, self.localize(f)))
            prods.append(fs)
        names = self.view.entry_names()
        if self.key_level == 0:
            return self.rec_at(0, prods, names)
        return self.key_nest(1, prods, names)

    def key_nest(self, lvl: int, prods, names) -> Expr:
        yv = self.y(self.order[lvl - 1])
        if lvl == self.key_level:
            key = RecordLit(tuple((a, FieldStatic(Var(self.y(a)), a)) for a in self.view.key))
            body: Expr = DictLit(((key, self.rec_at(lvl, prods, names)),))
        else:
            body = Let(self.t(lvl), Lookup(self.dict_at(lvl), Var(yv)),
                       self.key_nest(lvl + 1, prods, names))
        return Sum(yv, Dom(self.dict_at(lvl)), body)

    def rec_at(self, lvl: int, prods, names) -> Expr:
        """Record of ``names`` for the products, with levels <= ``lvl`` bound."""
        here = [[e for l, e in p if l <= lvl] for p in prods]
        deep = [[(l, e) for l, e in p if l > lvl] for p in prods]
        bindings = []
        if 1 <= lvl < self.m:
            bindings.append((self.t(lvl), Lookup(self.dict_at(lvl), Var(self.y(self.order[lvl - 1])))))
        used = set().union(*(_refs_in(e) for h in here for e in h)) if prods else set()
        for w, (look, klvl) in self.probes.items():
            if w in used:
                bindings.append((w, look))
        if lvl == self.m:
            mult = [] if self.unit else [Lookup(self.dict_at(lvl), Var(self.y(self.order[lvl - 1])))]
            fields = [(nm, build_mul(h + mult) if h + mult else Const(1)) for nm, h in zip(names, here)]
            return lets(bindings, RecordLit(tuple(fields)))
        keys: dict = {}
        distinct = []
        idx = []
        for p in deep:
            c = tuple(sorted(canonical(e) for _, e in p))
            if c not in keys:
                keys[c] = len(distinct)
                distinct.append(p)
            idx.append(keys[c])
        nxt = lvl + 1
        yv = self.y(self.order[nxt - 1])
        if not any(here) and len(distinct) == len(prods):
            # nothing to multiply at this level: pass the names through
            inner = self.rec_at(nxt, distinct, [names[idx.index(i)] for i in range(len(distinct))])
            return lets(bindings, Sum(yv, Dom(self.dict_at(nxt)), inner))
        inner_names = [f"q{i}" for i in range(len(distinct))]
        inner = Sum(yv, Dom(self.dict_at(nxt)), self.rec_at(nxt, distinct, inner_names))
        rv = self.r(nxt)
        bindings.append((rv, inner))
        fields = [(nm, build_mul(h + [FieldStatic(Var(rv), inner_names[i])]))
                  for nm, h, i in zip(names, here, idx)]
        return lets(bindings, RecordLit(tuple(fields)))
