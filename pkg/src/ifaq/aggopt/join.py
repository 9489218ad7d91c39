"""Natural-join definitions written as nested summations.

A query ``Q`` over an acyclic join is bound in a program prelude as a
Sum-of-products expression: one summation per relation, equality guards
between their tuple variables, and a singleton dictionary whose key is the
output tuple and whose value is the product of multiplicities. ``JoinSpec``
is the structured view of that expression.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..frontend.schema import JoinTree, Schema, SchemaError
from ..ir.ast import (
    BinOp, Const, DictLit, Dom, Expr, FieldStatic, If, Lookup, RecordLit, Sum, Var, build_mul,
    flatten_mul,
)


@dataclass(frozen=True)
class JoinPredicate:
    left: tuple  # (relation, attribute)
    right: tuple


@dataclass
class JoinSpec:
    relations: list  # relation names, in nesting order
    predicates: list = field(default_factory=list)  # list[JoinPredicate]
    outputs: dict = field(default_factory=dict)  # output field -> (relation, attribute) | Const

    def output_fields(self) -> list[str]:
        return sorted(self.outputs)

    def var_of(self, rel: str) -> str:
        return "x" + rel

    def attr_class(self, rel: str, attr: str) -> set:
        """All (relation, attribute) pairs equated with ``(rel, attr)``."""
        out = {(rel, attr)}
        changed = True
        while changed:
            changed = False
            for p in self.predicates:
                for a, b in ((p.left, p.right), (p.right, p.left)):
                    if a in out and b not in out:
                        out.add(b)
                        changed = True
        return out

    def carriers(self, fld: str) -> dict:
        """Relation -> attribute for every relation that carries output ``fld``."""
        src = self.outputs[fld]
        if isinstance(src, Const):
            return {}
        return {r: a for r, a in sorted(self.attr_class(*src))}


def join_spec_from_schema(schema: Schema, jt: JoinTree | None = None) -> JoinSpec:
    jt = jt or schema.join_tree
    if jt is None:
        raise SchemaError("schema has no join tree")
    order = jt.nodes
    preds = [JoinPredicate((e.parent, a), (e.child, a)) for e in jt.edges for a in e.attrs]
    outputs: dict = {}
    for rel in order:
        for a in schema.relation(rel).attr_names:
            outputs.setdefault(a, (rel, a))
    return JoinSpec(list(order), preds, outputs)


def join_expr(spec: JoinSpec) -> Expr:
    """Sum-of-products expression for ``spec``; guards sit as early as possible."""
    key = RecordLit(tuple(
        (f, src if isinstance(src, Const) else FieldStatic(Var(spec.var_of(src[0])), src[1]))
        for f, src in sorted(spec.outputs.items())))
    mult = build_mul([Lookup(Var(r), Var(spec.var_of(r))) for r in spec.relations])
    body: Expr = DictLit(((key, mult),))
    bound_after = {r: set(spec.relations[:i + 1]) for i, r in enumerate(spec.relations)}
    for i in range(len(spec.relations) - 1, -1, -1):
        rel = spec.relations[i]
        here = [p for p in spec.predicates
                if {p.left[0], p.right[0]} <= bound_after[rel]
                and rel in (p.left[0], p.right[0])]
        if here:
            cond = None
            for p in here:
                c = BinOp("==", FieldStatic(Var(spec.var_of(p.left[0])), p.left[1]),
                          FieldStatic(Var(spec.var_of(p.right[0])), p.right[1]))
                cond = c if cond is None else BinOp("&&", cond, c)
            body = If(cond, body, DictLit(()))
        body = Sum(spec.var_of(rel), Dom(Var(rel)), body)
    return body


class NotAJoin(Exception):
    pass


def parse_join(e: Expr, relations: set | None = None) -> JoinSpec:
    """Recover a ``JoinSpec`` from a join expression in any nesting order."""
    var_rel: dict = {}
    order: list = []
    preds: list = []

    def conj(c: Expr):
        if isinstance(c, BinOp) and c.op == "&&":
            conj(c.left)
            conj(c.right)
            return
        if isinstance(c, BinOp) and c.op == "==":
            a, b = _field_ref(c.left, var_rel), _field_ref(c.right, var_rel)
            if a and b:
                preds.append(JoinPredicate(a, b))
                return
        raise NotAJoin(f"unsupported join guard {c!r}")

    while True:
        if isinstance(e, Sum) and isinstance(e.coll, Dom) and isinstance(e.coll.expr, Var):
            rel = e.coll.expr.name
            if relations is not None and rel not in relations:
                raise NotAJoin(f"{rel!r} is not a base relation")
            if rel in order:
                raise NotAJoin(f"relation {rel!r} occurs twice")
            var_rel[e.var] = rel
            order.append(rel)
            e = e.body
        elif isinstance(e, If) and isinstance(e.orelse, DictLit) and not e.orelse.items:
            conj(e.cond)
            e = e.then
        else:
            break
    if not order or not isinstance(e, DictLit) or len(e.items) != 1:
        raise NotAJoin("expected nested summations ending in a singleton dictionary")
    key, val = e.items[0]
    if not isinstance(key, RecordLit):
        raise NotAJoin("join output key must be a record")
    outputs = {}
    for f, x in key.fields:
        if isinstance(x, Const):
            outputs[f] = x
            continue
        ref = _field_ref(x, var_rel)
        if ref is None:
            raise NotAJoin(f"output field {f!r} is not a relation attribute")
        outputs[f] = ref
    mults = set()
    for fct in flatten_mul(val):
        if not (isinstance(fct, Lookup) and isinstance(fct.dict, Var) and isinstance(fct.key, Var)
                and fct.default is None and var_rel.get(fct.key.name) == fct.dict.name):
            raise NotAJoin("join value must be the product of tuple multiplicities")
        mults.add(fct.dict.name)
    if mults != set(order) or len(flatten_mul(val)) != len(order):
        raise NotAJoin("every relation's multiplicity must appear exactly once")
    return JoinSpec(order, preds, outputs)


def _field_ref(x: Expr, var_rel: dict):
    if isinstance(x, FieldStatic) and isinstance(x.expr, Var) and x.expr.name in var_rel:
        return (var_rel[x.expr.name], x.name)
    return None


def check_against_tree(spec: JoinSpec, jt: JoinTree) -> None:
    """The join's predicates must be exactly the tree's edge equalities."""
    if set(spec.relations) != set(jt.nodes):
        raise SchemaError(f"join over {sorted(spec.relations)} does not match join tree nodes {sorted(jt.nodes)}")
    for e in jt.edges:
        for a in e.attrs:
            if (e.child, a) not in spec.attr_class(e.parent, a):
                raise SchemaError(f"join does not equate {e.parent}.{a} with {e.child}.{a}")
    for p in spec.predicates:
        (r1, a1), (r2, a2) = p.left, p.right
        ok = any({e.parent, e.child} == {r1, r2} and a1 == a2 and a1 in e.attrs for e in jt.edges)
        if not ok:
            raise SchemaError(f"join predicate {r1}.{a1} = {r2}.{a2} is not a join tree edge")
