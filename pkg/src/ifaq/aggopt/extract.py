"""Finding aggregate batches over a join query."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..frontend.schema import Schema
from ..ir.ast import (
    Const, Dom, Expr, FieldStatic, Lookup, Neg, Program, RecordLit, Sum, Var, build_mul,
    flatten_mul, map_children, walk,
)
from ..ir.ops import canonical, free_vars, substitute
from .join import JoinSpec, NotAJoin, parse_join

TUPLE_VAR = "x"

# node types allowed inside a measure factor
_FACTOR_NODES = {"Const", "Var", "Add", "Mul", "Neg", "UnOp", "BinOp", "If", "FieldStatic"}


@dataclass
class AggregateSpec:
    id: str
    query: str  # name of the join the aggregate ranges over
    relations: list
    predicates: list
    factors: tuple  # measure factors over the tuple variable ``x``
    output_slot: str
    uses: list = field(default_factory=list)

    @property
    def measure(self) -> Expr:
        return build_mul(list(self.factors)) if self.factors else Const(1)

    def key(self) -> tuple:
        return (self.query, tuple(sorted(canonical(f) for f in self.factors)))


@dataclass
class Extraction:
    specs: list
    residual: Program
    joins: dict  # query name -> JoinSpec
    result_var: str  # record variable holding the batch results
    diagnostics: list = field(default_factory=list)

    def batch(self, query: str) -> list:
        return [s for s in self.specs if s.query == query]


def find_joins(p: Program, schema: Schema | None) -> dict:
    """Prelude variables bound to join expressions, plus plain base relations."""
    base = set(schema.relations) if schema is not None else set()
    joins = {}
    for v, e in p.prelude:
        try:
            joins[v] = parse_join(e, base or None)
        except NotAJoin:
            continue
    for name in base:
        if name not in joins and not any(v == name for v, _ in p.prelude):
            attrs = schema.relation(name).attr_names
            joins[name] = JoinSpec([name], [], {a: (name, a) for a in attrs})
    return joins


def _factor_problem(f: Expr, var: str, spec: JoinSpec) -> str | None:
    for n in walk(f):
        if type(n).__name__ not in _FACTOR_NODES:
            return f"factor contains a {type(n).__name__}"
        if isinstance(n, FieldStatic) and isinstance(n.expr, Var) and n.expr.name == var:
            if n.name not in spec.outputs:
                return f"field {n.name!r} is not an output of the join"
    if free_vars(f) != {var}:
        return "factor refers to variables other than the tuple"
    # every tuple access must be a static field access
    bare = [n for n in walk(f) if isinstance(n, Var) and n.name == var]
    accesses = [n for n in walk(f) if isinstance(n, FieldStatic) and isinstance(n.expr, Var)
                and n.expr.name == var]
    if len(bare) != len(accesses):
        return "tuple variable used other than through static field access"
    fields = {n.name for n in accesses}
    nodes = None
    for fl in fields:
        c = spec.carriers(fl)
        if not c and not isinstance(spec.outputs[fl], Const):
            return f"field {fl!r} has no carrier relation"
        if c:
            nodes = set(c) if nodes is None else nodes & set(c)
    if nodes is not None and not nodes:
        return f"factor spans several relations ({sorted(fields)})"
    return None


def _match(e: Sum, joins: dict, diagnostics: list):
    """(query, coefficient factors, measure factors) or None."""
    if not (isinstance(e.coll, Dom) and isinstance(e.coll.expr, Var)):
        return None
    q = e.coll.expr.name
    spec = joins.get(q)
    if spec is None:
        return None
    body, sign = e.body, 1
    while isinstance(body, Neg):
        body, sign = body.expr, -sign
    weight, coef, meas = 0, [], []
    for f in flatten_mul(body):
        if (isinstance(f, Lookup) and isinstance(f.dict, Var) and f.dict.name == q
                and isinstance(f.key, Var) and f.key.name == e.var and f.default is None):
            weight += 1
        elif e.var not in free_vars(f):
            coef.append(f)
        else:
            while isinstance(f, Neg):
                f, sign = f.expr, -sign
            meas.append(f)
    if weight != 1:
        if len(spec.relations) > 1:
            diagnostics.append(
                f"summation over dom({q}) is not weighted by {q}({e.var}) exactly once; left as is")
        return None
    for f in meas:
        problem = _factor_problem(f, e.var, spec)
        if problem:
            diagnostics.append(f"summation over dom({q}) not extracted: {problem}")
            return None
    for f in coef:
        if free_vars(f) & {e.var}:
            return None
    if sign < 0:
        coef.insert(0, Const(-1))
    ren = {e.var: Var(TUPLE_VAR)}
    return q, coef, tuple(substitute(f, ren) for f in meas)


def extract_aggregates(p: Program, schema: Schema | None = None,
                       result_var: str = "AGG") -> Extraction:
    joins = find_joins(p, schema)
    specs: list = []
    by_key: dict = {}
    diags: list = []

    def visit(e: Expr, path: list) -> Expr:
        if isinstance(e, Sum):
            m = _match(e, joins, diags)
            if m is not None:
                q, coef, factors = m
                slot = ".".join(path)
                probe = AggregateSpec("", q, list(joins[q].relations), list(joins[q].predicates),
                                      factors, slot)
                s = by_key.get(probe.key())
                if s is None:
                    s = replace(probe, id=f"a{len(specs)}")
                    by_key[s.key()] = s
                    specs.append(s)
                s.uses.append(slot)
                ref = FieldStatic(Var(result_var), s.id)
                return build_mul(coef + [ref]) if coef else ref
        if isinstance(e, RecordLit):
            return RecordLit(tuple((n, visit(x, path + [n])) for n, x in e.fields))
        return map_children(e, lambda c: visit(c, path))

    pre = tuple((v, e if v in joins else visit(e, [v])) for v, e in p.prelude)
    kw = {}
    if p.has_loop:
        for slot in ("init", "cond", "step"):
            kw[slot] = visit(getattr(p, slot), [slot])
    kw["result"] = visit(p.result, ["result"])
    residual = replace(p, prelude=pre, **kw)
    used = {s.query for s in specs}
    return Extraction(specs, residual, {q: joins[q] for q in used}, result_var, diags)
