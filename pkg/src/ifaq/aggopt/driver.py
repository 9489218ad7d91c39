"""End-to-end aggregate optimization of a program."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..frontend.schema import JoinTree, Schema, SchemaError
from ..ir.ast import Expr, FieldStatic, Program, Var, map_children
from ..ir.ops import free_vars
from .extract import Extraction, extract_aggregates
from .join import check_against_tree
from .lower import dict_to_trie, lower_multi_aggregate
from .views import merge_views, push_down


class AggOptError(Exception):
    pass


@dataclass
class AggOptResult:
    program: Program
    extraction: Extraction
    view_trees: dict = field(default_factory=dict)  # query -> merged ViewTree
    fragments: dict = field(default_factory=dict)  # query -> Fragment
    diagnostics: list = field(default_factory=list)


def join_tree_for(query: str, relations: list, schema: Schema | None) -> JoinTree:
    if len(relations) == 1:
        return JoinTree(relations[0], [])
    if schema is None or schema.join_tree is None:
        raise AggOptError(f"join {query!r} needs a join tree in the schema")
    jt = schema.join_tree
    if set(relations) < set(jt.nodes):
        # a join over part of the tree uses the induced subtree
        sub = jt.restrict(relations)
        if sub is None:
            raise AggOptError(f"join over {sorted(relations)} is not a connected part of the join tree")
        return sub
    return jt


def _program_names(p: Program) -> set:
    names = {v for v, _ in p.prelude} | {ix.name for ix in p.indexes}
    if p.loop_var:
        names.add(p.loop_var)
    for e in p.exprs():
        names |= free_vars(e)
    return names


def drop_dead_bindings(p: Program) -> Program:
    pre = list(p.prelude)
    while True:
        live = set()
        for e in _tail(p):
            live |= free_vars(e)
        for v, e in pre:
            live |= free_vars(e)
        keep = [(v, e) for v, e in pre if v in live]
        if len(keep) == len(pre):
            break
        pre = keep
    used_ix = set()
    for e in [e for _, e in pre] + _tail(p):
        used_ix |= free_vars(e)
    return replace(p, prelude=tuple(pre), indexes=tuple(ix for ix in p.indexes if ix.name in used_ix))


def _tail(p: Program) -> list:
    out = [p.result]
    if p.has_loop:
        out += [p.init, p.cond, p.step]
    return out


def optimize_aggregates(p: Program, schema: Schema | None, *, trie: bool = True,
                        unit_relations=()) -> AggOptResult:
    names = _program_names(p)
    result_var = "AGG"
    while result_var in names:
        result_var += "_"
    ext = extract_aggregates(p, schema, result_var)
    res = AggOptResult(p, ext, diagnostics=list(ext.diagnostics))
    if not ext.specs:
        return res
    outputs: dict = {}
    bindings: list = []
    indexes: list = []
    for q, join in ext.joins.items():
        jt = join_tree_for(q, join.relations, schema)
        try:
            if len(join.relations) > 1:
                check_against_tree(join, jt)
        except SchemaError as exc:
            raise AggOptError(str(exc)) from None
        vt = merge_views(push_down(ext.batch(q), jt, join))
        frag = lower_multi_aggregate(vt, unit_relations)
        if trie:
            attrs = {n: schema.relation(n).attr_names if schema and n in schema.relations
                     else _attrs_from_join(join, n) for n in jt.nodes}
            frag = dict_to_trie(frag, jt, attrs, unit_relations)
        for n, _ in frag.bindings:
            if n in names:
                raise AggOptError(f"generated name {n!r} clashes with a program variable")
        for ix in frag.indexes:
            if ix.name in names:
                raise AggOptError(f"generated index name {ix.name!r} clashes with a program variable")
        res.view_trees[q] = vt
        res.fragments[q] = frag
        bindings += frag.bindings
        indexes += frag.indexes
        outputs.update(frag.outputs)

    def plug(e: Expr) -> Expr:
        if isinstance(e, FieldStatic) and isinstance(e.expr, Var) and e.expr.name == result_var:
            return outputs[e.name]
        return map_children(e, plug)

    r = ext.residual
    kw = {"prelude": tuple(bindings) + tuple((v, plug(e)) for v, e in r.prelude),
          "indexes": tuple(r.indexes) + tuple(indexes), "result": plug(r.result)}
    if r.has_loop:
        kw.update(init=plug(r.init), cond=plug(r.cond), step=plug(r.step))
    res.program = drop_dead_bindings(replace(r, **kw))
    return res


def _attrs_from_join(join, node: str) -> tuple:
    out = set()
    for f in join.outputs:
        c = join.carriers(f)
        if node in c:
            out.add(c[node])
    return tuple(sorted(out))
