"""Physical layout selection and the record-simplifying program transforms."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..aggopt.lower import trie_order
from ..frontend.schema import Schema
from ..interp.database import Database
from ..ir.ast import (
    DictBuild, DictLit, Dom, Expr, FieldStatic, Let, Lookup, Mul, Program, RecordLit, Sum, Var,
    children, map_children, walk,
)
from ..ir.ops import free_vars

HASH_DICT = "HashDict"
SORTED_DICT = "SortedDict"
SORTED_TRIE = "SortedTrie"
ARRAY_RELATION = "ArrayRelation"


class PlanError(Exception):
    pass


@dataclass
class LayoutChoice:
    kind: str
    order: tuple = ()
    single_field_record_removed: bool = False
    record_flattened: bool = False

    def describe(self) -> str:
        s = self.kind + (f"({', '.join(self.order)})" if self.order else "")
        flags = []
        if self.single_field_record_removed:
            flags.append("single-field key removed")
        if self.record_flattened:
            flags.append("single-field payload removed")
        return s + (" [" + "; ".join(flags) + "]" if flags else "")


@dataclass
class LayoutOptions:
    """Switches for the ablation study; all on by default."""

    sorted_tries: bool = True
    arrays: bool = True
    sorted_views: bool = True
    remove_single_fields: bool = True


@dataclass(frozen=True)
class MergeSite:
    view: str
    driver_var: str
    attr: str


@dataclass
class PhysicalPlan:
    program: Program
    layouts: dict = field(default_factory=dict)  # collection name -> LayoutChoice
    options: LayoutOptions = field(default_factory=LayoutOptions)
    merge_sites: dict = field(default_factory=dict)  # id(Lookup) -> MergeSite
    drivers: dict = field(default_factory=dict)  # id(Sum) -> [id(Lookup)]
    unit_lookups: set = field(default_factory=set)  # id(Lookup) of R(x) under an array scan
    accumulation: str = "mutable"

    def layout(self, name: str) -> LayoutChoice | None:
        return self.layouts.get(name)


# --------------------------------------------------------------------------
# single-field record removal

def _terminal_record(e: Expr):
    """The record literal a value expression ends in, looking through lets,
    summations, dictionary values and scalar products."""
    t = type(e)
    if t is RecordLit:
        return e
    if t is Let or t is Sum:
        return _terminal_record(e.body)
    if t is DictLit and len(e.items) == 1:
        return _terminal_record(e.items[0][1])
    if t is Mul:
        a, b = _terminal_record(e.left), _terminal_record(e.right)
        return a if b is None else (b if a is None else None)
    return None


def _strip_terminal(e: Expr) -> Expr:
    t = type(e)
    if t is RecordLit:
        return e.fields[0][1]
    if t is Let:
        return replace(e, body=_strip_terminal(e.body))
    if t is Sum:
        return replace(e, body=_strip_terminal(e.body))
    if t is DictLit:
        k, v = e.items[0]
        return replace(e, items=((k, _strip_terminal(v)),))
    if t is Mul:
        if _terminal_record(e.left) is not None:
            return replace(e, left=_strip_terminal(e.left))
        return replace(e, right=_strip_terminal(e.right))
    raise AssertionError(e)


def _field_only_uses(e: Expr, name: str, fld: str) -> bool:
    """Every free occurrence of ``name`` in ``e`` is ``name.fld``."""
    if isinstance(e, FieldStatic) and isinstance(e.expr, Var) and e.expr.name == name:
        return e.name == fld
    if isinstance(e, Var):
        return e.name != name
    if isinstance(e, (Let,)) and e.var == name:
        return _field_only_uses(e.value, name, fld)
    if isinstance(e, (Sum, DictBuild)) and e.var == name:
        return _field_only_uses(e.coll, name, fld)
    return all(_field_only_uses(c, name, fld) for c in children(e))


def _unwrap_uses(e: Expr, name: str) -> Expr:
    if isinstance(e, FieldStatic) and isinstance(e.expr, Var) and e.expr.name == name:
        return e.expr
    if isinstance(e, Let) and e.var == name:
        return replace(e, value=_unwrap_uses(e.value, name))
    if isinstance(e, (Sum, DictBuild)) and e.var == name:
        return replace(e, coll=_unwrap_uses(e.coll, name))
    return map_children(e, lambda c: _unwrap_uses(c, name))


def remove_single_field_lets(e: Expr) -> Expr:
    """``let r = ... {q = v} in ... r.q ...`` keeps just the field value."""
    e = map_children(e, remove_single_field_lets)
    if isinstance(e, Let):
        rec = _terminal_record(e.value)
        if rec is not None and len(rec.fields) == 1:
            fld = rec.fields[0][0]
            if _field_only_uses(e.body, e.var, fld):
                return Let(e.var, _strip_terminal(e.value), _unwrap_uses(e.body, e.var))
    return e


def _view_lookups(p: Program, name: str) -> tuple[bool, list]:
    """(only used as a lookup target, lookup nodes)."""
    sites = []
    ok = True

    def go(e: Expr, bound: bool):
        nonlocal ok
        if isinstance(e, Lookup) and isinstance(e.dict, Var) and e.dict.name == name and not bound:
            sites.append(e)
            go(e.key, bound)
            if e.default is not None:
                go(e.default, bound)
            return
        if isinstance(e, Var) and e.name == name and not bound:
            ok = False
            return
        rebinds = isinstance(e, (Let, Sum, DictBuild)) and e.var == name
        for c in children(e):
            inner = bound or (rebinds and c is not getattr(e, "value", None)
                              and c is not getattr(e, "coll", None))
            go(c, inner)
    for v, e in p.prelude:
        go(e, False)
    for e in ([p.init, p.cond, p.step] if p.has_loop else []) + [p.result]:
        go(e, False)
    return ok, sites


def _dict_keys(e: Expr) -> list:
    return [k for n in walk(e) if isinstance(n, DictLit) for k, _ in n.items]


def flatten_view_keys(p: Program) -> tuple[Program, set]:
    """Views keyed by one-field records are re-keyed by the bare value."""
    changed = set()
    for i, (v, e) in enumerate(p.prelude):
        keys = _dict_keys(e)
        if not keys or not all(isinstance(k, RecordLit) and len(k.fields) == 1 for k in keys):
            continue
        if len({k.fields[0][0] for k in keys}) != 1:
            continue
        ok, sites = _view_lookups(p, v)
        if not ok or not sites or not all(isinstance(s.key, RecordLit) and len(s.key.fields) == 1
                                          for s in sites):
            continue
        site_ids = {id(s) for s in sites}

        def fix_sites(x: Expr) -> Expr:
            if id(x) in site_ids:
                return replace(x, key=x.key.fields[0][1],
                               default=fix_sites(x.default) if x.default is not None else None)
            return map_children(x, fix_sites)

        def fix_keys(x: Expr) -> Expr:
            x = map_children(x, fix_keys)
            if isinstance(x, DictLit):
                return replace(x, items=tuple((k.fields[0][1], val) for k, val in x.items))
            return x
        p = p.map_exprs(fix_sites)
        pre = list(p.prelude)
        pre[i] = (v, fix_keys(pre[i][1]))
        p = replace(p, prelude=tuple(pre))
        changed.add(v)
    return p, changed


def flatten_view_payloads(p: Program) -> tuple[Program, set]:
    """Views whose payload is a one-field record store the field value.

    Every probe must be bound by a let whose variable is only read through
    that field.
    """
    changed = set()
    for i, (v, e) in enumerate(p.prelude):
        rec = _terminal_record(e)
        if rec is None or len(rec.fields) != 1 or not _dict_keys(e):
            continue
        fld = rec.fields[0][0]
        ok, sites = _view_lookups(p, v)
        if not ok or not sites:
            continue
        site_ids = {id(s) for s in sites}
        lets_ok = True
        binders = []

        def scan(x: Expr):
            nonlocal lets_ok
            if isinstance(x, Let) and id(x.value) in site_ids:
                if not _field_only_uses(x.body, x.var, fld):
                    lets_ok = False
                binders.append(x)
            for c in children(x):
                scan(c)
        for x in p.exprs():
            scan(x)
        if not lets_ok or len(binders) != len(sites):
            continue
        bids = {id(b) for b in binders}

        def fix(x: Expr) -> Expr:
            if id(x) in bids:
                look = x.value
                d = look.default
                if isinstance(d, RecordLit) and len(d.fields) == 1:
                    d = d.fields[0][1]
                return Let(x.var, replace(look, default=d), fix(_unwrap_uses(x.body, x.var)))
            return map_children(x, fix)
        p = p.map_exprs(fix)
        pre = list(p.prelude)
        pre[i] = (v, _strip_terminal(pre[i][1]))
        p = replace(p, prelude=tuple(pre))
        changed.add(v)
    return p, changed


def flatten_records(p: Program) -> Program:
    p = p.map_exprs(remove_single_field_lets)
    # single-field prelude records read only through their field
    for i, (v, e) in enumerate(p.prelude):
        rec = _terminal_record(e)
        if rec is None or len(rec.fields) != 1 or _dict_keys(e):
            continue
        fld = rec.fields[0][0]
        later = [x for _, x in p.prelude[i + 1:]] + (
            [p.init, p.cond, p.step] if p.has_loop else []) + [p.result]
        if all(_field_only_uses(x, v, fld) for x in later):
            pre = list(p.prelude)
            pre[i] = (v, _strip_terminal(e))
            for j in range(i + 1, len(pre)):
                pre[j] = (pre[j][0], _unwrap_uses(pre[j][1], v))
            p = replace(p, prelude=tuple(pre))
            if p.has_loop:
                p = replace(p, init=_unwrap_uses(p.init, v), cond=_unwrap_uses(p.cond, v),
                            step=_unwrap_uses(p.step, v))
            p = replace(p, result=_unwrap_uses(p.result, v))
    return p


# --------------------------------------------------------------------------
# layout selection

def _is_view_binding(e: Expr) -> bool:
    return bool(_dict_keys(e))


def _monotone_key(key: Expr, var: str, attr: str) -> bool:
    if isinstance(key, RecordLit) and len(key.fields) == 1:
        key = key.fields[0][1]
    return (isinstance(key, FieldStatic) and isinstance(key.expr, Var)
            and key.expr.name == var and key.name == attr)


def choose_layouts(p: Program, schema: Schema | None, db: Database,
                   options: LayoutOptions | None = None) -> PhysicalPlan:
    options = options or LayoutOptions()
    layouts: dict = {}
    flat_keys: set = set()
    flat_payloads: set = set()
    if options.remove_single_fields:
        p, flat_keys = flatten_view_keys(p)
        p, flat_payloads = flatten_view_payloads(p)
        p = flatten_records(p)
    prelude_names = {v for v, _ in p.prelude}
    used = set()
    for e in p.exprs():
        used |= free_vars(e)
    index_of = {ix.name: ix for ix in p.indexes}
    for ix in p.indexes:
        if ix.relation not in db:
            raise PlanError(f"index {ix.name} over unknown relation {ix.relation!r}")
        kind = SORTED_TRIE if options.sorted_tries else HASH_DICT
        layouts[ix.name] = LayoutChoice(kind, tuple(ix.attrs))
    trie_orders = {ix.relation: tuple(ix.attrs) for ix in p.indexes}
    for name in db.names():
        if name not in used or name in prelude_names:
            continue
        if options.arrays and db.unit_multiplicities(name):
            order = trie_orders.get(name)
            if order is None:
                attrs = schema.relation(name).attr_names if schema and name in schema.relations \
                    else tuple(sorted({a for t in db[name].data for a in t.names}))
                jt = schema.join_tree if schema is not None else None
                order = trie_order(jt, name, attrs) if jt is not None and name in jt.nodes else attrs
            layouts[name] = LayoutChoice(ARRAY_RELATION, tuple(order))
        else:
            layouts[name] = LayoutChoice(HASH_DICT)
    views = [v for v, e in p.prelude if _is_view_binding(e)]
    for v in views:
        layouts[v] = LayoutChoice(HASH_DICT, single_field_record_removed=v in flat_keys,
                                  record_flattened=v in flat_payloads)
    plan = PhysicalPlan(p, layouts, options)
    _find_sites(plan, set(views), index_of)
    return plan


def _find_sites(plan: PhysicalPlan, views: set, index_of: dict) -> None:
    layouts = plan.layouts

    def driver_attr(s: Sum):
        c = s.coll
        if not (isinstance(c, Dom) and isinstance(c.expr, Var)):
            return None
        lay = layouts.get(c.expr.name)
        if lay is None:
            return None
        if lay.kind in (SORTED_TRIE, ARRAY_RELATION) and lay.order:
            return lay.order[0]
        return None

    def lookups_in(e: Expr, var: str, found: list, bound: frozenset):
        if isinstance(e, Lookup) and isinstance(e.dict, Var) and e.dict.name in views \
                and e.dict.name not in bound and var not in bound:
            found.append(e)
        inner = bound | ({e.var} if isinstance(e, (Let, Sum, DictBuild)) else set())
        for c in children(e):
            binder_part = isinstance(e, (Let, Sum, DictBuild)) and (
                c is getattr(e, "value", None) or c is getattr(e, "coll", None))
            lookups_in(c, var, found, bound if binder_part else frozenset(inner))

    def visit(e: Expr):
        if isinstance(e, Sum):
            c = e.coll
            if isinstance(c, Dom) and isinstance(c.expr, Var):
                lay = layouts.get(c.expr.name)
                if lay is not None and lay.kind == ARRAY_RELATION:
                    rel = c.expr.name
                    for n in walk(e.body):
                        if (isinstance(n, Lookup) and isinstance(n.dict, Var) and n.dict.name == rel
                                and isinstance(n.key, Var) and n.key.name == e.var):
                            plan.unit_lookups.add(id(n))
            attr = driver_attr(e)
            if attr is not None and plan.options.sorted_views:
                found: list = []
                lookups_in(e.body, e.var, found, frozenset())
                for lk in found:
                    if _monotone_key(lk.key, e.var, attr):
                        plan.merge_sites[id(lk)] = MergeSite(lk.dict.name, e.var, attr)
                        plan.drivers.setdefault(id(e), []).append(id(lk))
                        lay = layouts[lk.dict.name]
                        lay.kind = SORTED_DICT
        for ch in children(e):
            visit(ch)
    for x in plan.program.exprs():
        visit(x)
