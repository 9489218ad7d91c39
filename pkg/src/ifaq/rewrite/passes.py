"""Program-level passes and the fixed high-level pipeline."""

from __future__ import annotations

from dataclasses import replace

from ..frontend.printer import pretty
from ..frontend.schema import Schema
from ..ir.ast import (
    Const, DictBuild, Expr, FieldDyn, FieldStatic, Let, Lookup, Program, RecordLit,
    SetLit, Sum, Var, lets, map_children, unlet, walk,
)
from ..ir.ops import alpha_rename, canonical, free_vars, fresh_name, substitute
from . import rules as R
from .engine import (
    PassContext, RewriteError, RewriteTrace, rewrite_expr, rewrite_program,
)


class SpecializationError(RewriteError):
    def __init__(self, message: str, loc=None):
        self.loc = loc
        super().__init__(f"{loc}: {message}" if loc else message)


def _ctx(schema, trace, name, p: Program | None = None) -> PassContext:
    ctx = PassContext(schema=schema, trace=trace, pass_name=name)
    if p is not None:
        ctx.bindings = dict(p.prelude)
        ctx.loop_var = p.loop_var
    return ctx


def _all_names(p: Program) -> set:
    out = {v for v, _ in p.prelude} | {ix.name for ix in p.indexes}
    if p.loop_var:
        out.add(p.loop_var)
    for e in p.exprs():
        for n in walk(e):
            if type(n) is Var:
                out.add(n.name)
            elif type(n) in (Sum, DictBuild, Let):
                out.add(n.var)
    return out


def _rename(p: Program, ctx: PassContext) -> Program:
    q = alpha_rename(p)
    if q != p:
        ctx.pass_name, saved = "alphaRename", ctx.pass_name
        ctx.record_program("alpha-rename", p, q)
        ctx.pass_name = saved
    return q


# --------------------------------------------------------------------------
# expression-level entry points

def normalize(e: Expr, ctx: PassContext | None = None) -> Expr:
    return rewrite_expr(e, R.NORMALIZE, ctx)


def schedule_loops(e: Expr, schema: Schema | None = None, bindings: dict | None = None,
                   ctx: PassContext | None = None) -> Expr:
    ctx = ctx or PassContext(schema=schema, bindings=dict(bindings or {}))
    return rewrite_expr(e, R.SCHEDULE, ctx)


def factorize(e: Expr, ctx: PassContext | None = None) -> Expr:
    return rewrite_expr(e, R.FACTORIZE, ctx)


def partial_eval(e: Expr, ctx: PassContext | None = None) -> Expr:
    return rewrite_expr(e, R.PARTIAL_EVAL, ctx)


def fuse_loops(e: Expr, ctx: PassContext | None = None) -> Expr:
    return rewrite_expr(e, R.FUSE, ctx)


def generic_opts(e: Expr, ctx: PassContext | None = None) -> Expr:
    return rewrite_expr(e, R.GENERIC, ctx)


def hoist_lets(e: Expr, ctx: PassContext | None = None) -> Expr:
    return rewrite_expr(e, R.LICM, ctx)


# --------------------------------------------------------------------------
# static memoization

def _is_static_coll(c: Expr, prelude: dict, schema: Schema | None) -> bool:
    if type(c) is SetLit:
        return all(type(x) is Const for x in c.items)
    if type(c) is Var:
        b = prelude.get(c.name)
        if b is not None:
            return type(b) is SetLit and all(type(x) is Const for x in b.items)
        return schema is not None and c.name in schema.feature_sets
    return False


class _Memoizer:
    def __init__(self, p: Program, schema, used: set):
        self.prelude = dict(p.prelude)
        self.schema = schema
        self.loop_var = p.loop_var
        self.used = used
        self.memos: list[tuple[str, Expr]] = []

    def visit(self, e: Expr, binders: list, locals_: set) -> Expr:
        t = type(e)
        if t is Sum and self._candidate(e, binders, locals_):
            return self._memoize(e, binders)
        if t in (Sum, DictBuild):
            coll = self.visit(e.coll, binders, locals_)
            static = _is_static_coll(e.coll, self.prelude, self.schema)
            body = self.visit(e.body, binders + [(e.var, e.coll, static)], locals_)
            if coll is e.coll and body is e.body:
                return e
            return t(e.var, coll, body)
        if t is Let:
            val = self.visit(e.value, binders, locals_)
            body = self.visit(e.body, binders, locals_ | {e.var})
            if val is e.value and body is e.body:
                return e
            return Let(e.var, val, body)
        return map_children(e, lambda c: self.visit(c, binders, locals_))

    def _candidate(self, s: Sum, binders, locals_) -> bool:
        if _is_static_coll(s.coll, self.prelude, self.schema):
            return False
        fv = free_vars(s)
        if self.loop_var in fv or fv & locals_:
            return False
        for v, _, static in binders:
            if v in fv and not static:
                return False
        return True

    def _memoize(self, s: Sum, binders) -> Expr:
        fv = free_vars(s)
        dims = [(v, c) for v, c, _ in binders if v in fv]
        name = fresh_name("M", self.used) if "M" in self.used else "M"
        self.used.add(name)
        value: Expr = s
        for v, c in reversed(dims):
            value = DictBuild(v, c, value)
        self.memos.append((name, value))
        out: Expr = Var(name)
        for v, _ in dims:
            out = Lookup(out, Var(v))
        return out


def memoize_program(p: Program, ctx: PassContext) -> Program:
    if not p.has_loop:
        return p
    binds, body = unlet(p.step)
    m = _Memoizer(p, ctx.schema, _all_names(p))
    new_body = m.visit(body, [], {v for v, _ in binds})
    if not m.memos:
        return p
    q = replace(p, step=lets(m.memos + binds, new_body))
    ctx.record_program("static-memoize", p, q)
    return q


def static_memoize(e: Expr, loop_var: str | None = None, prelude: dict | None = None,
                   schema: Schema | None = None) -> Expr:
    """Memoize inside a loop body expression; returns it with leading lets."""
    p = Program(prelude=tuple((prelude or {}).items()), loop_var=loop_var or "__state",
                init=Const(0), cond=Const(True), step=e, result=Var(loop_var or "__state"))
    return memoize_program(p, PassContext(schema=schema)).step


# --------------------------------------------------------------------------
# loop-invariant code motion

def licm_program(p: Program, ctx: PassContext) -> Program:
    p = rewrite_program(p, R.LICM, ctx)
    if not p.has_loop:
        return p
    binds, body = unlet(p.step)
    hoisted, kept = [], []
    blocked = {p.loop_var}
    for v, e in binds:
        if free_vars(e) & blocked:
            kept.append((v, e))
            blocked.add(v)
        else:
            hoisted.append((v, e))
    if not hoisted:
        return p
    q = replace(p, prelude=p.prelude + tuple(hoisted), step=lets(kept, body))
    ctx.record_program("let-out-of-while", p, q)
    return q


def hoist_loop_invariants(p: Program, schema: Schema | None = None) -> Program:
    return licm_program(p, _ctx(schema, None, "licm", p))


# --------------------------------------------------------------------------
# partial evaluation

def partial_eval_program(p: Program, ctx: PassContext) -> Program:
    pre = []
    mapping: dict = {}
    for v, e in p.prelude:
        e = substitute(e, mapping) if mapping else e
        if R.is_static_literal(e):
            mapping[v] = e
        else:
            pre.append((v, e))
    if mapping:
        q = Program(tuple(pre), p.loop_var,
                    substitute(p.init, mapping) if p.has_loop else None,
                    substitute(p.cond, mapping) if p.has_loop else None,
                    substitute(p.step, mapping) if p.has_loop else None,
                    substitute(p.result, mapping), p.indexes)
        ctx.record_program("inline-literal-binding", p, q)
        p = q
    return rewrite_program(p, R.PARTIAL_EVAL, ctx)


# --------------------------------------------------------------------------
# schema specialization

def _record_shape(e: Expr):
    """Field tree of a record-valued expression (None when not a record)."""
    _, e = unlet(e)
    if type(e) is RecordLit:
        return {n: _record_shape(x) for n, x in e.fields}
    return None


class _Specializer:
    def __init__(self, shapes: dict):
        self.shapes = shapes

    def shape(self, e: Expr, scope: dict):
        t = type(e)
        if t is Var:
            return scope.get(e.name, self.shapes.get(e.name))
        if t is RecordLit:
            return {n: self.shape(x, scope) or _record_shape(x) for n, x in e.fields}
        if t is FieldStatic:
            s = self.shape(e.expr, scope)
            return s.get(e.name) if isinstance(s, dict) else None
        if t is Let:
            return self.shape(e.body, scope)
        return None

    def visit(self, e: Expr, scope: dict, ctx: PassContext, path) -> Expr:
        t = type(e)
        counter = iter(range(10 ** 9))
        if t is Let:
            val = self.visit(e.value, scope, ctx, path + (0,))
            sh = self.shape(val, scope)
            inner = dict(scope)
            inner[e.var] = sh
            body = self.visit(e.body, inner, ctx, path + (1,))
            e2 = e if (val is e.value and body is e.body) else Let(e.var, val, body)
        elif t in (Sum, DictBuild):
            coll = self.visit(e.coll, scope, ctx, path + (0,))
            inner = dict(scope)
            inner[e.var] = None
            body = self.visit(e.body, inner, ctx, path + (1,))
            e2 = e if (coll is e.coll and body is e.body) else t(e.var, coll, body)
        else:
            e2 = map_children(e, lambda c: self.visit(c, scope, ctx, path + (next(counter),)))
        while True:
            out = None
            rule = None
            for r in R.SPECIALIZE:
                out = r.fn(e2, ctx)
                if out is not None:
                    rule = r.name
                    break
            if out is None and type(e2) is Lookup and e2.default is None \
                    and isinstance(self.shape(e2.dict, scope), dict):
                out = FieldDyn(e2.dict, e2.key)
                rule = "lookup-into-record"
            if out is None or out == e2:
                return e2
            ctx.record(rule, path, e2, out)
            e2 = self.visit(out, scope, ctx, path)


def specialize_program(p: Program, ctx: PassContext) -> Program:
    shapes: dict = {}
    for _ in range(8):
        sp = _Specializer(shapes)
        pre = []
        for i, (v, e) in enumerate(p.prelude):
            ne = sp.visit(e, {}, ctx, (f"prelude:{i}",))
            pre.append((v, ne))
            sh = _record_shape(ne)
            if sh is not None:
                shapes[v] = sh
        kw = {}
        if p.has_loop:
            for slot in ("init", "cond", "step"):
                kw[slot] = sp.visit(getattr(p, slot), {}, ctx, (slot,))
            si, ss = _record_shape(kw["init"]), _record_shape(kw["step"])
            if si is not None and ss is not None:
                shapes[p.loop_var] = si
        kw["result"] = sp.visit(p.result, {}, ctx, ("result",))
        q = replace(p, prelude=tuple(pre), **kw)
        if q == p:
            break
        p = q
    for e in p.exprs():
        for n in walk(e):
            if type(n) is FieldDyn:
                raise SpecializationError(
                    f"dynamic field access `{pretty(n)}` cannot be made static",
                    getattr(n, "loc", None))
    return p


def specialize_schema(e: Expr, schema: Schema | None = None, shapes: dict | None = None) -> Expr:
    ctx = PassContext(schema=schema)
    sp = _Specializer(dict(shapes or {}))
    return sp.visit(e, {}, ctx, ("result",))


# --------------------------------------------------------------------------
# generic optimizations (program level)

def generic_program(p: Program, ctx: PassContext) -> Program:
    p = rewrite_program(p, R.GENERIC, ctx)
    changed = True
    while changed:
        changed = False
        # common subexpressions among prelude bindings
        pre = list(p.prelude)
        for i in range(len(pre)):
            for j in range(i + 1, len(pre)):
                if canonical(pre[i][1]) == canonical(pre[j][1]):
                    q = _subst_program(p, j, Var(pre[i][0]))
                    ctx.record_program("cse-binding", p, q)
                    p = q
                    changed = True
                    break
            if changed:
                break
        if changed:
            continue
        # dead prelude bindings
        for i, (v, _) in enumerate(p.prelude):
            later = [e for _, e in p.prelude[i + 1:]]
            later += [p.init, p.cond, p.step] if p.has_loop else []
            later.append(p.result)
            if not any(v in free_vars(e) for e in later):
                pre = list(p.prelude)
                del pre[i]
                q = replace(p, prelude=tuple(pre))
                ctx.record_program("dead-binding", p, q)
                p = q
                changed = True
                break
    return p


def _subst_program(p: Program, j: int, repl: Expr) -> Program:
    """Drop prelude binding ``j`` and replace its variable by ``repl`` afterwards."""
    v = p.prelude[j][0]
    m = {v: repl}
    pre = list(p.prelude[:j]) + [(w, substitute(e, m)) for w, e in p.prelude[j + 1:]]
    if p.has_loop:
        return replace(p, prelude=tuple(pre), init=substitute(p.init, m),
                       cond=substitute(p.cond, m), step=substitute(p.step, m),
                       result=substitute(p.result, m))
    return replace(p, prelude=tuple(pre), result=substitute(p.result, m))


# --------------------------------------------------------------------------
# pipeline

HIGH_LEVEL_STAGES = ("normalize", "schedule", "factorize", "memoize", "licm",
                     "partialEval", "specialize", "generic")


def run_pass(name: str, p: Program, schema: Schema | None, trace: RewriteTrace | None) -> Program:
    ctx = _ctx(schema, trace, name, p)
    if name == "normalize":
        q = rewrite_program(p, R.NORMALIZE, ctx)
    elif name == "schedule":
        q = rewrite_program(p, R.SCHEDULE, ctx)
    elif name == "factorize":
        q = rewrite_program(p, R.FACTORIZE, ctx)
    elif name == "memoize":
        q = memoize_program(p, ctx)
    elif name == "licm":
        q = licm_program(p, ctx)
    elif name == "partialEval":
        q = partial_eval_program(p, ctx)
    elif name == "specialize":
        q = specialize_program(p, ctx)
    elif name == "generic":
        q = generic_program(p, ctx)
    elif name == "fuse":
        q = fuse_program(p, ctx)
    else:
        raise ValueError(f"unknown pass {name!r}")
    return _rename(q, ctx)


def fuse_program(p: Program, ctx: PassContext) -> Program:
    """Fuse adjacent prelude summations over the same collection."""
    p = rewrite_program(p, R.FUSE, ctx)
    while True:
        pre = list(p.prelude)
        for i in range(len(pre) - 1):
            (x, a), (y, b) = pre[i], pre[i + 1]
            probe = Let(x, a, Let(y, b, Var("__rest")))
            out = R._fuse(probe, ctx)
            if out is None:
                continue
            binds, _ = unlet(out)
            t, val = binds[0]
            if t == x:  # extended an existing fused record in place
                later = [e for _, e in pre[i + 2:]] + [p.result]
                later += [p.init, p.cond, p.step] if p.has_loop else []
                if not all(R._only_field_uses(e, x) for e in later):
                    continue
                q = _subst_program(p, i + 1, FieldStatic(Var(x), y))
                pre2 = list(q.prelude)
                pre2[i] = (x, val)
                q = replace(q, prelude=tuple(pre2))
            else:
                m = {x: FieldStatic(Var(t), x), y: FieldStatic(Var(t), y)}
                rest = [(w, substitute(e, m)) for w, e in pre[i + 2:]]
                kw = {}
                if p.has_loop:
                    kw = dict(init=substitute(p.init, m), cond=substitute(p.cond, m),
                              step=substitute(p.step, m))
                q = replace(p, prelude=tuple(pre[:i] + [(t, val)] + rest),
                            result=substitute(p.result, m), **kw)
            ctx.record_program("fuse-bindings", p, q)
            p = q
            break
        else:
            return p


def run_high_level_pipeline(p: Program, schema: Schema | None = None,
                            stages: tuple = HIGH_LEVEL_STAGES) -> tuple[Program, RewriteTrace]:
    trace = RewriteTrace()
    ctx = _ctx(schema, trace, "input", p)
    p = _rename(p, ctx)
    trace.stages.append(("input", p))
    for name in stages:
        p = run_pass(name, p, schema, trace)
        trace.stages.append((name, p))
    return p, trace
