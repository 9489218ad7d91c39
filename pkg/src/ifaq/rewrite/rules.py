"""Expression-level rule families.

Each rule is a function ``(expr, ctx) -> expr | None`` that inspects only
the root of ``expr``; the engine drives them bottom-up to a fixpoint.
"""

from __future__ import annotations

from ..ir.ast import (
    Add, BinOp, Const, DictBuild, DictLit, Dom, Expr, FieldDyn, FieldStatic, Let,
    Lookup, Mul, Neg, RecordLit, SetLit, Sum, Var, build_add, build_mul, children,
    flatten_add, flatten_mul, walk,
)
from ..ir.ops import bound_vars, canonical, free_vars, fresh_name, occurrences, substitute
from ..ir.values import FieldV, sort_key
from .engine import PassContext, RewriteRule


def _rebind(var: str, body: Expr, avoid: set) -> tuple[str, Expr]:
    """Rename binder ``var`` of ``body`` if it clashes with ``avoid``."""
    if var not in avoid:
        return var, body
    new = fresh_name(var, avoid | free_vars(body) | bound_vars(body))
    return new, substitute(body, {var: Var(new)})


# --------------------------------------------------------------------------
# normalization

def _distribute(e, ctx):
    if type(e) is Mul:
        if type(e.right) is Add:
            return Add(Mul(e.left, e.right.left), Mul(e.left, e.right.right))
        if type(e.left) is Add:
            return Add(Mul(e.left.left, e.right), Mul(e.left.right, e.right))
    return None


def _neg_out_of_mul(e, ctx):
    if type(e) is Mul:
        if type(e.right) is Neg:
            return Neg(Mul(e.left, e.right.expr))
        if type(e.left) is Neg:
            return Neg(Mul(e.left.expr, e.right))
    return None


def _mul_into_sum(e, ctx):
    if type(e) is Mul:
        r, l = e.right, e.left
        if type(r) is Sum:
            v, body = _rebind(r.var, r.body, free_vars(l))
            return Sum(v, r.coll, Mul(l, body))
        if type(l) is Sum:
            v, body = _rebind(l.var, l.body, free_vars(r))
            return Sum(v, l.coll, Mul(body, r))
    return None


def _neg_into_sum(e, ctx):
    if type(e) is Neg and type(e.expr) is Sum:
        s = e.expr
        return Sum(s.var, s.coll, Neg(s.body))
    return None


def _neg_neg(e, ctx):
    if type(e) is Neg and type(e.expr) is Neg:
        return e.expr.expr
    return None


def _neg_over_add(e, ctx):
    if type(e) is Neg and type(e.expr) is Add:
        return Add(Neg(e.expr.left), Neg(e.expr.right))
    return None


def _sum_over_add(e, ctx):
    if type(e) is Sum and type(e.body) is Add:
        a, b = e.body.left, e.body.right
        used = free_vars(e.body) | bound_vars(e.body) | {e.var}
        v2 = fresh_name(e.var, used)
        return Add(Sum(e.var, e.coll, a), Sum(v2, e.coll, substitute(b, {e.var: Var(v2)})))
    return None


NORMALIZE = [
    RewriteRule("distribute", "normalize", _distribute),
    RewriteRule("neg-out-of-product", "normalize", _neg_out_of_mul),
    RewriteRule("product-into-sum", "normalize", _mul_into_sum),
    RewriteRule("neg-into-sum", "normalize", _neg_into_sum),
    RewriteRule("double-neg", "normalize", _neg_neg),
    RewriteRule("neg-over-add", "normalize", _neg_over_add),
    RewriteRule("sum-over-add", "normalize", _sum_over_add),
]


# --------------------------------------------------------------------------
# loop scheduling

def estimate(c: Expr, ctx: PassContext) -> int | None:
    """Estimated number of elements of collection ``c`` (None if unknown)."""
    t = type(c)
    if t is SetLit:
        return len(c.items)
    if t is Var:
        b = ctx.bindings.get(c.name)
        if type(b) is SetLit:
            return len(b.items)
        if ctx.schema is not None and c.name in ctx.schema.feature_sets:
            return len(ctx.schema.feature_sets[c.name])
        return None
    if t is Dom and type(c.expr) is Var:
        name = c.expr.name
        s = ctx.schema
        if s is not None and name in s.relations:
            return s.cardinality(name)
        b = ctx.bindings.get(name)
        if b is not None:
            return _join_estimate(b, ctx)
        return None
    return None


def _join_estimate(e: Expr, ctx: PassContext) -> int | None:
    s = ctx.schema
    if s is None:
        return None
    out = None
    for n in walk(e):
        if type(n) is Sum and type(n.coll) is Dom and type(n.coll.expr) is Var:
            c = s.cardinality(n.coll.expr.name) if n.coll.expr.name in s.relations else None
            if c is None:
                return None
            out = c if out is None else out * c
    return out


def _swap_loops(e, ctx):
    if type(e) is Sum and type(e.body) is Sum:
        inner = e.body
        if e.var in free_vars(inner.coll):
            return None
        a, b = estimate(e.coll, ctx), estimate(inner.coll, ctx)
        if a is not None and b is not None and a > b:
            return Sum(inner.var, inner.coll, Sum(e.var, e.coll, inner.body))
        # ties and unknown data sizes: static field loops go outside
        if (a is None or a == b) and type(e.coll) is Dom and _static_coll(inner.coll, ctx):
            return Sum(inner.var, inner.coll, Sum(e.var, e.coll, inner.body))
    return None


def _static_coll(c: Expr, ctx: PassContext) -> bool:
    if type(c) is SetLit:
        return True
    if type(c) is Var:
        return type(ctx.bindings.get(c.name)) is SetLit or (
            ctx.schema is not None and c.name in ctx.schema.feature_sets)
    return False


SCHEDULE = [RewriteRule("swap-loops", "schedule", _swap_loops)]


# --------------------------------------------------------------------------
# factorization

def _split_factors(e: Expr, banned: set):
    """Factors of ``e`` independent of ``banned``; residual is None if all are."""
    t = type(e)
    if t is Mul:
        hs, rs = [], []
        for f in flatten_mul(e):
            h, r = _split_factors(f, banned)
            hs += h
            if r is not None:
                rs.append(r)
        return hs, (build_mul(rs) if rs else None)
    if t is Let:
        h, r = _split_factors(e.body, banned | {e.var})
        if r is None or not h:
            return [], e
        return h, Let(e.var, e.value, r)
    if free_vars(e) & banned:
        return [], e
    return [e], None


def _factor_out_of_sum(e, ctx):
    if type(e) is Sum:
        h, r = _split_factors(e.body, {e.var})
        if h and r is not None:
            return Mul(build_mul(h), Sum(e.var, e.coll, r))
    return None


def _neg_out_of_sum(e, ctx):
    if type(e) is Sum and type(e.body) is Neg:
        return Neg(Sum(e.var, e.coll, e.body.expr))
    return None


def _common_factor(e, ctx):
    if type(e) is not Add:
        return None
    terms = flatten_add(e)
    facs = [flatten_mul(t) for t in terms]
    keys = [[canonical(f) for f in fs] for fs in facs]
    for i in range(len(terms)):
        for j in range(i + 1, len(terms)):
            if len(facs[i]) < 2 or len(facs[j]) < 2:
                continue
            for a, ka in enumerate(keys[i]):
                if ka in keys[j]:
                    b = keys[j].index(ka)
                    ri = facs[i][:a] + facs[i][a + 1:]
                    rj = facs[j][:b] + facs[j][b + 1:]
                    merged = Mul(facs[i][a], Add(build_mul(ri), build_mul(rj)))
                    rest = [t for k, t in enumerate(terms) if k not in (i, j)]
                    return build_add(rest[:i] + [merged] + rest[i:])
    return None


FACTORIZE = [
    RewriteRule("neg-out-of-sum", "factorize", _neg_out_of_sum),
    RewriteRule("factor-out-of-sum", "factorize", _factor_out_of_sum),
    RewriteRule("common-factor", "factorize", _common_factor),
]


# --------------------------------------------------------------------------
# loop-invariant code motion (expression rules)

def _let_out_of_loop(e, ctx):
    t = type(e)
    if (t is Sum or t is DictBuild) and type(e.body) is Let:
        lt = e.body
        if e.var not in free_vars(lt.value):
            return Let(lt.var, lt.value, t(e.var, e.coll, lt.body))
    return None


def _let_out_of_op(e, ctx):
    t = type(e)
    if t is Mul or t is Add:
        if type(e.right) is Let and e.right.var not in free_vars(e.left):
            lt = e.right
            return Let(lt.var, lt.value, t(e.left, lt.body))
        if type(e.left) is Let and e.left.var not in free_vars(e.right):
            lt = e.left
            return Let(lt.var, lt.value, t(lt.body, e.right))
    if t is Neg and type(e.expr) is Let:
        lt = e.expr
        return Let(lt.var, lt.value, Neg(lt.body))
    return None


LICM = [
    RewriteRule("let-out-of-loop", "licm", _let_out_of_loop),
    RewriteRule("let-out-of-operator", "licm", _let_out_of_op),
]


# --------------------------------------------------------------------------
# partial evaluation

def is_static_literal(e: Expr) -> bool:
    t = type(e)
    if t is Const:
        return True
    if t is SetLit:
        return all(type(x) is Const for x in e.items)
    return False


def _inline_literal_let(e, ctx):
    if type(e) is Let and is_static_literal(e.value):
        return substitute(e.body, {e.var: e.value})
    return None


def _unroll(e, ctx):
    if type(e) is Sum and type(e.coll) is SetLit and e.coll.items:
        if not all(type(x) is Const for x in e.coll.items):
            return None
        # duplicates in a set literal denote one element
        seen, items = set(), []
        for x in e.coll.items:
            k = (type(x.value).__name__, x.value)
            if k not in seen:
                seen.add(k)
                items.append(x)
        items.sort(key=lambda c: sort_key(c.value))
        return build_add([substitute(e.body, {e.var: x}) for x in items])
    return None


def _const_key(e: Expr):
    return (type(e.value).__name__, e.value) if type(e) is Const else None


def _merge_dicts(e, ctx):
    if type(e) is Add and type(e.left) is DictLit and type(e.right) is DictLit:
        items = list(e.left.items)
        for k, v in e.right.items:
            for i, (k0, v0) in enumerate(items):
                if canonical(k0) == canonical(k):
                    items[i] = (k0, Add(v0, v))
                    break
            else:
                items.append((k, v))
        return DictLit(tuple(items))
    if type(e) is DictLit:
        # merge duplicate literal keys inside one literal
        out: list = []
        changed = False
        for k, v in e.items:
            for i, (k0, v0) in enumerate(out):
                if canonical(k0) == canonical(k):
                    out[i] = (k0, Add(v0, v))
                    changed = True
                    break
            else:
                out.append((k, v))
        if changed:
            return DictLit(tuple(out))
    return None


def _num(e):
    return type(e) is Const and type(e.value) in (int, float)


def _fold(e, ctx):
    t = type(e)
    if t is Add:
        if _num(e.left) and _num(e.right):
            return Const(e.left.value + e.right.value)
        if type(e.left) is Const and type(e.left.value) is int and e.left.value == 0:
            return e.right
        if type(e.right) is Const and type(e.right.value) is int and e.right.value == 0:
            return e.left
    if t is Mul:
        if _num(e.left) and _num(e.right):
            return Const(e.left.value * e.right.value)
        if type(e.left) is Const and type(e.left.value) is int and e.left.value == 1:
            return e.right
        if type(e.right) is Const and type(e.right.value) is int and e.right.value == 1:
            return e.left
    if t is Neg and _num(e.expr):
        return Const(-e.expr.value)
    if t is BinOp and type(e.left) is Const and type(e.right) is Const:
        a, b = e.left.value, e.right.value
        if e.op == "==" and type(a) is type(b):
            return Const(a == b)
    if t is Lookup and type(e.dict) is DictLit and type(e.key) is Const:
        k = _const_key(e.key)
        if all(type(x) is Const for x, _ in e.dict.items):
            for kk, v in e.dict.items:
                if _const_key(kk) == k:
                    return v
    if t is FieldDyn and type(e.expr) is RecordLit and type(e.field) is Const \
            and type(e.field.value) is FieldV:
        for n, x in e.expr.fields:
            if n == e.field.value.name:
                return x
    if t is FieldStatic and type(e.expr) is RecordLit:
        for n, x in e.expr.fields:
            if n == e.name:
                return x
    return None


PARTIAL_EVAL = [
    RewriteRule("inline-literal", "partialEval", _inline_literal_let),
    RewriteRule("unroll", "partialEval", _unroll),
    RewriteRule("merge-dict-literals", "partialEval", _merge_dicts),
    RewriteRule("constant-fold", "partialEval", _fold),
]


# --------------------------------------------------------------------------
# schema specialization (the context-free part)

def field_literal(e: Expr) -> str | None:
    if type(e) is Const and type(e.value) is FieldV:
        return e.value.name
    return None


def _static_field(e, ctx):
    if type(e) is FieldDyn:
        f = field_literal(e.field)
        if f is not None:
            return FieldStatic(e.expr, f)
    return None


def _dict_to_record(e, ctx):
    if type(e) is DictLit and e.items:
        names = [field_literal(k) for k, _ in e.items]
        if all(n is not None for n in names) and len(set(names)) == len(names):
            return RecordLit(tuple((n, v) for n, (_, v) in zip(names, e.items)))
    return None


def _lambda_to_record(e, ctx):
    if type(e) is DictBuild and type(e.coll) is SetLit and e.coll.items:
        names = [field_literal(x) for x in e.coll.items]
        if all(n is not None for n in names):
            uniq = sorted(set(names))
            return RecordLit(tuple((n, substitute(e.body, {e.var: Const(FieldV(n))})) for n in uniq))
    return None


SPECIALIZE = [
    RewriteRule("dynamic-to-static-access", "schemaSpec", _static_field),
    RewriteRule("dict-literal-to-record", "schemaSpec", _dict_to_record),
    RewriteRule("lambda-to-record", "schemaSpec", _lambda_to_record),
]


# --------------------------------------------------------------------------
# generic let rules

def _under_binder(e: Expr, name: str) -> bool:
    """Whether a free occurrence of ``name`` sits inside a loop body."""
    t = type(e)
    if t is Var:
        return False
    if t in (Sum, DictBuild):
        if name in free_vars(e.body) and e.var != name:
            return True
        return _under_binder(e.coll, name)
    if t is Let:
        if _under_binder(e.value, name):
            return True
        return e.var != name and _under_binder(e.body, name)
    return any(_under_binder(c, name) for c in children(e))


def is_trivial(e: Expr) -> bool:
    t = type(e)
    if t is Const or t is Var:
        return True
    if t is FieldStatic:
        return is_trivial(e.expr)
    return False


def _dead_let(e, ctx):
    if type(e) is Let and e.var not in free_vars(e.body):
        return e.body
    return None


def _inline_let(e, ctx):
    if type(e) is Let:
        n = occurrences(e.body, e.var)
        if is_trivial(e.value) or (n == 1 and not _under_binder(e.body, e.var)):
            return substitute(e.body, {e.var: e.value})
    return None


def _let_of_let(e, ctx):
    if type(e) is Let and type(e.value) is Let:
        inner = e.value
        v, body = inner.var, inner.body
        if v in free_vars(e.body):
            v, body = _rebind(v, body, free_vars(e.body))
        return Let(v, inner.value, Let(e.var, body, e.body))
    return None


def _cse_let(e, ctx):
    if type(e) is not Let:
        return None
    key = canonical(e.value)
    cur = e.body
    chain = []
    while type(cur) is Let:
        if canonical(cur.value) == key and free_vars(cur.value) == free_vars(e.value) \
                and not (free_vars(cur.value) & {v for v, _ in chain}):
            rebuilt = substitute(cur.body, {cur.var: Var(e.var)})
            for v, val in reversed(chain):
                rebuilt = Let(v, val, rebuilt)
            return Let(e.var, e.value, rebuilt)
        chain.append((cur.var, cur.value))
        cur = cur.body
    return None


GENERIC = [
    RewriteRule("dead-let", "generic", _dead_let),
    RewriteRule("inline-let", "generic", _inline_let),
    RewriteRule("let-of-let", "generic", _let_of_let),
    RewriteRule("cse-let", "generic", _cse_let),
]


# --------------------------------------------------------------------------
# horizontal loop fusion

def _only_field_uses(e: Expr, name: str) -> bool:
    t = type(e)
    if t is Var:
        return e.name != name
    if t is FieldStatic and type(e.expr) is Var and e.expr.name == name:
        return True
    if t in (Sum, DictBuild, Let) and e.var == name:
        return _only_field_uses(e.coll if t is not Let else e.value, name)
    return all(_only_field_uses(c, name) for c in children(e))


def _fuse(e, ctx):
    if type(e) is not Let or type(e.value) is not Sum or type(e.body) is not Let:
        return None
    a, nxt = e.value, e.body
    b = nxt.value
    if type(b) is not Sum or canonical(a.coll) != canonical(b.coll):
        return None
    if e.var in free_vars(b):
        return None
    b_body = substitute(b.body, {b.var: Var(a.var)}) if b.var != a.var else b.body
    if a.var in free_vars(b.body) and b.var != a.var:
        return None
    rest = nxt.body
    if type(a.body) is RecordLit and _only_field_uses(rest, e.var) \
            and nxt.var not in [n for n, _ in a.body.fields]:
        fields = a.body.fields + ((nxt.var, b_body),)
        new_rest = substitute(rest, {nxt.var: FieldStatic(Var(e.var), nxt.var)})
        return Let(e.var, Sum(a.var, a.coll, RecordLit(fields)), new_rest)
    used = free_vars(rest) | bound_vars(rest) | free_vars(a) | free_vars(b) | {e.var, nxt.var}
    t = fresh_name("t", used)
    body = RecordLit(((e.var, a.body), (nxt.var, b_body)))
    new_rest = substitute(rest, {e.var: FieldStatic(Var(t), e.var),
                                 nxt.var: FieldStatic(Var(t), nxt.var)})
    return Let(t, Sum(a.var, a.coll, body), new_rest)


FUSE = [RewriteRule("fuse-loops", "fuse", _fuse)]

FAMILIES = {
    "normalize": NORMALIZE,
    "schedule": SCHEDULE,
    "factorize": FACTORIZE,
    "licm": LICM,
    "partialEval": PARTIAL_EVAL,
    "schemaSpec": SPECIALIZE,
    "generic": GENERIC,
    "fuse": FUSE,
}
