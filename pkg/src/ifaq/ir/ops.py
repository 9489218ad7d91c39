"""Binder-aware operations over expressions and programs."""

from __future__ import annotations

import re
from dataclasses import replace
from typing import Iterable

from .ast import (
    Add, BinOp, Const, DictBuild, Expr, Let, Lookup, Mul, Program, Sum, Var,
    children, flatten_add, flatten_mul, map_children,
)


def free_vars(e: Expr) -> set[str]:
    return set(_free(e))


def _free(e: Expr) -> frozenset:
    # nodes are immutable, so the result is cached on the node
    t = type(e)
    if t is Var:
        return frozenset((e.name,))
    if t is Const:
        return frozenset()
    cached = e.__dict__.get("_fv")
    if cached is not None:
        return cached
    if t is Sum or t is DictBuild:
        out = _free(e.coll) | (_free(e.body) - {e.var})
    elif t is Let:
        out = _free(e.value) | (_free(e.body) - {e.var})
    else:
        out = frozenset().union(*map(_free, children(e)))
    object.__setattr__(e, "_fv", out)
    return out


def occurrences(e: Expr, name: str) -> int:
    """Number of free occurrences of ``name`` in ``e``."""
    t = type(e)
    if t is Var:
        return 1 if e.name == name else 0
    if (t is Sum or t is DictBuild) and e.var == name:
        return occurrences(e.coll, name)
    if t is Let and e.var == name:
        return occurrences(e.value, name)
    return sum(occurrences(c, name) for c in children(e))


def bound_vars(e: Expr) -> set[str]:
    out = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if type(n) in (Sum, DictBuild, Let):
            out.add(n.var)
        stack.extend(children(n))
    return out


_SUFFIX = re.compile(r"_\d+$")


def fresh_name(base: str, used: set[str]) -> str:
    stem = _SUFFIX.sub("", base)
    i = 1
    while f"{stem}_{i}" in used:
        i += 1
    name = f"{stem}_{i}"
    used.add(name)
    return name


def substitute(e: Expr, mapping: dict[str, Expr]) -> Expr:
    """Capture-avoiding substitution of free variables."""
    if not mapping:
        return e
    repl_fvs: set[str] = set()
    for r in mapping.values():
        repl_fvs |= free_vars(r)
    return _subst(e, mapping, repl_fvs)


def _subst(e: Expr, mapping: dict, repl_fvs: set) -> Expr:
    t = type(e)
    if t is Var:
        return mapping.get(e.name, e)
    if t is Const:
        return e
    if t in (Sum, DictBuild, Let):
        outer = e.coll if t is not Let else e.value
        new_outer = _subst(outer, mapping, repl_fvs)
        inner_map = {k: v for k, v in mapping.items() if k != e.var}
        var = e.var
        body = e.body
        if var in repl_fvs and inner_map:
            used = repl_fvs | free_vars(body) | bound_vars(body) | set(mapping)
            var = fresh_name(e.var, used)
            body = _subst(body, {e.var: Var(var)}, {var})
        new_body = _subst(body, inner_map, repl_fvs) if inner_map else body
        if t is Let:
            return replace(e, var=var, value=new_outer, body=new_body)
        return replace(e, var=var, coll=new_outer, body=new_body)
    return map_children(e, lambda c: _subst(c, mapping, repl_fvs))


# --------------------------------------------------------------------------
# alpha renaming

class _Renamer:
    def __init__(self, used: set[str]):
        self.used = used

    def bind(self, name: str) -> str:
        if name in self.used:
            return fresh_name(name, self.used)
        self.used.add(name)
        return name

    def expr(self, e: Expr, scope: dict[str, str]) -> Expr:
        t = type(e)
        if t is Var:
            n = scope.get(e.name)
            return e if n is None or n == e.name else replace(e, name=n)
        if t is Const:
            return e
        if t in (Sum, DictBuild, Let):
            outer = self.expr(e.coll if t is not Let else e.value, scope)
            new = self.bind(e.var)
            body = self.expr(e.body, {**scope, e.var: new})
            if t is Let:
                return replace(e, var=new, value=outer, body=body)
            return replace(e, var=new, coll=outer, body=body)
        return map_children(e, lambda c: self.expr(c, scope))


def _all_free(exprs: Iterable[Expr]) -> set[str]:
    out = set()
    for x in exprs:
        if x is not None:
            out |= free_vars(x)
    return out


def alpha_rename_expr(e: Expr, reserved: Iterable[str] = ()) -> Expr:
    """Make every binder in ``e`` distinct from each other and from free names."""
    used = set(reserved) | free_vars(e)
    return _Renamer(used).expr(e, {})


def alpha_rename(p: Program, reserved: Iterable[str] = ()) -> Program:
    """Deterministic renaming so that all binders of ``p`` are distinct.

    The first binder of a name keeps it; later ones get ``name_1``, ``name_2``...
    """
    own = {v for v, _ in p.prelude} | ({p.loop_var} if p.has_loop else set())
    used = set(reserved) | (_all_free(p.exprs()) - own)
    for ix in p.indexes:
        used.add(ix.name)
    r = _Renamer(used)
    scope: dict[str, str] = {}
    prelude = []
    for v, e in p.prelude:
        e2 = r.expr(e, scope)
        nv = r.bind(v)
        scope = {**scope, v: nv}
        prelude.append((nv, e2))
    if p.has_loop:
        init = r.expr(p.init, scope)
        lv = r.bind(p.loop_var)
        lscope = {**scope, p.loop_var: lv}
        cond = r.expr(p.cond, lscope)
        step = r.expr(p.step, lscope)
        result = r.expr(p.result, lscope)
        return replace(p, prelude=tuple(prelude), loop_var=lv, init=init, cond=cond,
                       step=step, result=result)
    return replace(p, prelude=tuple(prelude), result=r.expr(p.result, scope))


# --------------------------------------------------------------------------
# equality modulo alpha and commutativity

def canonical(e: Expr, env: tuple = ()) -> str:
    """Canonical string: de Bruijn binders, flattened and sorted + and *."""
    t = type(e)
    if t is Var:
        for i in range(len(env) - 1, -1, -1):
            if env[i] == e.name:
                return f"#{len(env) - 1 - i}"
        return e.name
    if t is Const:
        return f"{type(e.value).__name__}:{e.value!r}"
    if t is Add:
        return "(+ " + " ".join(sorted(canonical(x, env) for x in flatten_add(e))) + ")"
    if t is Mul:
        return "(* " + " ".join(sorted(canonical(x, env) for x in flatten_mul(e))) + ")"
    if t in (Sum, DictBuild):
        return f"({t.__name__} {canonical(e.coll, env)} {canonical(e.body, env + (e.var,))})"
    if t is Let:
        return f"(let {canonical(e.value, env)} {canonical(e.body, env + (e.var,))})"
    if t is BinOp:
        return f"({e.op} {canonical(e.left, env)} {canonical(e.right, env)})"
    if t.__name__ == "RecordLit":
        return "(rec " + " ".join(f"{n}={canonical(x, env)}" for n, x in sorted(e.fields, key=lambda f: f[0])) + ")"
    head = t.__name__
    extra = ""
    if hasattr(e, "op"):
        extra = " " + e.op
    elif t.__name__ in ("FieldStatic", "VariantLit"):
        extra = " " + e.name
    elif t is Lookup and e.default is not None:
        extra = " default"
    return f"({head}{extra} " + " ".join(canonical(c, env) for c in children(e)) + ")"


def expr_equal(a: Expr, b: Expr) -> bool:
    return canonical(a) == canonical(b)


def program_canonical(p: Program) -> str:
    env: tuple = ()
    parts = []
    for v, e in p.prelude:
        parts.append(canonical(e, env))
        env = env + (v,)
    if p.has_loop:
        parts.append("init " + canonical(p.init, env))
        env = env + (p.loop_var,)
        parts.append("cond " + canonical(p.cond, env))
        parts.append("step " + canonical(p.step, env))
    parts.append("result " + canonical(p.result, env))
    parts.append("idx " + repr([(i.relation, i.attrs) for i in p.indexes]))
    return "\n".join(parts)


def program_equal(a: Program, b: Program) -> bool:
    return program_canonical(a) == program_canonical(b)


def is_constant(e: Expr) -> bool:
    return type(e) is Const
