"""Pretty-printer producing text that parses back to the same tree."""

from __future__ import annotations

import json
import math

from ..ir.ast import (
    Add, BinOp, Const, DictBuild, DictLit, Dom, Expr, FieldDyn, FieldStatic, If,
    Let, Lookup, Mul, Neg, Program, RecordLit, SetLit, Sum, UnOp, Var, VariantLit,
)
from ..ir.values import FieldV

# precedence levels; larger binds tighter
BINDER, OR, AND, CMP, ADD, MUL, UNARY, POSTFIX = range(8)


def _const(v) -> str:
    t = type(v)
    if t is bool:
        return "true" if v else "false"
    if t is int:
        return str(v)
    if t is float:
        if not math.isfinite(v):
            raise ValueError(f"non-finite constant {v!r} has no concrete syntax")
        r = repr(v)
        return r if any(c in r for c in ".e") else r + ".0"
    if t is str:
        return json.dumps(v)
    if t is FieldV:
        return f"`{v.name}`"
    raise ValueError(f"cannot print constant {v!r}")


def pretty(e: Expr, ctx: int = BINDER) -> str:
    s, prec = _pp(e)
    return f"({s})" if prec < ctx else s


def _pp(e: Expr) -> tuple[str, int]:
    t = type(e)
    if t is Const:
        s = _const(e.value)
        return s, (UNARY if s.startswith("-") else POSTFIX + 1)
    if t is Var:
        return e.name, POSTFIX + 1
    if t is Add:
        if type(e.right) is Neg:
            return f"{pretty(e.left, ADD)} - {pretty(e.right.expr, MUL)}", ADD
        return f"{pretty(e.left, ADD)} + {pretty(e.right, MUL)}", ADD
    if t is Mul:
        return f"{pretty(e.left, MUL)} * {pretty(e.right, UNARY)}", MUL
    if t is Neg:
        inner = e.expr
        if type(inner) is Const and type(inner.value) in (int, float):
            return f"-({_const(inner.value)})", UNARY
        s = pretty(inner, UNARY)
        if s.startswith("-"):
            s = f"({s})"
        return "-" + s, UNARY
    if t is BinOp:
        op = e.op
        if op == "min":
            return f"min({pretty(e.left)}, {pretty(e.right)})", POSTFIX + 1
        if op == "/":
            return f"{pretty(e.left, MUL)} / {pretty(e.right, UNARY)}", MUL
        if op == "||":
            return f"{pretty(e.left, OR)} || {pretty(e.right, AND)}", OR
        if op == "&&":
            return f"{pretty(e.left, AND)} && {pretty(e.right, CMP)}", AND
        return f"{pretty(e.left, ADD)} {op} {pretty(e.right, ADD)}", CMP
    if t is UnOp:
        return f"{e.op}({pretty(e.expr)})", POSTFIX + 1
    if t is Sum:
        return f"sum({e.var} in {pretty(e.coll)}) {pretty(e.body)}", BINDER
    if t is DictBuild:
        return f"lambda({e.var} in {pretty(e.coll)}) {pretty(e.body)}", BINDER
    if t is Let:
        return f"let {e.var} = {pretty(e.value)} in {pretty(e.body)}", BINDER
    if t is If:
        return f"if {pretty(e.cond)} then {pretty(e.then)} else {pretty(e.orelse)}", BINDER
    if t is DictLit:
        return "{{" + ", ".join(f"{pretty(k)} -> {pretty(v)}" for k, v in e.items) + "}}", POSTFIX + 1
    if t is SetLit:
        return "[[" + ", ".join(pretty(x) for x in e.items) + "]]", POSTFIX + 1
    if t is RecordLit:
        return "{" + ", ".join(f"{n} = {pretty(x)}" for n, x in e.fields) + "}", POSTFIX + 1
    if t is VariantLit:
        return f"<{e.name} = {pretty(e.expr, ADD)}>", POSTFIX + 1
    if t is Dom:
        return f"dom({pretty(e.expr)})", POSTFIX + 1
    if t is Lookup:
        d = f" ?? {pretty(e.default)}" if e.default is not None else ""
        return f"{pretty(e.dict, POSTFIX)}({pretty(e.key)}{d})", POSTFIX
    if t is FieldStatic:
        return f"{pretty(e.expr, POSTFIX)}.{e.name}", POSTFIX
    if t is FieldDyn:
        return f"{pretty(e.expr, POSTFIX)}[{pretty(e.field)}]", POSTFIX
    raise TypeError(f"unknown node {t.__name__}")


def pretty_program(p: Program) -> str:
    lines = []
    for ix in p.indexes:
        lines.append(f"index {ix.name} = trie({', '.join((ix.relation,) + tuple(ix.attrs))});")
    for v, e in p.prelude:
        lines.append(f"let {v} = {pretty(e)};")
    if p.has_loop:
        lines.append(f"{p.loop_var} <- {pretty(p.init)};")
        lines.append(f"while ({pretty(p.cond)}) {{")
        lines.append(f"  {p.loop_var} <- {pretty(p.step)}")
        lines.append("}")
    lines.append(pretty(p.result))
    return "\n".join(lines) + "\n"
