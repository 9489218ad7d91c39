"""Static type checking into the statically-typed dialect.

``typecheck`` annotates every node of a program with an ``IfaqType``. In
static mode collections must be homogeneous and dynamic field access is
rejected; in dynamic mode dynamic access is accepted when all candidate
fields share one type.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..ir.ast import (
    Add, BinOp, Const, DictBuild, DictLit, Dom, Expr, FieldDyn, FieldStatic, If,
    Let, Loc, Lookup, Mul, Neg, Program, RecordLit, SetLit, Sum, UnOp, Var, VariantLit,
)
from ..ir.types import (
    BOOL, DictT, FIELD, INT, REAL, STRING, IfaqType, RecordT, Scalar, SetT, VariantT,
    is_numeric, record_type,
)
from ..ir.values import FieldV
from .printer import pretty
from .schema import Schema


@dataclass(frozen=True)
class TypeCheckError:
    loc: Loc | None
    message: str
    snippet: str

    def __str__(self):
        where = f"{self.loc}: " if self.loc else ""
        return f"{where}{self.message} in `{self.snippet}`"


class TypeCheckFailure(Exception):
    def __init__(self, errors: list[TypeCheckError]):
        self.errors = errors
        super().__init__("\n".join(map(str, errors)))


@dataclass
class TypedProgram:
    program: Program
    var_types: dict = field(default_factory=dict)
    node_types: dict = field(default_factory=dict)  # id(node) -> IfaqType
    result_type: IfaqType | None = None

    def type_of(self, e: Expr) -> IfaqType | None:
        return self.node_types.get(id(e))


class _Err(IfaqType):
    """Placeholder type after an error; compatible with everything."""

    def __repr__(self):
        return "?"


ERR = _Err()


class _Mismatch(Exception):
    pass


def unify(a: IfaqType | None, b: IfaqType | None, widen: bool = True) -> IfaqType:
    """Least common type; ``None`` marks an unconstrained element type."""
    if a is None or a is ERR:
        return b
    if b is None or b is ERR:
        return a
    if a == b:
        return a
    if widen and {a, b} <= {INT, REAL}:
        return REAL
    if isinstance(a, RecordT) and isinstance(b, RecordT):
        if [n for n, _ in a.fields] != [n for n, _ in b.fields]:
            raise _Mismatch(f"records {a} and {b} have different fields")
        return RecordT(tuple((n, unify(x, y, widen)) for (n, x), (_, y) in zip(a.fields, b.fields)))
    if isinstance(a, DictT) and isinstance(b, DictT):
        return DictT(unify(a.key, b.key, False), unify(a.value, b.value, widen))
    if isinstance(a, SetT) and isinstance(b, SetT):
        return SetT(unify(a.elem, b.elem, False))
    raise _Mismatch(f"{a} and {b} are incompatible")


def _num(t):
    return t is ERR or (t is not None and is_numeric(t))


def _arith(a, b):
    if a is ERR or b is ERR:
        return ERR
    return REAL if REAL in (a, b) else INT


class _Checker:
    def __init__(self, static: bool):
        self.static = static
        self.errors: list[TypeCheckError] = []
        self.types: dict[int, IfaqType] = {}

    def err(self, e: Expr, loc, msg: str) -> IfaqType:
        snippet = pretty(e)
        if len(snippet) > 80:
            snippet = snippet[:77] + "..."
        self.errors.append(TypeCheckError(getattr(e, "loc", None) or loc, msg, snippet))
        return ERR

    def check(self, e: Expr, env: dict, loc=None) -> IfaqType:
        loc = getattr(e, "loc", None) or loc
        t = self._check(e, env, loc)
        self.types[id(e)] = t
        return t

    def _check(self, e: Expr, env: dict, loc) -> IfaqType:
        tp = type(e)
        if tp is Const:
            v = e.value
            return {bool: BOOL, int: INT, float: REAL, str: STRING, FieldV: FIELD}[type(v)]
        if tp is Var:
            if e.name not in env:
                return self.err(e, loc, f"unbound variable {e.name!r}")
            return env[e.name]
        if tp is Add:
            a, b = self.check(e.left, env, loc), self.check(e.right, env, loc)
            return self._add(e, a, b, loc)
        if tp is Mul:
            a, b = self.check(e.left, env, loc), self.check(e.right, env, loc)
            if _num(a) and _num(b):
                return _arith(a, b)
            if _num(a):
                return self._scaled(e, b, a, loc)
            if _num(b):
                return self._scaled(e, a, b, loc)
            if isinstance(a, RecordT) and isinstance(b, RecordT):
                try:
                    return unify(a, b)
                except _Mismatch as m:
                    return self.err(e, loc, f"cannot multiply records: {m}")
            return self.err(e, loc, f"cannot multiply {a} and {b}")
        if tp is Neg:
            a = self.check(e.expr, env, loc)
            if _num(a):
                return INT if a is BOOL else a
            if isinstance(a, (RecordT, DictT)):
                return a
            return self.err(e, loc, f"cannot negate {a}")
        if tp is UnOp:
            a = self.check(e.expr, env, loc)
            if not _num(a):
                return self.err(e, loc, f"{e.op} expects a number, got {a}")
            return REAL if e.op != "abs" else _arith(a, a)
        if tp is BinOp:
            a, b = self.check(e.left, env, loc), self.check(e.right, env, loc)
            if e.op in ("&&", "||"):
                if not (_num(a) and _num(b)):
                    return self.err(e, loc, f"{e.op} expects booleans")
                return BOOL
            if e.op in ("<", "<="):
                ok = (_num(a) and _num(b)) or (a == b and a in (STRING, FIELD))
                if not ok:
                    return self.err(e, loc, f"cannot compare {a} with {b}")
                return BOOL
            if e.op == "==":
                try:
                    unify(a, b)
                except _Mismatch:
                    if not (_num(a) and _num(b)):
                        return self.err(e, loc, f"cannot compare {a} with {b}")
                return BOOL
            if not (_num(a) and _num(b)):
                return self.err(e, loc, f"{e.op} expects numbers")
            return REAL if e.op == "/" else _arith(a, b)
        if tp is Sum or tp is DictBuild:
            c = self.check(e.coll, env, loc)
            if isinstance(c, SetT):
                elem = c.elem
            elif isinstance(c, DictT):
                elem = c.key
            elif c is ERR:
                elem = ERR
            else:
                return self.err(e, loc, f"cannot iterate over {c}")
            b = self.check(e.body, {**env, e.var: elem}, loc)
            if tp is DictBuild:
                return DictT(elem, b)
            if b is not ERR and not (_num(b) or isinstance(b, (RecordT, DictT, SetT))):
                return self.err(e, loc, f"summation body of type {b} has no addition")
            return INT if b is BOOL else b
        if tp is DictLit:
            kt = vt = None
            for k, v in e.items:
                ktt, vtt = self.check(k, env, loc), self.check(v, env, loc)
                try:
                    kt = unify(kt, ktt, widen=False)
                    vt = unify(vt, vtt)
                except _Mismatch as m:
                    if self.static:
                        return self.err(e, loc, f"heterogeneous dictionary: {m}")
            return DictT(kt, vt)
        if tp is SetLit:
            et = None
            for x in e.items:
                xt = self.check(x, env, loc)
                try:
                    et = unify(et, xt, widen=False)
                except _Mismatch as m:
                    if self.static:
                        return self.err(e, loc, f"heterogeneous set: {m}")
            return SetT(et)
        if tp is Dom:
            a = self.check(e.expr, env, loc)
            if isinstance(a, DictT):
                return SetT(a.key)
            if a is ERR:
                return ERR
            return self.err(e, loc, f"dom expects a dictionary, got {a}")
        if tp is Lookup:
            d = self.check(e.dict, env, loc)
            k = self.check(e.key, env, loc)
            if e.default is not None:
                self.check(e.default, env, loc)
            if isinstance(d, DictT):
                try:
                    unify(d.key, k, widen=False)
                except _Mismatch:
                    return self.err(e, loc, f"key of type {k} does not match dictionary key {d.key}")
                return d.value
            if isinstance(d, RecordT) and k in (FIELD, ERR):
                return self._dyn_field(e, d, e.key, loc)
            if d is ERR:
                return ERR
            return self.err(e, loc, f"cannot look up into {d}")
        if tp is RecordLit:
            return record_type([(n, self.check(x, env, loc)) for n, x in e.fields])
        if tp is VariantLit:
            return VariantT(((e.name, self.check(e.expr, env, loc)),))
        if tp is FieldStatic:
            r = self.check(e.expr, env, loc)
            if isinstance(r, RecordT):
                ft = r.get(e.name)
                if ft is None:
                    return self.err(e, loc, f"record {r} has no field {e.name!r}")
                return ft
            if isinstance(r, VariantT) and r.fields[0][0] == e.name:
                return r.fields[0][1]
            if r is ERR:
                return ERR
            return self.err(e, loc, f"field access .{e.name} on non-record {r}")
        if tp is FieldDyn:
            r = self.check(e.expr, env, loc)
            f = self.check(e.field, env, loc)
            if f not in (FIELD, ERR):
                return self.err(e, loc, f"dynamic field access needs a Field, got {f}")
            if isinstance(r, RecordT):
                return self._dyn_field(e, r, e.field, loc)
            if r is ERR:
                return ERR
            return self.err(e, loc, f"dynamic field access on non-record {r}")
        if tp is Let:
            v = self.check(e.value, env, loc)
            return self.check(e.body, {**env, e.var: v}, loc)
        if tp is If:
            c = self.check(e.cond, env, loc)
            if not _num(c):
                self.err(e, loc, f"condition must be boolean, got {c}")
            a, b = self.check(e.then, env, loc), self.check(e.orelse, env, loc)
            try:
                return unify(a, b)
            except _Mismatch as m:
                return self.err(e, loc, f"branches differ: {m}")
        return self.err(e, loc, f"unknown node {tp.__name__}")

    def _dyn_field(self, e, r: RecordT, fexpr: Expr, loc) -> IfaqType:
        if type(fexpr) is Const and type(fexpr.value) is FieldV:
            ft = r.get(fexpr.value.name)
            if ft is None:
                return self.err(e, loc, f"record {r} has no field {fexpr.value.name!r}")
            if self.static:
                return self.err(e, loc, "dynamic field access remains after specialization")
            return ft
        if self.static:
            return self.err(e, loc, "dynamic field access remains after specialization")
        out = None
        for _, ft in r.fields:
            try:
                out = unify(out, ft)
            except _Mismatch:
                return self.err(e, loc, "dynamic field access over fields of different types")
        return out if out is not None else ERR

    def _add(self, e, a, b, loc):
        if _num(a) and _num(b):
            return _arith(a, b)
        if type(e.left) is Const and e.left.value == 0:
            return b
        if type(e.right) is Const and e.right.value == 0:
            return a
        try:
            t = unify(a, b)
        except _Mismatch as m:
            return self.err(e, loc, f"cannot add: {m}")
        if isinstance(t, Scalar) and not is_numeric(t):
            return self.err(e, loc, f"cannot add values of type {t}")
        return t

    def _scaled(self, e, t, s, loc):
        if isinstance(t, RecordT):
            return RecordT(tuple((n, _arith(ft, s) if _num(ft) else self._scaled(e, ft, s, loc))
                                 for n, ft in t.fields))
        if isinstance(t, DictT):
            return DictT(t.key, _arith(t.value, s) if _num(t.value) else self._scaled(e, t.value, s, loc))
        if t is ERR:
            return ERR
        return self.err(e, loc, f"cannot scale {t}")


def typecheck(p: Program, schema: Schema | None = None, static: bool = True,
              extra_env: dict | None = None) -> TypedProgram:
    """Type the program; raises ``TypeCheckFailure`` listing every error."""
    c = _Checker(static)
    env: dict = dict(schema.var_types()) if schema is not None else {}
    if extra_env:
        env.update(extra_env)
    for ix in p.indexes:
        if schema is not None and ix.relation in schema.relations:
            rel = schema.relation(ix.relation)
            t: IfaqType = INT
            for a in reversed(ix.attrs):
                t = DictT(record_type([(a, rel.attr_type(a))]), t)
            env[ix.name] = t
        else:
            env[ix.name] = ERR
    for v, e in p.prelude:
        env[v] = c.check(e, env)
    if p.has_loop:
        it = c.check(p.init, env)
        st = c.check(p.step, {**env, p.loop_var: it})
        try:
            lt = unify(it, st)
        except _Mismatch as m:
            lt = c.err(p.step, None, f"loop update changes the state type: {m}")
        if lt != it:
            c.check(p.step, {**env, p.loop_var: lt})
        env[p.loop_var] = lt
        ct = c.check(p.cond, env)
        if not _num(ct):
            c.err(p.cond, None, f"loop condition must be boolean, got {ct}")
    rt = c.check(p.result, env)
    if c.errors:
        # de-duplicate errors reported twice by the retyping pass
        seen, errs = set(), []
        for x in c.errors:
            if x not in seen:
                seen.add(x)
                errs.append(x)
        raise TypeCheckFailure(errs)
    return TypedProgram(p, env, c.types, rt)
