"""Reference big-step evaluator.

Expressions are compiled once into Python closures over a mutable
environment dictionary; the closures update a shared ``CostStats``. The
``Compiler`` class is subclassed by the physical execution engine, which
swaps in layout-aware summation and lookup.
"""

from __future__ import annotations

import math
from typing import Any, Callable

from ..ir.ast import (
    Add, BinOp, Const, DictBuild, DictLit, Dom, Expr, FieldDyn, FieldStatic, If,
    Let, Lookup, Mul, Neg, Program, RecordLit, SetLit, Sum, UnOp, Var, VariantLit,
)
from ..ir.values import (
    DictV, FieldV, Record, RuntimeFault, SetV, Variant, drop_zeros, ring_add, ring_mul,
    ring_neg, sort_key, zero_like,
)
from .database import Database
from .stats import CostStats, IterationPolicy


class EvalError(RuntimeFault):
    """Base class of evaluation errors."""


class UnboundVariable(EvalError):
    pass


class KeyNotFound(EvalError):
    pass


class DivisionByZero(EvalError):
    pass


_MISSING = object()
Fn = Callable[[dict], Any]


def iter_items(coll, what: str = "collection") -> tuple:
    t = type(coll)
    if t is SetV:
        return coll.items
    if t is DictV:
        return coll.keys()
    raise RuntimeFault(f"cannot iterate over {type(coll).__name__} ({what})")


def relation_tag(coll) -> str | None:
    return getattr(coll, "relation", None)


class Accumulator:
    """In-place fold under ring addition; mirrors ``ring_add`` counting."""

    __slots__ = ("st", "kind", "num", "d", "names", "vals", "s")

    def __init__(self, st: CostStats):
        self.st = st
        self.kind = None  # None | "num" | "dict" | "rec" | "set"

    def add(self, v):
        t = type(v)
        k = self.kind
        if k is None:
            self._start(v, t)
            return
        if k == "num":
            if t is int or t is float or t is bool:
                self.num += v
                self.st.arithmeticOps += 1
                return
            if self.num == 0 and type(self.num) is int:
                self._start(v, t)
                return
            raise RuntimeFault(f"cannot add {type(self.num).__name__} and {t.__name__}")
        if t is int and v == 0:
            return
        if k == "dict":
            if t is not DictV:
                raise RuntimeFault(f"cannot add DictV and {t.__name__}")
            d = self.d
            st = self.st
            for key, x in v.data.items():
                st.dictInserts += 1
                if key in d:
                    d[key] = ring_add(d[key], x, st)
                else:
                    d[key] = x
            return
        if k == "rec":
            if t is not Record or v.names != self.names:
                raise RuntimeFault(f"cannot add record {self.names} and {v!r}")
            vals = self.vals
            st = self.st
            for i, x in enumerate(v.vals):
                vals[i] = ring_add(vals[i], x, st)
            return
        if k == "set":
            if t is not SetV:
                raise RuntimeFault(f"cannot add SetV and {t.__name__}")
            self.s.update(v.items)
            return

    def _start(self, v, t):
        if t is int or t is float or t is bool:
            self.kind = "num"
            self.num = v
        elif t is DictV:
            self.kind = "dict"
            self.d = dict(v.data)
        elif t is Record:
            self.kind = "rec"
            self.names = v.names
            self.vals = list(v.vals)
        elif t is SetV:
            self.kind = "set"
            self.s = set(v.items)
        else:
            raise RuntimeFault(f"summation over values of type {t.__name__}")

    def result(self, zero):
        k = self.kind
        if k is None:
            return zero
        if k == "num":
            return self.num
        if k == "dict":
            return drop_zeros(DictV(self.d))
        if k == "rec":
            return Record._raw(self.names, tuple(self.vals))
        return SetV(self.s)


def zero_of(e: Expr, env: dict):
    """Additive identity for the type of ``e`` (used for empty summations)."""
    t = type(e)
    if t is DictLit or t is DictBuild:
        return DictV({})
    if t is SetLit:
        return SetV(())
    if t is RecordLit:
        return Record((n, zero_of(x, env)) for n, x in e.fields)
    if t is Mul or t is Add:
        a, b = zero_of(e.left, env), zero_of(e.right, env)
        if t is Mul and type(a) is Record and type(b) is Record:
            return a
        if not (type(a) is int and a == 0):
            return a
        return b
    if t is Neg:
        return zero_of(e.expr, env)
    if t is Let or t is Sum:
        return zero_of(e.body, env)
    if t is If:
        return zero_of(e.then, env)
    if t is Var:
        v = env.get(e.name, _MISSING)
        if v is _MISSING:
            return 0
        return zero_like(v) if type(v) in (Record, DictV, SetV, float) else 0
    if t is Lookup:
        d = e.dict
        dv = env.get(d.name, _MISSING) if type(d) is Var else _MISSING
        if type(dv) is DictV and len(dv):
            v = next(iter(dv.data.values()))
            return zero_like(v) if type(v) in (Record, DictV, SetV) else 0
        if e.default is not None:
            return zero_of(e.default, env)
        return 0
    if t is FieldStatic:
        r = zero_of(e.expr, env)
        if type(r) is Record and r.has(e.name):
            return r.get(e.name)
        return 0
    return 0


class Compiler:
    """Compiles expressions to closures ``f(env) -> value``."""

    def __init__(self, stats: CostStats):
        self.st = stats

    def compile(self, e: Expr) -> Fn:
        m = getattr(self, "c_" + type(e).__name__)
        return m(e)

    # -- leaves
    def c_Const(self, e: Const) -> Fn:
        v = e.value
        return lambda env: v

    def c_Var(self, e: Var) -> Fn:
        name = e.name

        def f(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariable(f"unbound variable {name!r}") from None
        return f

    # -- arithmetic
    def c_Add(self, e: Add) -> Fn:
        a, b = self.compile(e.left), self.compile(e.right)
        st = self.st

        def f(env):
            x, y = a(env), b(env)
            tx, ty = type(x), type(y)
            if (tx is float or tx is int) and (ty is float or ty is int):
                st.arithmeticOps += 1
                return x + y
            r = ring_add(x, y, st)
            return drop_zeros(r) if type(r) is DictV else r
        return f

    def c_Mul(self, e: Mul) -> Fn:
        a, b = self.compile(e.left), self.compile(e.right)
        st = self.st

        def f(env):
            x = a(env)
            y = b(env)
            tx, ty = type(x), type(y)
            if (tx is float or tx is int or tx is bool) and (ty is float or ty is int or ty is bool):
                st.arithmeticOps += 1
                return x * y
            return ring_mul(x, y, st)
        return f

    def c_Neg(self, e: Neg) -> Fn:
        a = self.compile(e.expr)
        st = self.st
        return lambda env: ring_neg(a(env), st)

    def c_UnOp(self, e: UnOp) -> Fn:
        a = self.compile(e.expr)
        st = self.st
        op = e.op

        def f(env):
            x = a(env)
            st.arithmeticOps += 1
            if op == "abs":
                return abs(x)
            if op == "sqrt":
                if x < 0:
                    raise EvalError(f"sqrt of negative number {x}")
                return math.sqrt(x)
            if x <= 0:
                raise EvalError(f"ln of non-positive number {x}")
            return math.log(x)
        return f

    def c_BinOp(self, e: BinOp) -> Fn:
        a, b = self.compile(e.left), self.compile(e.right)
        st = self.st
        op = e.op
        if op == "==":
            return lambda env: a(env) == b(env)
        if op == "<":
            return lambda env: _cmp(a(env), b(env)) < 0
        if op == "<=":
            return lambda env: _cmp(a(env), b(env)) <= 0
        if op == "&&":
            return lambda env: bool(a(env)) and bool(b(env))
        if op == "||":
            return lambda env: bool(a(env)) or bool(b(env))
        if op == "min":
            def fmin(env):
                st.arithmeticOps += 1
                x, y = a(env), b(env)
                return y if _cmp(y, x) < 0 else x
            return fmin
        if op == "/":
            def fdiv(env):
                x, y = a(env), b(env)
                if y == 0:
                    raise DivisionByZero("division by zero")
                st.arithmeticOps += 1
                return x / y
            return fdiv
        raise EvalError(f"unknown operator {op!r}")

    # -- collections
    def c_Sum(self, e: Sum) -> Fn:
        coll = self.compile(e.coll)
        body = self.compile(e.body)
        var = e.var
        st = self.st
        body_e = e.body

        def f(env):
            c = coll(env)
            items = iter_items(c, "summation")
            n = len(items)
            st.loopIterations += n
            if relation_tag(c) is not None:
                st.tuplesScanned += n
            saved = env.get(var, _MISSING)
            acc = Accumulator(st)
            try:
                for it in items:
                    env[var] = it
                    acc.add(body(env))
            finally:
                _restore(env, var, saved)
            if acc.kind is None:
                return zero_of(body_e, env)
            return acc.result(None)
        return f

    def c_DictBuild(self, e: DictBuild) -> Fn:
        coll = self.compile(e.coll)
        body = self.compile(e.body)
        var = e.var
        st = self.st

        def f(env):
            c = coll(env)
            items = iter_items(c, "dictionary construction")
            n = len(items)
            st.loopIterations += n
            if relation_tag(c) is not None:
                st.tuplesScanned += n
            saved = env.get(var, _MISSING)
            out = {}
            try:
                for it in items:
                    env[var] = it
                    out[it] = body(env)
            finally:
                _restore(env, var, saved)
            st.dictInserts += n
            return DictV(out)
        return f

    def c_DictLit(self, e: DictLit) -> Fn:
        items = [(self.compile(k), self.compile(v)) for k, v in e.items]
        st = self.st

        def f(env):
            out = {}
            for kf, vf in items:
                k = kf(env)
                v = vf(env)
                st.dictInserts += 1
                out[k] = ring_add(out[k], v, st) if k in out else v
            return DictV(out)
        return f

    def c_SetLit(self, e: SetLit) -> Fn:
        items = [self.compile(x) for x in e.items]
        return lambda env: SetV([x(env) for x in items])

    def c_Dom(self, e: Dom) -> Fn:
        a = self.compile(e.expr)

        def f(env):
            d = a(env)
            if type(d) is DictV:
                return d.dom()
            if type(d) is Record:
                return SetV(FieldV(n) for n in d.names)
            raise RuntimeFault(f"dom of non-dictionary {type(d).__name__}")
        return f

    def c_Lookup(self, e: Lookup) -> Fn:
        d = self.compile(e.dict)
        k = self.compile(e.key)
        st = self.st
        default = self.compile(e.default) if e.default is not None else None

        def f(env):
            dv = d(env)
            key = k(env)
            if type(dv) is DictV:
                st.dictLookups += 1
                try:
                    return dv.data[key]
                except KeyError:
                    if default is not None:
                        return default(env)
                    raise KeyNotFound(f"key {key!r} not found") from None
                except TypeError:
                    raise RuntimeFault(f"unhashable key {key!r}") from None
            if type(dv) is Record and type(key) is FieldV:
                return dv.get(key.name)
            raise RuntimeFault(f"cannot look up into {type(dv).__name__}")
        return f

    def c_RecordLit(self, e: RecordLit) -> Fn:
        order = sorted(range(len(e.fields)), key=lambda i: e.fields[i][0])
        names = tuple(e.fields[i][0] for i in order)
        fs = [self.compile(e.fields[i][1]) for i in order]
        return lambda env: Record._raw(names, tuple(f(env) for f in fs))

    def c_VariantLit(self, e: VariantLit) -> Fn:
        a = self.compile(e.expr)
        name = e.name
        return lambda env: Variant(name, a(env))

    def c_FieldStatic(self, e: FieldStatic) -> Fn:
        a = self.compile(e.expr)
        name = e.name

        def f(env):
            r = a(env)
            t = type(r)
            if t is Record:
                return r.get(name)
            if t is Variant:
                if r.name != name:
                    raise RuntimeFault(f"variant <{r.name}> has no field {name!r}")
                return r.value
            raise RuntimeFault(f"field access .{name} on {t.__name__}")
        return f

    def c_FieldDyn(self, e: FieldDyn) -> Fn:
        a = self.compile(e.expr)
        fl = self.compile(e.field)

        def f(env):
            r = a(env)
            fv = fl(env)
            if type(fv) is not FieldV:
                raise RuntimeFault(f"dynamic field access with non-field {fv!r}")
            if type(r) is Record:
                return r.get(fv.name)
            if type(r) is Variant and r.name == fv.name:
                return r.value
            raise RuntimeFault(f"dynamic field access on {type(r).__name__}")
        return f

    # -- binding and control
    def c_Let(self, e: Let) -> Fn:
        val = self.compile(e.value)
        body = self.compile(e.body)
        var = e.var

        def f(env):
            v = val(env)
            saved = env.get(var, _MISSING)
            env[var] = v
            try:
                return body(env)
            finally:
                _restore(env, var, saved)
        return f

    def c_If(self, e: If) -> Fn:
        c, a, b = self.compile(e.cond), self.compile(e.then), self.compile(e.orelse)
        return lambda env: a(env) if c(env) else b(env)


def _restore(env, var, saved):
    if saved is _MISSING:
        env.pop(var, None)
    else:
        env[var] = saved


def _cmp(x, y) -> int:
    try:
        return -1 if x < y else (1 if x > y else 0)
    except TypeError:
        kx, ky = sort_key(x), sort_key(y)
        return -1 if kx < ky else (1 if kx > ky else 0)


def linf_delta(a, b) -> float:
    """Largest absolute difference between numeric leaves of two states."""
    ta = type(a)
    if ta in (int, float, bool) and type(b) in (int, float, bool):
        return abs(a - b)
    if ta is Record and type(b) is Record:
        return max((linf_delta(x, y) for x, y in zip(a.vals, b.vals)), default=0.0)
    if ta is DictV and type(b) is DictV:
        keys = set(a.data) | set(b.data)
        return max((linf_delta(a.data.get(k, 0), b.data.get(k, 0)) for k in keys), default=0.0)
    return 0.0 if a == b else math.inf


def _is_relation_like(v) -> bool:
    if type(v) is not DictV or not v.data:
        return False
    return all(type(k) is Record for k in v.data) and all(type(x) is int for x in v.data.values())


class Evaluator:
    """Evaluates whole programs against a database."""

    compiler_class = Compiler

    def __init__(self, db: Database | None = None, policy: IterationPolicy | None = None):
        self.db = db if db is not None else Database()
        self.policy = policy if policy is not None else IterationPolicy()

    def initial_env(self, p: Program) -> dict:
        env: dict = {}
        if self.db.schema is not None:
            for name, fs in self.db.schema.feature_sets.items():
                env[name] = SetV([FieldV(f) for f in fs])
        env.update(self.db.relations)
        for ix in p.indexes:
            if ix.relation not in self.db:
                raise EvalError(f"index {ix.name!r} over unknown relation {ix.relation!r}")
            env[ix.name] = self.db.trie(ix.relation, ix.attrs)
        return env

    def make_compiler(self, stats: CostStats, p: Program):
        return self.compiler_class(stats)

    def run(self, p: Program) -> tuple[Any, CostStats]:
        st = CostStats()
        comp = self.make_compiler(st, p)
        env = self.initial_env(p)
        for v, e in p.prelude:
            val = comp.compile(e)(env)
            if _is_relation_like(val) and val.relation is None:
                # a derived relation (e.g. a materialized join) counts as one
                val = DictV(val.data, relation=v)
            env[v] = val
        if p.has_loop:
            env[p.loop_var] = comp.compile(p.init)(env)
            cond = comp.compile(p.cond)
            step = comp.compile(p.step)
            snap = st.snapshot()
            eps = self.policy.epsilon
            rounds = 0
            while rounds < self.policy.max_iters and cond(env):
                old = env[p.loop_var]
                new = step(env)
                env[p.loop_var] = new
                rounds += 1
                if eps is not None and linf_delta(old, new) < eps:
                    break
            st.loop = st.since(snap)
            st.whileIterations = rounds
        result = comp.compile(p.result)(env)
        return result, st


def evaluate(p: Program, db: Database | None = None,
             policy: IterationPolicy | None = None) -> tuple[Any, CostStats]:
    return Evaluator(db, policy).run(p)


def eval_expr(e: Expr, db: Database | None = None, env: dict | None = None) -> tuple[Any, CostStats]:
    st = CostStats()
    full = dict(db.relations) if db is not None else {}
    if env:
        full.update(env)
    return Compiler(st).compile(e)(full), st


def _min_add(a, b):
    if type(a) in (int, float, bool) and type(b) in (int, float, bool):
        return a if a <= b else b
    raise RuntimeFault(f"minimum over non-numeric values {a!r} and {b!r}")


def eval_sum(var: str, coll, body: Expr, env: dict | None = None, db: Database | None = None,
             monoid: str = "add", stats: CostStats | None = None):
    """Folds ``body`` over the elements of an already evaluated collection.

    ``monoid`` picks the addition: ``"add"`` is the ring sum, ``"min"`` keeps
    the smallest numeric addend (and yields ``inf`` over an empty collection).
    """
    st = stats if stats is not None else CostStats()
    full = dict(db.relations) if db is not None else {}
    if env:
        full.update(env)
    fn = Compiler(st).compile(body)
    items = iter_items(coll, "summation")
    st.loopIterations += len(items)
    if relation_tag(coll) is not None:
        st.tuplesScanned += len(items)
    if monoid == "add":
        acc = Accumulator(st)
        for it in items:
            full[var] = it
            acc.add(fn(full))
        return zero_of(body, full) if acc.kind is None else acc.result(None)
    if monoid == "min":
        out = float("inf")
        for it in items:
            full[var] = it
            out = _min_add(out, fn(full))
        return out
    raise ValueError(f"unknown monoid {monoid!r}")
