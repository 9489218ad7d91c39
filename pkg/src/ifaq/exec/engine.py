"""Layout-aware execution of physical plans."""

from __future__ import annotations

from typing import Any

from ..interp.database import Database
from ..interp.evaluator import (
    Accumulator, Compiler, EvalError, Evaluator, KeyNotFound, _MISSING, _restore, zero_of,
)
from ..interp.stats import CostStats, IterationPolicy
from ..ir.ast import Dom, Expr, FieldStatic, Let, Lookup, RecordLit, Sum, Var, children
from ..ir.values import DictV, Record, SetV, ring_add, sort_key
from .layouts import ARRAY_RELATION, HASH_DICT, PhysicalPlan, PlanError


class LayoutRealizationError(PlanError):
    pass


class _Cursor:
    __slots__ = ("src", "keys", "skeys", "pos", "last")

    def __init__(self):
        self.src = None
        self.pos = 0
        self.last = None

    def reset(self):
        self.pos = 0
        self.last = None


def _unsorted(d: DictV) -> DictV:
    """A dictionary that iterates in insertion order (hash layout)."""
    out = DictV({k: (_unsorted(v) if type(v) is DictV else v) for k, v in d.data.items()},
                relation=d.relation)
    out._keys = tuple(out.data)
    return out


class ExecCompiler(Compiler):
    def __init__(self, stats: CostStats, plan: PhysicalPlan, arrays: dict):
        super().__init__(stats)
        self.plan = plan
        self.arrays = arrays  # relation -> tuple of keys in layout order
        self.cursors: dict = {}  # id(Lookup) -> _Cursor
        self.flat: set = set()  # let-bound record variables held as separate slots

    # -- summation with array scans, merge drivers and record accumulation
    def c_Sum(self, e: Sum):
        plan = self.plan
        arr = None
        if isinstance(e.coll, Dom) and isinstance(e.coll.expr, Var) and e.coll.expr.name in self.arrays:
            arr = self.arrays[e.coll.expr.name]
        cells = [self.cursors.setdefault(i, _Cursor()) for i in plan.drivers.get(id(e), [])]
        coll = None if arr is not None else self.compile(e.coll)
        var = e.var
        st = self.st
        body_e = e.body
        rec = _record_body(body_e)
        if rec is not None:
            pre, names, fns = self._record_parts(rec)
        else:
            body = self.compile(body_e)

        def f(env):
            if arr is not None:
                items = arr
                st.tuplesScanned += len(items)
            else:
                c = coll(env)
                t = type(c)
                if t is SetV:
                    items = c.items
                elif t is DictV:
                    items = c.keys()
                else:
                    raise EvalError(f"cannot iterate over {t.__name__}")
                if c.relation is not None:
                    st.tuplesScanned += len(items)
            st.loopIterations += len(items)
            for cell in cells:
                cell.reset()
            saved = env.get(var, _MISSING)
            try:
                if rec is not None:
                    return self._fold_record(env, var, items, pre, names, fns, body_e)
                acc = Accumulator(st)
                for it in items:
                    env[var] = it
                    acc.add(body(env))
            finally:
                _restore(env, var, saved)
            if acc.kind is None:
                return zero_of(body_e, env)
            return acc.result(None)
        return f

    def _record_parts(self, rec):
        lets, lit = rec
        pre = [(v, self.compile(x)) for v, x in lets]
        order = sorted(range(len(lit.fields)), key=lambda i: lit.fields[i][0])
        names = tuple(lit.fields[i][0] for i in order)
        fns = [self.compile(lit.fields[i][1]) for i in order]
        return pre, names, fns

    def _fold_record(self, env, var, items, pre, names, fns, body_e):
        """Fieldwise in-place accumulation; counts exactly like the immutable fold."""
        st = self.st
        acc = None
        saved = [(v, env.get(v, _MISSING)) for v, _ in pre]
        try:
            for it in items:
                env[var] = it
                for v, fn in pre:
                    env[v] = fn(env)
                vals = [fn(env) for fn in fns]
                if acc is None:
                    acc = vals
                    continue
                for i, x in enumerate(vals):
                    a = acc[i]
                    if (type(a) is int or type(a) is float) and (type(x) is int or type(x) is float):
                        st.arithmeticOps += 1
                        acc[i] = a + x
                    else:
                        acc[i] = ring_add(a, x, st)
        finally:
            for v, s in saved:
                _restore(env, v, s)
        if acc is None:
            return zero_of(body_e, env)
        return Record._raw(names, tuple(acc))

    # -- lookups: unit multiplicities and sorted merge probes
    def c_Lookup(self, e: Lookup):
        plan = self.plan
        if id(e) in plan.unit_lookups:
            return lambda env: 1
        site = plan.merge_sites.get(id(e))
        if site is None:
            return super().c_Lookup(e)
        cell = self.cursors.setdefault(id(e), _Cursor())
        d = self.compile(e.dict)
        k = self.compile(e.key)
        default = self.compile(e.default) if e.default is not None else None
        st = self.st

        def f(env):
            dv = d(env)
            key = k(env)
            if cell.src is not dv:
                cell.src = dv
                cell.keys = dv.keys()
                cell.skeys = [sort_key(x) for x in cell.keys]
                cell.reset()
            sk = sort_key(key)
            if cell.last is not None and sk < cell.last:
                raise PlanError(f"merge cursor over {site.view} would move backward")
            cell.last = sk
            ks = cell.skeys
            pos = cell.pos
            n = len(ks)
            while pos < n and ks[pos] < sk:
                pos += 1
                st.mergeAdvances += 1
            cell.pos = pos
            if pos < n and ks[pos] == sk:
                return dv.data[cell.keys[pos]]
            if default is not None:
                return default(env)
            raise KeyNotFound(f"key {key!r} not found")
        return f

    # -- scalar replacement of let-bound record literals
    def c_Let(self, e: Let):
        if isinstance(e.value, RecordLit) and _only_static_uses(e.body, e.var):
            fields = [(e.var + "." + n, self.compile(x)) for n, x in e.value.fields]
            was = e.var in self.flat
            self.flat.add(e.var)
            body = self.compile(e.body)
            if not was:
                self.flat.discard(e.var)

            def f(env):
                saved = [(n, env.get(n, _MISSING)) for n, _ in fields]
                for n, fn in fields:
                    env[n] = fn(env)
                try:
                    return body(env)
                finally:
                    for n, s in saved:
                        _restore(env, n, s)
            return f
        if e.var in self.flat:
            self.flat.discard(e.var)
            try:
                return super().c_Let(e)
            finally:
                self.flat.add(e.var)
        return super().c_Let(e)

    def c_FieldStatic(self, e: FieldStatic):
        if isinstance(e.expr, Var) and e.expr.name in self.flat:
            slot = e.expr.name + "." + e.name
            return lambda env: env[slot]
        return super().c_FieldStatic(e)


def _record_body(e: Expr):
    """(lets, record literal) when a summation body is a let chain ending in a record."""
    lets = []
    while isinstance(e, Let):
        lets.append((e.var, e.value))
        e = e.body
    if isinstance(e, RecordLit) and e.fields:
        return lets, e
    return None


def _only_static_uses(e: Expr, name: str) -> bool:
    if isinstance(e, FieldStatic) and isinstance(e.expr, Var) and e.expr.name == name:
        return True
    if isinstance(e, Var):
        return e.name != name
    if isinstance(e, (Let, Sum)) and e.var == name:
        return False
    return all(_only_static_uses(c, name) for c in children(e))


class PlanEvaluator(Evaluator):
    def __init__(self, plan: PhysicalPlan, db: Database, policy: IterationPolicy | None = None):
        super().__init__(db, policy)
        self.plan = plan

    def initial_env(self, p):
        env = super().initial_env(p)
        for ix in p.indexes:
            lay = self.plan.layout(ix.name)
            if lay is not None and lay.kind == HASH_DICT:
                env[ix.name] = _unsorted(env[ix.name])
        return env

    def make_compiler(self, stats, p):
        arrays = {}
        for name, lay in self.plan.layouts.items():
            if lay.kind != ARRAY_RELATION:
                continue
            if name not in self.db:
                raise LayoutRealizationError(f"relation {name!r} missing from the database")
            if not self.db.unit_multiplicities(name):
                raise LayoutRealizationError(
                    f"relation {name!r} has multiplicities other than 1; cannot use an array")
            order = lay.order
            arrays[name] = tuple(sorted(self.db[name].data,
                                        key=lambda t: tuple(sort_key(t.get(a)) for a in order)))
        return ExecCompiler(stats, self.plan, arrays)


def execute(plan: PhysicalPlan, db: Database,
            limits: IterationPolicy | None = None) -> tuple[Any, CostStats]:
    return PlanEvaluator(plan, db, limits).run(plan.program)
