"""Abstract syntax of the core language (shared by both dialects)."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Optional


@dataclass(frozen=True)
class Loc:
    line: int
    col: int

    def __str__(self):
        return f"{self.line}:{self.col}"


def _loc():
    return field(default=None, compare=False, repr=False, hash=False)


class Expr:
    """Base class of all expression nodes. Nodes are immutable."""

    __slots__ = ()

    def with_loc(self, loc: Optional[Loc]) -> "Expr":
        if loc is None or getattr(self, "loc", None) is not None:
            return self
        return replace(self, loc=loc)


UNOPS = ("sqrt", "abs", "ln")
CMP_OPS = ("==", "<", "<=")
BOOL_OPS = ("&&", "||")
BINOPS = CMP_OPS + BOOL_OPS + ("min", "/")


@dataclass(frozen=True)
class Const(Expr):
    value: Any  # int | float | bool | str | FieldV
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Var(Expr):
    name: str
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Neg(Expr):
    expr: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class UnOp(Expr):
    op: str
    expr: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Sum(Expr):
    """Fold of ``body`` over the elements of ``coll`` under ring addition."""

    var: str
    coll: Expr
    body: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class DictBuild(Expr):
    """``lambda(var in coll) body``: dictionary over the key set ``coll``."""

    var: str
    coll: Expr
    body: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class DictLit(Expr):
    items: tuple  # tuple[tuple[Expr, Expr], ...]
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class SetLit(Expr):
    items: tuple  # tuple[Expr, ...]
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Dom(Expr):
    expr: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Lookup(Expr):
    """``dict(key)``. With ``default`` set, a missing key yields ``default``.

    Only the aggregate optimizer emits defaults (left-outer probes into views).
    """

    dict: Expr
    key: Expr
    default: Optional[Expr] = None
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class RecordLit(Expr):
    fields: tuple  # tuple[tuple[str, Expr], ...]
    loc: Optional[Loc] = _loc()

    def __post_init__(self):
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate record fields: {names}")


@dataclass(frozen=True)
class VariantLit(Expr):
    name: str
    expr: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class FieldStatic(Expr):
    expr: Expr
    name: str
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class FieldDyn(Expr):
    expr: Expr
    field: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class Let(Expr):
    var: str
    value: Expr
    body: Expr
    loc: Optional[Loc] = _loc()


@dataclass(frozen=True)
class If(Expr):
    cond: Expr
    then: Expr
    orelse: Expr
    loc: Optional[Loc] = _loc()


BINDERS = (Sum, DictBuild, Let)


@dataclass(frozen=True)
class IndexDecl:
    """A trie index over a base relation, built at load time."""

    name: str
    relation: str
    attrs: tuple


@dataclass(frozen=True)
class Program:
    """``bindings; x <- init; while (cond) { x <- step }; result``.

    ``loop_var`` is None for a program without a loop (``init``, ``cond``
    and ``step`` are then None as well).
    """

    prelude: tuple = ()  # tuple[tuple[str, Expr], ...]
    loop_var: Optional[str] = None
    init: Optional[Expr] = None
    cond: Optional[Expr] = None
    step: Optional[Expr] = None
    result: Expr = None
    indexes: tuple = ()  # tuple[IndexDecl, ...]

    @property
    def has_loop(self) -> bool:
        return self.loop_var is not None

    def exprs(self):
        """All top-level expressions in evaluation order."""
        out = [e for _, e in self.prelude]
        if self.has_loop:
            out += [self.init, self.cond, self.step]
        out.append(self.result)
        return out

    def map_exprs(self, fn: Callable[[Expr], Expr]) -> "Program":
        return replace(
            self,
            prelude=tuple((v, fn(e)) for v, e in self.prelude),
            init=fn(self.init) if self.init is not None else None,
            cond=fn(self.cond) if self.cond is not None else None,
            step=fn(self.step) if self.step is not None else None,
            result=fn(self.result),
        )


def expr_program(e: Expr) -> Program:
    return Program(result=e)


# --------------------------------------------------------------------------
# generic traversal

_CHILD_FIELDS: dict[type, tuple] = {}


def _child_fields(cls):
    cf = _CHILD_FIELDS.get(cls)
    if cf is None:
        cf = tuple(f.name for f in fields(cls) if f.name != "loc")
        _CHILD_FIELDS[cls] = cf
    return cf


def children(e: Expr) -> list[Expr]:
    """Immediate sub-expressions, left to right."""
    t = type(e)
    if t is Const or t is Var:
        return []
    if t is DictLit:
        return [x for kv in e.items for x in kv]
    if t is SetLit:
        return list(e.items)
    if t is RecordLit:
        return [x for _, x in e.fields]
    if t is Lookup:
        return [e.dict, e.key] + ([e.default] if e.default is not None else [])
    out = []
    for name in _child_fields(t):
        v = getattr(e, name)
        if isinstance(v, Expr):
            out.append(v)
    return out


def map_children(e: Expr, fn: Callable[[Expr], Expr]) -> Expr:
    """Apply ``fn`` to each child; returns ``e`` itself when nothing changed."""
    t = type(e)
    if t is Const or t is Var:
        return e
    if t is DictLit:
        items = tuple((fn(k), fn(v)) for k, v in e.items)
        if all(a is c and b is d for (a, b), (c, d) in zip(items, e.items)):
            return e
        return DictLit(items, loc=e.loc)
    if t is SetLit:
        items = tuple(fn(x) for x in e.items)
        if all(a is b for a, b in zip(items, e.items)):
            return e
        return SetLit(items, loc=e.loc)
    if t is RecordLit:
        flds = tuple((n, fn(x)) for n, x in e.fields)
        if all(a[1] is b[1] for a, b in zip(flds, e.fields)):
            return e
        return RecordLit(flds, loc=e.loc)
    changes = {}
    for name in _child_fields(t):
        v = getattr(e, name)
        if isinstance(v, Expr):
            nv = fn(v)
            if nv is not v:
                changes[name] = nv
    return replace(e, **changes) if changes else e


def walk(e: Expr):
    """Pre-order iterator over all nodes."""
    stack = [e]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(children(n)))


def size(e: Expr) -> int:
    n = e.__dict__.get("_size")  # cached: nodes are immutable
    if n is None:
        n = 1 + sum(size(c) for c in children(e))
        object.__setattr__(e, "_size", n)
    return n


# --------------------------------------------------------------------------
# n-ary views of + and *

def flatten_add(e: Expr) -> list[Expr]:
    if type(e) is Add:
        return flatten_add(e.left) + flatten_add(e.right)
    return [e]


def flatten_mul(e: Expr) -> list[Expr]:
    if type(e) is Mul:
        return flatten_mul(e.left) + flatten_mul(e.right)
    return [e]


def build_add(terms: list[Expr]) -> Expr:
    if not terms:
        return Const(0)
    out = terms[0]
    for t in terms[1:]:
        out = Add(out, t)
    return out


def build_mul(factors: list[Expr]) -> Expr:
    if not factors:
        return Const(1)
    out = factors[0]
    for f in factors[1:]:
        out = Mul(out, f)
    return out


def lets(bindings: list[tuple[str, Expr]], body: Expr) -> Expr:
    for v, e in reversed(bindings):
        body = Let(v, e, body)
    return body


def unlet(e: Expr) -> tuple[list[tuple[str, Expr]], Expr]:
    """Split a chain of lets into its bindings and innermost body."""
    binds = []
    while type(e) is Let:
        binds.append((e.var, e.value))
        e = e.body
    return binds, e
