"""Rule application machinery and the replayable rewrite trace."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from ..frontend.parser import parse, parse_expr
from ..frontend.printer import pretty, pretty_program
from ..frontend.schema import Schema
from ..ir.ast import Expr, Program, children, map_children, size
from ..ir.ops import program_equal


class RewriteError(Exception):
    pass


class NonTermination(RewriteError):
    pass


@dataclass(frozen=True)
class RewriteRule:
    name: str
    family: str
    fn: Callable  # (expr, ctx) -> Expr | None


@dataclass
class TraceEntry:
    pass_name: str
    rule: str
    path: str
    before: str
    after: str

    def to_json(self) -> dict:
        return {"pass": self.pass_name, "rule": self.rule, "path": self.path,
                "before": self.before, "after": self.after}


PROGRAM_PATH = "program"


@dataclass
class RewriteTrace:
    entries: list = field(default_factory=list)
    stages: list = field(default_factory=list)  # (stage name, Program)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_json()) + "\n" for e in self.entries)

    def stage(self, name: str) -> Program:
        for n, p in self.stages:
            if n == name:
                return p
        raise KeyError(name)

    def replay(self, start: Program) -> Program:
        """Re-apply every recorded step to ``start``; checks each precondition."""
        p = start
        for i, e in enumerate(self.entries):
            if e.path == PROGRAM_PATH:
                if pretty_program(p) != e.before:
                    raise RewriteError(f"trace entry {i} ({e.rule}) does not match the program")
                p = parse(e.after)
                continue
            slot, *idx = e.path.split("/")
            target = _get_slot(p, slot)
            sub = _get_path(target, [int(k) for k in idx])
            if pretty(sub) != e.before:
                raise RewriteError(f"trace entry {i} ({e.rule}) does not match at {e.path}")
            new = _replace_path(target, [int(k) for k in idx], parse_expr(e.after))
            p = _set_slot(p, slot, new)
        return p


def _get_slot(p: Program, slot: str) -> Expr:
    if slot.startswith("prelude:"):
        return p.prelude[int(slot.split(":")[1])][1]
    return getattr(p, slot)


def _set_slot(p: Program, slot: str, e: Expr) -> Program:
    if slot.startswith("prelude:"):
        i = int(slot.split(":")[1])
        pre = list(p.prelude)
        pre[i] = (pre[i][0], e)
        return replace(p, prelude=tuple(pre))
    return replace(p, **{slot: e})


def _get_path(e: Expr, path: list[int]) -> Expr:
    for i in path:
        e = children(e)[i]
    return e


def _replace_path(e: Expr, path: list[int], new: Expr) -> Expr:
    if not path:
        return new
    target = path[0]
    counter = iter(range(10 ** 9))

    def fn(c):
        return _replace_path(c, path[1:], new) if next(counter) == target else c
    return map_children(e, fn)


def program_slots(p: Program):
    for i, (_, e) in enumerate(p.prelude):
        yield f"prelude:{i}", e
    if p.has_loop:
        yield "init", p.init
        yield "cond", p.cond
        yield "step", p.step
    yield "result", p.result


@dataclass
class PassContext:
    schema: Optional[Schema] = None
    trace: Optional[RewriteTrace] = None
    pass_name: str = ""
    bindings: dict = field(default_factory=dict)  # prelude var -> Expr
    loop_var: Optional[str] = None
    applications: int = 0
    limit: int = 0

    def record(self, rule: str, path: tuple, before: Expr, after: Expr) -> None:
        self.applications += 1
        if self.limit and self.applications > self.limit:
            raise NonTermination(f"{self.pass_name}: more than {self.limit} rule applications")
        if self.trace is not None:
            self.trace.entries.append(TraceEntry(self.pass_name, rule, "/".join(map(str, path)),
                                                 pretty(before), pretty(after)))

    def record_program(self, rule: str, before: Program, after: Program) -> None:
        if self.trace is not None:
            self.trace.entries.append(TraceEntry(self.pass_name, rule, PROGRAM_PATH,
                                                 pretty_program(before), pretty_program(after)))


# bound on rule applications per unit of expression size
APPLICATION_FACTOR = 64


def fixpoint(e: Expr, rules: list[RewriteRule], ctx: PassContext, path: tuple = (),
             done: dict | None = None) -> Expr:
    """Bottom-up rewriting to a fixpoint of ``rules``.

    ``done`` maps ids of nodes already known to be fixpoints during this
    invocation (the node is kept alive as the value, so ids stay unique);
    rebuilt parents reuse unchanged children, which are then skipped.
    """
    if done is None:
        done = {}
    if id(e) in done:
        return e
    counter = iter(range(10 ** 9))
    e = map_children(e, lambda c: fixpoint(c, rules, ctx, path + (next(counter),), done))
    while True:
        for r in rules:
            out = r.fn(e, ctx)
            if out is not None and out is not e and out != e:
                ctx.record(r.name, path, e, out)
                e = fixpoint(out, rules, ctx, path, done)
                break
        else:
            done[id(e)] = e
            return e


def rewrite_expr(e: Expr, rules: list[RewriteRule], ctx: PassContext | None = None,
                 slot: str = "result") -> Expr:
    ctx = ctx or PassContext()
    if not ctx.limit:
        ctx.limit = APPLICATION_FACTOR * max(size(e), 1)
    return fixpoint(e, rules, ctx, (slot,))


def rewrite_program(p: Program, rules: list[RewriteRule], ctx: PassContext) -> Program:
    total = sum(size(x) for x in p.exprs())
    ctx.limit = ctx.applications + APPLICATION_FACTOR * max(total, 1)
    bindings = {}
    new_pre = []
    for i, (v, e) in enumerate(p.prelude):
        ctx.bindings = dict(bindings)
        ne = fixpoint(e, rules, ctx, (f"prelude:{i}",))
        new_pre.append((v, ne))
        bindings[v] = ne
    ctx.bindings = bindings
    ctx.loop_var = p.loop_var
    kw = {}
    if p.has_loop:
        for slot in ("init", "cond", "step"):
            kw[slot] = fixpoint(getattr(p, slot), rules, ctx, (slot,))
    kw["result"] = fixpoint(p.result, rules, ctx, ("result",))
    return replace(p, prelude=tuple(new_pre), **kw)


def same_program(a: Program, b: Program) -> bool:
    return a == b or program_equal(a, b) and pretty_program(a) == pretty_program(b)
