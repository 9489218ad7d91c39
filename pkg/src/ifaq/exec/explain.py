"""Human-readable plan dumps."""

from __future__ import annotations

from ..frontend.printer import pretty
from ..ir.ast import Dom, Expr, Let, Lookup, Sum, Var, children
from .layouts import PhysicalPlan


def _coll_desc(e: Sum, plan: PhysicalPlan, levels: dict) -> str:
    c = e.coll
    if isinstance(c, Dom) and isinstance(c.expr, Var):
        name = c.expr.name
        lay = plan.layout(name)
        if lay is not None:
            return f"{name} {lay.describe()}" + (" level 1" if lay.kind in ("SortedTrie",)
                                                  or (lay.kind == "HashDict" and lay.order) else "")
        if name in levels:
            base, lvl = levels[name]
            return f"{name} {plan.layout(base).describe()} level {lvl}"
        return name
    return pretty(c)


def _walk(e: Expr, plan: PhysicalPlan, depth: int, levels: dict, out: list) -> None:
    pad = "  " * depth
    if isinstance(e, Sum):
        out.append(f"{pad}scan {_coll_desc(e, plan, levels)} as {e.var}; accumulate={plan.accumulation}")
        for lid in plan.drivers.get(id(e), []):
            site = plan.merge_sites[lid]
            out.append(f"{pad}  merge cursor on {site.view} by {site.driver_var}.{site.attr}")
        _walk(e.body, plan, depth + 1, levels, out)
        return
    if isinstance(e, Let):
        v = e.value
        if isinstance(v, Lookup) and isinstance(v.dict, Var):
            src = v.dict.name
            if src in levels or (plan.layout(src) and plan.layout(src).order
                                 and plan.layout(src).kind in ("SortedTrie", "HashDict")):
                base, lvl = levels.get(src, (src, 1))
                levels = dict(levels)
                levels[e.var] = (base, lvl + 1)
            elif id(v) in plan.merge_sites:
                out.append(f"{pad}probe {src} by merge cursor")
            else:
                lay = plan.layout(src)
                out.append(f"{pad}probe {src} {lay.describe() if lay else ''}".rstrip())
        else:
            _walk(v, plan, depth, levels, out)
        _walk(e.body, plan, depth, levels, out)
        return
    for c in children(e):
        _walk(c, plan, depth, levels, out)


def explain(plan: PhysicalPlan) -> str:
    p = plan.program
    ops: list = []
    sections = [(f"let {v}", e) for v, e in p.prelude]
    if p.has_loop:
        sections += [("loop init", p.init), ("loop step", p.step)]
    sections.append(("result", p.result))
    for title, e in sections:
        body: list = []
        _walk(e, plan, 2, {}, body)
        if body:
            ops.append(f"  {title}:")
            ops += body
    if not ops:
        return "no operators\n"
    lines = ["layouts:"]
    for name in sorted(plan.layouts):
        lines.append(f"  {name}: {plan.layouts[name].describe()}")
    lines.append("operators:")
    lines += ops
    return "\n".join(lines) + "\n"
