"""Staged compilation: rewriting, aggregate optimization and physical planning."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..aggopt.driver import AggOptResult, optimize_aggregates
from ..frontend.schema import Schema
from ..frontend.typecheck import typecheck
from ..interp.database import Database
from ..interp.evaluator import evaluate
from ..interp.stats import CostStats, IterationPolicy
from ..ir.ast import Program
from ..rewrite.engine import RewriteTrace
from ..rewrite.passes import run_high_level_pipeline
from .engine import execute
from .layouts import LayoutOptions, PhysicalPlan, choose_layouts

PASS_SETS = ("none", "highlevel", "agg", "all")


@dataclass
class Compiled:
    source: Program
    program: Program
    passes: str
    trace: RewriteTrace | None = None
    agg: AggOptResult | None = None
    plan: PhysicalPlan | None = None
    notes: list = field(default_factory=list)


def compile_program(p: Program, schema: Schema | None, db: Database | None = None,
                    passes: str = "all", layout_options: LayoutOptions | None = None,
                    trie: bool = True) -> Compiled:
    if passes not in PASS_SETS:
        raise ValueError(f"unknown pass set {passes!r}; expected one of {', '.join(PASS_SETS)}")
    out = Compiled(p, p, passes)
    if passes == "none":
        return out
    if db is not None and schema is not None:
        schema = db.schema_with_cardinalities() if db.schema is not None else \
            schema.with_cardinalities(db.cardinalities())
    q, trace = run_high_level_pipeline(p, schema)
    out.program, out.trace = q, trace
    if passes == "highlevel":
        return out
    typecheck(q, schema)
    units = tuple(n for n in db.names() if db.unit_multiplicities(n)) if db is not None else ()
    agg = optimize_aggregates(q, schema, trie=trie, unit_relations=units)
    out.agg = agg
    out.program = agg.program
    out.notes += agg.diagnostics
    if passes == "agg":
        return out
    out.plan = choose_layouts(agg.program, schema, db if db is not None else Database(),
                              layout_options)
    out.program = out.plan.program
    return out


def run_compiled(c: Compiled, db: Database, policy: IterationPolicy | None = None) -> tuple[Any, CostStats]:
    if c.plan is not None:
        return execute(c.plan, db, policy)
    return evaluate(c.program, db, policy)


def run_program(p: Program, schema: Schema | None, db: Database, passes: str = "all",
                policy: IterationPolicy | None = None,
                layout_options: LayoutOptions | None = None) -> tuple[Any, CostStats, Compiled]:
    c = compile_program(p, schema, db, passes, layout_options)
    v, st = run_compiled(c, db, policy)
    return v, st, c
