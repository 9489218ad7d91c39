import itertools
import json
import random
from pathlib import Path

import pytest

from ifaq.aggopt import join_spec_from_schema
from ifaq.apps import TreeConfig, node_program_source
from ifaq.frontend import parse, parse_expr, pretty, schema_from_json
from ifaq.data import retail_schema
from ifaq.interp import Database, IterationPolicy, eval_expr, evaluate
from ifaq.ir import Sum, expr_equal, program_equal, walk
from ifaq.ir.ast import size
from ifaq.ir.values import RuntimeFault
from ifaq.rewrite import (
    FAMILIES, HIGH_LEVEL_STAGES, NonTermination, PassContext, RewriteRule, factorize, fuse_loops,
    fuse_program, generic_opts, hoist_lets, hoist_loop_invariants, normalize, partial_eval,
    rewrite_expr, run_high_level_pipeline, schedule_loops, specialize_schema, static_memoize,
)
from ifaq.rewrite.engine import APPLICATION_FACTOR

from . import exprgen

GOLDEN = Path(__file__).parent / "golden" / "bgd"
STAGE_FILES = {"input": "00_input", "normalize": "01_normalize", "schedule": "02_schedule",
               "factorize": "03_factorize", "memoize": "04_memoize", "licm": "05_licm",
               "specialize": "06_specialize"}

SIZES = schema_from_json({
    "relations": [
        {"name": "Q", "attrs": ["i", "s", "c", "p", "u"], "cardinality": 1000},
        {"name": "A", "attrs": ["a"], "cardinality": 100},
        {"name": "B", "attrs": ["b"], "cardinality": 7},
    ],
    "featureSets": {"F": ["i", "s", "c", "p"]},
})


def golden_schema():
    return schema_from_json(json.loads((GOLDEN / "schema.json").read_text()))


def golden(stage):
    return parse((GOLDEN / f"{STAGE_FILES[stage]}.ifaq").read_text())


def same(e, src):
    return expr_equal(e, parse_expr(src))


# -- normalization

def test_normalize_pushes_product_into_sum():
    e = normalize(parse_expr("(sum(x in dom(Q)) Q(x) * (sum(f2 in F) theta(f2) * x1[f2])) * x1[f1]"))
    assert same(e, "sum(x in dom(Q)) sum(f2 in F) Q(x) * theta(f2) * x1[f2] * x1[f1]")


def test_normalize_distributes():
    assert same(normalize(parse_expr("a * (b + c)")), "a * b + a * c")


def test_normalize_fixpoint_is_idempotent():
    e = parse_expr("sum(x in D) a * x")
    assert normalize(e) == e


# -- loop scheduling

def test_schedule_puts_small_loop_outside():
    e = schedule_loops(parse_expr("sum(x in dom(Q)) sum(f2 in F) Q(x) * theta(f2) * x[f2]"), SIZES)
    assert same(e, "sum(f2 in F) sum(x in dom(Q)) Q(x) * theta(f2) * x[f2]")


def test_schedule_keeps_unknown_or_equal_sizes():
    e = parse_expr("sum(x in F) sum(y in G) x * y")
    assert schedule_loops(e, SIZES) == e
    e = parse_expr("sum(x in [[1, 2]]) sum(y in [[3, 4]]) x * y")
    assert schedule_loops(e, SIZES) == e


def _loop_sizes(e):
    sizes = {"F": 4, "dom(A)": 100, "dom(B)": 7}
    out = []
    while isinstance(e, Sum):
        out.append(sizes[pretty(e.coll)])
        e = e.body
    return out


def test_schedule_sorts_a_triple_nest():
    src = "sum(x in dom(A)) sum(f in F) sum(y in dom(B)) A(x) * B(y) * x.a * y.b"
    e = schedule_loops(parse_expr(src), SIZES)
    assert _loop_sizes(e) == [4, 7, 100]
    # exhaustive search: the chosen order minimizes the loop iterations of the nest
    def iterations(o):
        return o[0] + o[0] * o[1] + o[0] * o[1] * o[2]
    best = min(itertools.permutations([100, 4, 7]), key=iterations)
    assert list(best) == _loop_sizes(e)


def test_schedule_changes_cost_not_value(toy_db):
    src = "sum(x in dom(S)) sum(f in [[`i`, `s`]]) S(x) * x[f]"
    e = parse_expr(src)
    swapped = schedule_loops(e, toy_db.schema.with_cardinalities({"S": 1000}))
    assert swapped != e
    assert eval_expr(e, toy_db)[0] == eval_expr(swapped, toy_db)[0]


# -- factorization

def test_factorize_hoists_theta():
    e = factorize(parse_expr("sum(f2 in F) sum(x in dom(Q)) Q(x) * theta(f2) * x[f2] * x[f1]"))
    assert same(e, "sum(f2 in F) theta(f2) * (sum(x in dom(Q)) Q(x) * x[f2] * x[f1])")


def test_factorize_constant_out_of_sum():
    assert same(factorize(parse_expr("sum(x in D) c * x")), "c * (sum(x in D) x)")


def test_factorize_reverse_distributivity():
    assert same(factorize(parse_expr("a * b + a * c")), "a * (b + c)")


# -- static memoization

def test_memoize_builds_the_covariance_dictionary():
    sch = golden_schema()
    q, _ = run_high_level_pipeline(golden("input"), sch, ("normalize", "schedule", "factorize", "memoize"))
    assert program_equal(q, golden("memoize"))


def test_memoize_needs_static_binders():
    e = parse_expr("lambda(f in F) theta(f) * 2")
    assert static_memoize(e, "theta", {}, SIZES) == e


def test_memoize_two_sums_then_shared_by_cse():
    src = """theta <- lambda(f in F) 0;
while (true) {
  theta <- lambda(f1 in F) theta(f1)
    - (sum(f2 in F) theta(f2) * (sum(x in dom(Q)) Q(x) * x[f2] * x[f1]))
    - (sum(f3 in F) theta(f3) * (sum(y in dom(Q)) Q(y) * y[f3] * y[f1]))
}
theta"""
    p = parse(src)
    q, trace = run_high_level_pipeline(p, SIZES, ("normalize", "schedule", "factorize", "memoize", "licm", "generic"))
    assert len(trace.stage("licm").prelude) == 2
    assert len(q.prelude) == 1
    db_rows = {"Q": [(1, 2, 3, 4, 5), (2, 1, 0, 1, 3)]}
    db = Database.from_rows(SIZES, {**db_rows, "A": [], "B": []})
    pol = IterationPolicy(max_iters=2)
    assert evaluate(p, db, pol)[0] == evaluate(q, db, pol)[0]


# -- loop-invariant code motion

def test_licm_moves_memo_out_of_the_loop():
    sch = golden_schema()
    q, _ = run_high_level_pipeline(golden("input"), sch,
                                   ("normalize", "schedule", "factorize", "memoize", "licm"))
    assert program_equal(q, golden("licm"))


def test_licm_keeps_state_dependent_lets():
    p = parse("theta <- 1; while (true) { theta <- let y = theta * 2 in y + 1 } theta")
    assert program_equal(hoist_loop_invariants(p), p)


def test_licm_hoists_let_out_of_sum():
    assert same(hoist_lets(parse_expr("sum(x in D) (let y = c in x * y)")),
                "let y = c in sum(x in D) x * y")


# -- partial evaluation

def test_partial_eval_unrolls_literal_set():
    assert same(partial_eval(parse_expr("sum(f in [[`i`, `s`]]) G(f)")), "G(`i`) + G(`s`)")


def test_partial_eval_merges_dictionaries():
    assert same(partial_eval(parse_expr("{{`a` -> 1}} + {{`a` -> 2}}")), "{{`a` -> 3}}")
    assert same(partial_eval(parse_expr("{{`a` -> 1}} + {{`b` -> 2}}")), "{{`a` -> 1, `b` -> 2}}")


# -- schema specialization

def test_specialization_turns_theta_into_a_record():
    sch = golden_schema()
    q, _ = run_high_level_pipeline(golden("input"), sch)
    assert program_equal(q, golden("specialize"))
    steps = {pretty(n) for n in walk(q.step)}
    assert {"theta.i", "theta.s", "theta.c", "theta.p"} <= steps


def test_specialization_of_field_lambda():
    assert same(specialize_schema(parse_expr("lambda(f in [[`i`, `s`]]) G(x[f])")),
                "{i = G(x.i), s = G(x.s)}")


def test_specialization_without_field_dictionaries_is_a_no_op():
    e = parse_expr("sum(x in D) x * 2")
    assert specialize_schema(e) == e


# -- fusion

def test_fuse_three_scans_into_one():
    p = parse("let a = sum(x in dom(I)) I(x) * x.p;\nlet b = sum(y in dom(I)) I(y);\n"
              "let c = sum(z in dom(I)) I(z) * z.i;\n{a = a, b = b, c = c}")
    q = fuse_program(p, PassContext())
    assert len(q.prelude) == 1
    fused = q.prelude[0][1]
    assert isinstance(fused, Sum) and len(fused.body.fields) == 3
    db = Database.from_rows(retail_schema(), {"S": [], "R": [], "I": [(1, 5), (2, 7)]})
    assert evaluate(p, db)[0] == evaluate(q, db)[0]


def test_fuse_single_sum_unchanged():
    e = parse_expr("sum(x in dom(I)) I(x)")
    assert fuse_loops(e) == e


# -- generic optimizations

def test_generic_inlines_trivial_let():
    assert same(generic_opts(parse_expr("let x = e in x")), "e")


def test_generic_drops_dead_let():
    assert same(generic_opts(parse_expr("let x = e in 5")), "5")


def test_generic_shares_common_subexpressions():
    e = generic_opts(parse_expr("let x = sum(z in D) z in let y = sum(w in D) w in x * y + y * x"))
    assert same(e, "let x = sum(z in D) z in x * x + x * x")


# -- whole pipeline

@pytest.mark.parametrize("stage", [s for s in STAGE_FILES if s != "input"])
def test_golden_stage(stage):
    _, trace = run_high_level_pipeline(golden("input"), golden_schema())
    assert program_equal(trace.stage(stage), golden(stage))


def test_golden_stage_detects_a_changed_program():
    _, trace = run_high_level_pipeline(golden("input"), golden_schema())
    text = (GOLDEN / "05_licm.ifaq").read_text()
    wrong = text.replace("theta(g) - sum", "theta(g) + sum")
    assert wrong != text
    assert not program_equal(trace.stage("licm"), parse(wrong))


def test_pipeline_without_loops_only_cleans_up():
    p = parse("let a = 1; let b = a + 2; b * 3")
    q, trace = run_high_level_pipeline(p)
    assert evaluate(p)[0] == evaluate(q)[0] == 9
    assert {e.pass_name for e in trace.entries} <= {"partialEval", "generic", "alphaRename", "licm"}


def test_cart_aggregates_are_not_hoisted(schema, toy_db):
    q = join_spec_from_schema(schema)
    src = node_program_source(TreeConfig(["c", "p"], "u"), q, [("c", "<=", 10)],
                              {"c": [10, 20], "p": [5]})
    p = parse(src)
    out, trace = run_high_level_pipeline(p, schema)
    passes = {e.pass_name for e in trace.entries}
    assert "memoize" not in passes and "licm" not in passes
    n_sums = sum(isinstance(n, Sum) and pretty(n.coll) == "dom(Q)" for n in walk(out.result))
    assert n_sums == 3 + 2 * 2 * 3 + 1 * 2 * 3
    assert evaluate(p, toy_db)[0] == evaluate(out, toy_db)[0]


def test_trace_replay_reproduces_the_result():
    p = golden("input")
    q, trace = run_high_level_pipeline(p, golden_schema())
    assert program_equal(trace.replay(p), q)
    assert [n for n, _ in trace.stages] == ["input", *HIGH_LEVEL_STAGES]


def test_trace_jsonl_fields():
    _, trace = run_high_level_pipeline(golden("input"), golden_schema())
    lines = trace.to_jsonl().splitlines()
    assert lines
    for ln in lines:
        assert set(json.loads(ln)) == {"pass", "rule", "path", "before", "after"}


def test_empty_program_has_an_empty_trace():
    _, trace = run_high_level_pipeline(parse("1"))
    assert trace.entries == []


# -- termination

@pytest.mark.parametrize("family", exprgen.FAMILY_NAMES[:-1])
def test_rule_applications_are_linearly_bounded(family):
    rng = random.Random(11)
    for _ in range(100):
        db = exprgen.random_db(rng)
        e = parse_expr(exprgen.template(family, exprgen.ExprGen(rng, rng.random() < 0.5)))
        ctx = PassContext(schema=db.schema.with_cardinalities(db.cardinalities()))
        rewrite_expr(e, FAMILIES[family], ctx)
        assert ctx.applications <= APPLICATION_FACTOR * size(e)


def test_cycling_rules_are_stopped():
    flip = RewriteRule("flip", "generic", lambda e, ctx: parse_expr("b + a") if pretty(e) == "a + b"
                       else (parse_expr("a + b") if pretty(e) == "b + a" else None))
    with pytest.raises(NonTermination):
        rewrite_expr(parse_expr("a + b"), [flip])


@pytest.mark.parametrize("family", exprgen.FAMILY_NAMES)
def test_family_soundness_sample(family):
    rng = random.Random(2024)
    checked = 0
    while checked < 60:
        db = exprgen.random_db(rng)
        real = rng.random() < 0.5
        e = parse_expr(exprgen.template(family, exprgen.ExprGen(rng, real)))
        try:
            before = eval_expr(e, db, exprgen.ENV)[0]
        except RuntimeFault:
            continue
        after = eval_expr(exprgen.apply_family(family, e, db), db, exprgen.ENV)[0]
        assert exprgen.close(exprgen.normalize_value(before), exprgen.normalize_value(after),
                             1e-12 if real else 0.0), pretty(e)
        checked += 1
