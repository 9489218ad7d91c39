import itertools
import random
from pathlib import Path

import pytest

from ifaq.aggopt import join_expr, join_spec_from_schema
from ifaq.apps import LRConfig, build_linear_regression_program
from ifaq.data import GenSpec, generate_retail
from ifaq.exec import (
    HASH_DICT, LayoutChoice, LayoutOptions, LayoutRealizationError, PhysicalPlan, PlanError,
    compile_program, execute, explain, run_compiled,
)
from ifaq.frontend import parse, pretty, pretty_program
from ifaq.interp import Database, DivisionByZero, IterationPolicy, evaluate
from ifaq.ir.values import to_json

from .conftest import TOY_ROWS, json_close

GOLDEN = Path(__file__).parent / "golden" / "explain"


def covar_src(query, *fields):
    return parse(f"let Q = {pretty(join_expr(query))};\n{{" + ", ".join(fields) + "}\n")


def all_options():
    for flags in itertools.product((True, False), repeat=4):
        yield LayoutOptions(*flags)


def test_sales_becomes_an_array_in_trie_order(schema, toy_db, lr_program):
    plan = compile_program(lr_program(), schema, toy_db, "all", trie=False).plan
    assert plan.layout("S").describe() == "ArrayRelation(s, i, u)"


def test_single_field_view_key_is_flattened(schema, toy_db, lr_program):
    c = compile_program(lr_program(), schema, toy_db, "all")
    assert c.plan.layout("W_I").single_field_record_removed
    assert "W_I(y_i.i ??" in pretty_program(c.program)


def test_view_probed_in_key_order_gets_a_merge_cursor(schema, toy_db, lr_program):
    plan = compile_program(lr_program(), schema, toy_db, "all").plan
    assert plan.layout("W_R").kind == "SortedDict"
    (site,) = plan.merge_sites.values()
    assert (site.view, site.attr) == ("W_R", "s")


def test_covar_plan_on_toy(schema, toy_db, query):
    p = covar_src(query, "cp = sum(x in dom(Q)) Q(x) * x.c * x.p", "cc = sum(x in dom(Q)) Q(x) * x.c * x.c")
    c = compile_program(p, schema, toy_db, "all")
    v, st = run_compiled(c, toy_db)
    assert to_json(v) == to_json(evaluate(p, toy_db)[0]) == {"cp": 150, "cc": 500}
    assert st.tuplesScanned == 5


def test_empty_relation_gives_identities(schema, query):
    db = Database.from_rows(schema, {"S": [], "R": TOY_ROWS["R"], "I": TOY_ROWS["I"]})
    p = covar_src(query, "cp = sum(x in dom(Q)) Q(x) * x.c * x.p", "n = sum(x in dom(Q)) Q(x)")
    v, _ = run_compiled(compile_program(p, schema, db, "all"), db)
    assert to_json(v) == {"cp": 0, "n": 0}


def test_bgd_plan_matches_the_interpreter(schema, toy_db, lr_program):
    p = lr_program()
    pol = IterationPolicy(max_iters=10)
    want = evaluate(p, toy_db, pol)[0]
    got = run_compiled(compile_program(p, schema, toy_db, "all"), toy_db, pol)[0]
    assert json_close(to_json(want), to_json(got), 1e-9)


def test_explain_trie_plan_golden(schema, toy_db, lr_program):
    plan = compile_program(lr_program(), schema, toy_db, "all").plan
    assert explain(plan) == (GOLDEN / "toy_trie.txt").read_text()


def test_explain_flat_plan_lists_one_scan_per_relation(schema, toy_db, lr_program):
    text = explain(compile_program(lr_program(), schema, toy_db, "all", trie=False).plan)
    assert text == (GOLDEN / "toy_flat.txt").read_text()
    for rel in ("S", "R", "I"):
        assert sum(line.strip().startswith(f"scan {rel} ") for line in text.splitlines()) == 1


def test_explain_empty_plan():
    assert explain(PhysicalPlan(parse("1"))).strip() == "no operators"


@pytest.mark.parametrize("seed", range(8))
def test_plan_agrees_with_interpreter_on_bags(schema, lr_program, seed):
    rng = random.Random(seed)
    rows = {
        "S": [(rng.randint(1, 3), rng.randint(1, 3), rng.randint(0, 5)) for _ in range(rng.randint(0, 15))],
        "R": [(s, rng.randint(1, 9)) for s in range(1, 4) for _ in range(rng.randint(0, 2))],
        "I": [(i, rng.randint(1, 9)) for i in range(1, 4) if rng.random() < 0.8],
    }
    db = Database.from_rows(schema, rows)
    p = lr_program(alpha=0.01)
    pol = IterationPolicy(max_iters=4)
    try:
        want = evaluate(p, db, pol)[0]
    except DivisionByZero:  # empty join: the step divides by its size
        with pytest.raises(DivisionByZero):
            run_compiled(compile_program(p, schema, db, "all"), db, pol)
        return
    for opts in all_options():
        got = run_compiled(compile_program(p, schema, db, "all", opts), db, pol)[0]
        assert json_close(to_json(want), to_json(got), 1e-12)


def test_layout_choices_change_costs_only():
    db = generate_retail(GenSpec(seed=4, sales=300, items=20, stores=8, cities=3))
    p = build_linear_regression_program(LRConfig(["i", "s", "c", "p"], "u", alpha=1e-6),
                                        join_spec_from_schema(db.schema))
    pol = IterationPolicy(max_iters=3)
    values, stats = set(), set()
    for opts in all_options():
        v, st = run_compiled(compile_program(p, db.schema, db, "all", opts), db, pol)
        values.add(repr(v))
        stats.add(repr(st.to_json()))
    assert len(values) == 1
    assert len(stats) > 1


def test_merge_cursor_only_moves_forward(schema):
    db = generate_retail(GenSpec(seed=9, sales=200, items=15, stores=12, cities=4))
    p = build_linear_regression_program(LRConfig(["i", "s", "c", "p"], "u"), join_spec_from_schema(db.schema))
    c = compile_program(p, db.schema, db, "all")
    _, st = run_compiled(c, db, IterationPolicy(max_iters=1))
    # one pass over the sorted view keys at most
    assert 0 < st.mergeAdvances <= len(db["R"])


def test_merge_cursor_rejects_backward_moves(schema, toy_db, lr_program):
    c = compile_program(lr_program(), schema, toy_db, "all")
    plan = c.plan
    plan.layouts["T_S"] = LayoutChoice(HASH_DICT)  # driver no longer sorted
    rows = {"S": list(reversed(TOY_ROWS["S"])), "R": TOY_ROWS["R"], "I": TOY_ROWS["I"]}
    db = Database.from_rows(schema, rows)
    with pytest.raises(PlanError, match="backward"):
        execute(plan, db, IterationPolicy(max_iters=1))


def test_array_layout_needs_unit_multiplicities(schema, toy_db, lr_program):
    plan = compile_program(lr_program(), schema, toy_db, "all", trie=False).plan
    bag = Database.from_rows(schema, {"S": TOY_ROWS["S"] * 2, "R": TOY_ROWS["R"], "I": TOY_ROWS["I"]})
    with pytest.raises(LayoutRealizationError):
        execute(plan, bag, IterationPolicy(max_iters=1))


def test_mutable_accumulation_keeps_canonical_order(schema, query):
    rng = random.Random(1)
    db = Database.from_rows(schema, {
        "S": [(rng.randint(1, 4), rng.randint(1, 4), rng.randint(0, 9)) for _ in range(20)],
        "R": [(s, s * 10) for s in range(1, 5)], "I": [(i, i) for i in range(1, 5)]})
    p = parse(f"let Q = {pretty(join_expr(query))};\nsum(x in dom(Q)) Q(x) * {{{{ x.s -> x.u * x.c }}}}")
    want = evaluate(p, db)[0]
    got = run_compiled(compile_program(p, schema, db, "all"), db)[0]
    assert repr(got) == repr(want)
    assert list(got.keys()) == sorted(got.keys())


def test_sorted_merge_probes_fewer_than_hash():
    db = generate_retail(GenSpec(seed=2, sales=2000, items=60, stores=40, cities=5))
    p = build_linear_regression_program(LRConfig(["i", "s", "c", "p"], "u"), join_spec_from_schema(db.schema))
    pol = IterationPolicy(max_iters=1)
    merged = run_compiled(compile_program(p, db.schema, db, "all"), db, pol)
    hashed = run_compiled(compile_program(p, db.schema, db, "all", LayoutOptions(sorted_views=False)), db, pol)
    assert merged[0] == hashed[0]
    assert merged[1].dictLookups < hashed[1].dictLookups


@pytest.mark.parametrize("rels", [["S", "R"], ["S", "I"]])
def test_partial_join_plans_agree_with_interpreter(rels):
    db = generate_retail(GenSpec(seed=6, sales=150, items=12, stores=6, cities=3))
    spec = join_spec_from_schema(db.schema, db.schema.join_tree.restrict(rels))
    feats = [f for f in ("i", "s", "c", "p") if f in spec.outputs]
    p = build_linear_regression_program(LRConfig(feats, "u", alpha=1e-4), spec)
    pol = IterationPolicy(max_iters=4)
    want = evaluate(p, db, pol)[0]
    for opts in all_options():
        got, st = run_compiled(compile_program(p, db.schema, db, "all", opts), db, pol)
        assert json_close(to_json(want), to_json(got), 1e-12)
        assert st.tuplesScanned == sum(len(db[r]) for r in rels)
