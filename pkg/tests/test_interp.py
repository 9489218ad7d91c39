import itertools

import pytest

from ifaq.aggopt import join_expr
from ifaq.data import retail_schema
from ifaq.frontend import parse, parse_expr, pretty
from ifaq.interp import (
    COUNTERS, Accumulator, CostStats, Database, DivisionByZero, IterationPolicy, KeyNotFound,
    UnboundVariable, eval_expr, eval_sum, evaluate,
)
from ifaq.ir import DictV, FieldV, Record, SetV
from ifaq.ir.values import RuntimeFault, to_json
from ifaq.rewrite import run_high_level_pipeline


def test_multiplicity_sum():
    d = DictV({Record({"r": 1}): 2, Record({"r": 2}): 3})
    v, _ = eval_expr(parse_expr("sum(x in dom(D)) D(x)"), env={"D": d})
    assert v == 5


def test_covar_entry_on_toy_join(toy_db, query):
    src = f"let Q = {pretty(join_expr(query))};\nsum(x in dom(Q)) Q(x) * x.c * x.p"
    v, _ = evaluate(parse(src), toy_db)
    assert v == 10 * 5 + 20 * 5 == 150


def test_empty_sum_is_additive_identity():
    empty = DictV({})
    assert eval_expr(parse_expr("sum(x in dom(D)) D(x) * 2.5"), env={"D": empty})[0] == 0
    v, _ = eval_expr(parse_expr("sum(x in dom(D)) {{x -> 1}}"), env={"D": empty})
    assert v == DictV({})


def test_eval_sum_dictionary_union():
    v = eval_sum("f", SetV([FieldV("i"), FieldV("s")]), parse_expr("{{f -> 1}}"))
    assert v == DictV({FieldV("i"): 1, FieldV("s"): 1})


def test_eval_sum_grouped_view(toy_db):
    body = parse_expr("R(x) * {{ {s = x.s} -> x.c }}")
    v = eval_sum("x", toy_db["R"].dom(), body, db=toy_db)
    assert v == DictV({Record({"s": 1}): 10, Record({"s": 2}): 20})


def test_eval_sum_min_monoid():
    assert eval_sum("x", SetV([3, 1, 2]), parse_expr("x"), monoid="min") == 1


def test_eval_sum_rejects_mixed_addends():
    with pytest.raises(RuntimeFault):
        eval_sum("x", SetV([1, 2]), parse_expr('if (x == 1) then 1 else {{1 -> 2}}'))


def test_counters_single_scan(toy_db):
    _, st = evaluate(parse("sum(x in dom(S)) S(x)"), toy_db)
    assert st.tuplesScanned == 2
    assert st.loopIterations == 2
    assert st.dictLookups == 2
    assert st.arithmeticOps == 1


def test_counters_nested_scan(toy_db):
    src = "sum(x in dom(S)) sum(y in dom(R)) if (x.s == y.s) then S(x) * R(y) else 0"
    v, st = evaluate(parse(src), toy_db)
    assert v == 2
    # the outer relation once, the inner one per outer tuple
    assert st.tuplesScanned == 2 + 2 * 2


def test_stats_json_has_the_counter_keys(toy_db):
    _, st = evaluate(parse("sum(x in dom(S)) S(x)"), toy_db)
    js = st.to_json()
    for k in ("tuplesScanned", "arithmeticOps", "dictLookups", "dictInserts", "loopIterations"):
        assert k in js
    assert set(COUNTERS) <= set(js)


def test_iteration_policy_bounds_the_loop():
    p = parse("x <- 0; while (x < 100) { x <- x + 1 } x")
    assert evaluate(p, policy=IterationPolicy(max_iters=7))[0] == 7
    assert evaluate(p, policy=IterationPolicy(max_iters=1000))[0] == 100


def test_epsilon_stops_on_small_delta():
    p = parse("x <- 1.0; while (true) { x <- x / 2 } x")
    v, st = evaluate(p, policy=IterationPolicy(max_iters=1000, epsilon=1e-3))
    assert st.whileIterations == 10
    assert v == 2.0 ** -10


def test_loop_counters_are_separated(toy_db, lr_program):
    _, st = evaluate(lr_program(), toy_db, IterationPolicy(max_iters=3))
    assert st.whileIterations == 3
    assert st.loop.tuplesScanned > 0
    assert st.loop.tuplesScanned <= st.tuplesScanned


def test_lookup_default_and_errors(toy_db):
    assert evaluate(parse("R({s = 9, c = 10} ?? 0)"), toy_db)[0] == 0
    with pytest.raises(KeyNotFound):
        evaluate(parse("R({s = 9, c = 10})"), toy_db)
    with pytest.raises(DivisionByZero):
        evaluate(parse("1 / 0"))
    with pytest.raises(UnboundVariable):
        evaluate(parse("zz + 1"))


def test_determinism(toy_db, lr_program):
    p = lr_program()
    a = evaluate(p, toy_db, IterationPolicy(max_iters=5))
    b = evaluate(p, toy_db, IterationPolicy(max_iters=5))
    assert a[0] == b[0]
    assert a[1].to_json() == b[1].to_json()


def test_fold_is_order_independent():
    addends = [DictV({1: 2}), DictV({2: 3, 1: -2}), DictV({3: 1}), DictV({2: 4})]
    results = set()
    for perm in itertools.permutations(addends):
        acc = Accumulator(CostStats())
        for a in perm:
            acc.add(a)
        results.add(repr(acc.result(DictV({}))))
    assert len(results) == 1


def test_insertion_order_does_not_matter(schema):
    rows = [(1, 1, 3), (2, 1, 4), (1, 2, 5), (3, 2, 1)]
    src = "sum(x in dom(S)) S(x) * {{ {s = x.s} -> x.u * x.i }}"
    values = {repr(evaluate(parse(src), Database.from_rows(schema, {"S": perm, "R": [], "I": []}))[0])
              for perm in itertools.permutations(rows)}
    assert len(values) == 1


def test_dynamic_and_static_programs_agree(toy_db):
    # integer data and no step size: every value stays an exact integer
    src = """let F = [[`i`, `s`, `u`]];
theta <- lambda(f in F) 1;
while (true) {
  theta <- lambda(f1 in F) theta(f1) - sum(x in dom(S)) S(x) * (sum(f2 in F) theta(f2) * x[f2]) * x[f1]
}
theta
"""
    dyn = parse(src)
    stat, _ = run_high_level_pipeline(dyn, retail_schema())
    pol = IterationPolicy(max_iters=3)
    a, b = evaluate(dyn, toy_db, pol)[0], evaluate(stat, toy_db, pol)[0]
    assert to_json(a) == to_json(b)
