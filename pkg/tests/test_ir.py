from hypothesis import given, settings, strategies as st

from ifaq.frontend import parse, parse_expr, pretty, pretty_program
from ifaq.ir import (
    Const, DictV, FieldV, Lookup, Mul, Record, SetV, Sum, Var, alpha_rename, alpha_rename_expr,
    expr_equal, free_vars, program_equal, sort_key,
)
from ifaq.ir.ops import bound_vars
from ifaq.ir.values import json_close, ring_add, ring_mul, to_json, values_close

BGD = """let F = [[`i`, `s`, `c`, `p`]];
theta <- lambda(f in F) 0;
while (true) {
  theta <- lambda(f1 in F) theta(f1) - sum(x in dom(Q)) Q(x) * (sum(f2 in F) theta(f2) * x[f2]) * x[f1]
}
theta
"""


def test_free_vars_of_variable():
    assert free_vars(Var("a")) == {"a"}


def test_free_vars_binder_removed():
    e = Sum("x", Var("Q"), Mul(Lookup(Var("Q"), Var("x")), Var("y")))
    assert free_vars(e) == {"Q", "y"}


def test_free_vars_of_bgd_step():
    p = parse(BGD)
    assert free_vars(p.step) == {"theta", "Q", "F"}


def test_alpha_rename_two_loops():
    p = parse("let a = sum(x in F) x; let b = sum(x in F) x * x; a + b")
    q = alpha_rename(p)
    names = [e.var for _, e in q.prelude]
    assert names == ["x", "x_1"]
    assert program_equal(p, q)


def test_alpha_rename_idempotent():
    p = alpha_rename(parse(BGD))
    assert pretty_program(alpha_rename(p)) == pretty_program(p)


def test_alpha_rename_inner_let():
    e = alpha_rename_expr(parse_expr("let x = 1 in let x = 2 in x"))
    assert pretty(e) == pretty(parse_expr("let x = 1 in let x_1 = 2 in x_1"))


def test_alpha_rename_leaves_no_shadowing():
    e = alpha_rename_expr(parse_expr("sum(x in F) (sum(x in F) x) * (let x = 2 in x)"))
    assert len(bound_vars(e)) == 3


def test_expr_equal_commutative():
    assert expr_equal(parse_expr("a * b"), parse_expr("b * a"))


def test_expr_equal_alpha():
    assert expr_equal(parse_expr("sum(x in F) x"), parse_expr("sum(y in F) y"))


def test_expr_equal_is_syntactic():
    assert not expr_equal(parse_expr("a * (b + c)"), parse_expr("a * b + a * c"))


def test_expr_equal_respects_free_names():
    assert not expr_equal(parse_expr("sum(x in F) y"), parse_expr("sum(x in F) x"))


def test_expr_equal_nary_flattening():
    assert expr_equal(parse_expr("(a * b) * c"), parse_expr("a * (c * b)"))


def test_print_parse_round_trip():
    p = parse(BGD)
    assert program_equal(parse(pretty_program(p)), p)
    assert pretty_program(parse(pretty_program(p))) == pretty_program(p)


def test_canonical_order_across_kinds():
    vals = [DictV({}), SetV([]), Record({"a": 1}), FieldV("a"), "s", True, 2.5, 1]
    ranked = sorted(vals, key=sort_key)
    assert ranked[:2] == [1, 2.5]
    assert isinstance(ranked[-1], DictV)


def test_setv_iterates_in_canonical_order():
    assert list(SetV([3, 1, 2]).items) == [1, 2, 3]


def test_to_json_record_and_field_dict_agree():
    r = Record({"a": 1, "b": 2.5})
    d = DictV({FieldV("a"): 1, FieldV("b"): 2.5})
    assert to_json(r) == to_json(d) == {"a": 1, "b": 2.5}


def test_values_close():
    assert values_close(Record({"a": 1.0}), Record({"a": 1.0 + 1e-13}), rel=1e-12)
    assert not values_close(Record({"a": 1.0}), Record({"a": 1.1}), rel=1e-12)


def test_json_close_ignores_record_versus_field_dictionary():
    r = Record({"a": 1.0, "b": 2})
    d = DictV({FieldV("a"): 1.0 + 1e-13, FieldV("b"): 2})
    assert not values_close(r, d, rel=1e-12)
    assert json_close(to_json(r), to_json(d), rel=1e-12)
    assert not json_close(to_json(r), to_json(d))
    assert not json_close({"a": 1}, {"a": 1, "b": 0})


def test_const_nodes_compare_structurally():
    assert expr_equal(Const(1), parse_expr("1"))


small_dicts = st.dictionaries(st.integers(0, 4), st.integers(-5, 5), max_size=4).map(
    lambda d: DictV({k: v for k, v in d.items() if v != 0}))


@settings(max_examples=200, deadline=None)
@given(small_dicts, small_dicts, small_dicts)
def test_dict_addition_is_a_commutative_monoid(a, b, c):
    assert ring_add(a, b) == ring_add(b, a)
    assert ring_add(ring_add(a, b), c) == ring_add(a, ring_add(b, c))
    assert ring_add(a, DictV({})) == a


@settings(max_examples=200, deadline=None)
@given(small_dicts, small_dicts, st.integers(-3, 3))
def test_scalar_multiplication_distributes(a, b, k):
    assert ring_mul(k, ring_add(a, b)) == ring_add(ring_mul(k, a), ring_mul(k, b))
