"""Seeded random generator of well-typed source expressions for rule testing.

Databases have two relations, R(a, b) and S(b, c), with integer attributes.
Expressions are produced as source text and parsed, so every sample also
exercises the parser. Real-valued samples use dyadic constants, which keeps
floating-point sums exact under reassociation.
"""

from __future__ import annotations

import random

from ifaq.frontend import schema_from_json
from ifaq.interp import Database
from ifaq.ir.values import DictV, FieldV, Record, SetV, sort_key
from ifaq.rewrite import FAMILIES, PassContext, rewrite_expr, static_memoize

SCHEMA_JSON = {
    "relations": [
        {"name": "R", "attrs": [{"name": "a", "type": "int"}, {"name": "b", "type": "int"}]},
        {"name": "S", "attrs": [{"name": "b", "type": "int"}, {"name": "c", "type": "int"}]},
    ],
    "featureSets": {"FR": ["a", "b"]},
}
FIELDS = {"R": ("a", "b"), "S": ("b", "c")}
# bindings every generated expression may use: a feature set and a loop state
ENV = {"FR": SetV([FieldV("a"), FieldV("b")]),
       "th": DictV({FieldV("a"): 0.5, FieldV("b"): -1.25})}
FAMILY_NAMES = tuple(FAMILIES) + ("memoize",)
REALS = ("0.5", "1.25", "-0.75", "2.0", "0.25", "-1.5")


def random_db(rng: random.Random, max_tuples: int = 5) -> Database:
    schema = schema_from_json(SCHEMA_JSON)
    rows = {}
    for rel, attrs in FIELDS.items():
        rows[rel] = [tuple(rng.randint(0, 3) for _ in attrs)
                     for _ in range(rng.randint(0, max_tuples))]
    db = Database.from_rows(schema, rows)
    return db


class ExprGen:
    def __init__(self, rng: random.Random, real: bool = False):
        self.rng = rng
        self.real = real
        self.scope: list = []  # (name, kind); kind is "num", "R", "S" or ("fld", rel)
        self.n = 0

    def fresh(self, base: str = "v") -> str:
        self.n += 1
        return f"{base}{self.n}"

    def pick(self, kind):
        c = [n for n, k in self.scope if k == kind]
        return self.rng.choice(c) if c else None

    def tuples(self):
        return [(n, k) for n, k in self.scope if k in ("R", "S")]

    def const(self) -> str:
        if self.real and self.rng.random() < 0.6:
            v = self.rng.choice(REALS)
            return f"({v})" if v.startswith("-") else v
        v = self.rng.randint(-3, 3)
        return f"({v})" if v < 0 else str(v)

    def bind(self, name, kind, fn):
        self.scope.append((name, kind))
        try:
            return fn()
        finally:
            self.scope.pop()

    # -- numbers
    def leaf(self) -> str:
        r = self.rng
        opts = ["const", "const"]
        if self.pick("num"):
            opts += ["var", "var"]
        if self.tuples():
            opts += ["field", "field", "mult"]
        k = r.choice(opts)
        if k == "const":
            return self.const()
        if k == "var":
            return self.pick("num")
        t, rel = r.choice(self.tuples())
        if k == "mult":
            return f"{rel}({t})"
        f = r.choice(FIELDS[rel])
        fv = [n for n, kk in self.scope if kk == ("fld", rel)]
        style = r.random()
        if fv and style < 0.3:
            return f"{t}[{r.choice(fv)}]"
        if style < 0.6:
            return f"{t}[`{f}`]"
        return f"{t}.{f}"

    def num(self, d: int) -> str:
        r = self.rng
        if d <= 0 or r.random() < 0.2:
            return self.leaf()
        k = r.choice(["add", "add", "sub", "mul", "mul", "neg", "sumrel", "sumrel", "sumset",
                      "sumfld", "let", "if", "recfield", "lookup"])
        if k == "add":
            return f"({self.num(d - 1)} + {self.num(d - 1)})"
        if k == "sub":
            return f"({self.num(d - 1)} - {self.num(d - 1)})"
        if k == "mul":
            return f"({self.num(d - 1)} * {self.num(d - 1)})"
        if k == "neg":
            return f"(-{self.num(d - 1)})"
        if k == "sumrel":
            rel = r.choice(["R", "S"])
            x = self.fresh("x")
            return self.bind(x, rel, lambda: f"(sum({x} in dom({rel})) {self.num(d - 1)})")
        if k == "sumset":
            v = self.fresh("k")
            items = ", ".join(str(r.randint(0, 3)) for _ in range(r.randint(0, 3)))
            return self.bind(v, "num", lambda: f"(sum({v} in [[{items}]]) {self.num(d - 1)})")
        if k == "sumfld":
            rel = r.choice(["R", "S"])
            f = self.fresh("f")
            fs = ", ".join(f"`{a}`" for a in FIELDS[rel])
            coll = "FR" if rel == "R" and r.random() < 0.5 else f"[[{fs}]]"
            return self.bind(f, ("fld", rel), lambda: f"(sum({f} in {coll}) {self.num(d - 1)})")
        if k == "let":
            v = self.fresh("y")
            val = self.num(d - 1)
            return self.bind(v, "num", lambda: f"(let {v} = {val} in {self.num(d - 1)})")
        if k == "if":
            op = r.choice(["==", "<", "<="])
            return f"(if ({self.num(d - 2)} {op} {self.num(d - 2)}) then {self.num(d - 1)} else {self.num(d - 1)})"
        if k == "recfield":
            return f"({self.rec(d - 1)}).{r.choice(['a', 'b'])}"
        return f"({self.dict(d - 1)})({self.num(d - 2)} ?? 0)"

    # -- records with fields a and b
    def rec(self, d: int) -> str:
        r = self.rng
        k = r.choice(["lit", "lit", "add", "scale", "sum"]) if d > 0 else "lit"
        if k == "lit":
            return f"{{a = {self.num(d - 1)}, b = {self.num(d - 1)}}}"
        if k == "add":
            return f"({self.rec(d - 1)} + {self.rec(d - 1)})"
        if k == "scale":
            return f"({self.num(d - 1)} * {self.rec(d - 1)})"
        rel = r.choice(["R", "S"])
        x = self.fresh("x")
        return self.bind(x, rel, lambda: f"(sum({x} in dom({rel})) {self.rec(d - 1)})")

    # -- dictionaries with small integer keys
    def dict(self, d: int) -> str:
        r = self.rng
        k = r.choice(["lit", "lit", "lambda", "add", "sum"]) if d > 0 else "lit"
        if k == "lit":
            items = ", ".join(f"{r.randint(0, 3)} -> {self.num(d - 1)}" for _ in range(r.randint(1, 3)))
            return f"{{{{ {items} }}}}"
        if k == "lambda":
            v = self.fresh("k")
            items = ", ".join(str(i) for i in sorted(r.sample(range(4), r.randint(1, 3))))
            return self.bind(v, "num", lambda: f"(lambda({v} in [[{items}]]) {self.num(d - 1)})")
        if k == "add":
            return f"({self.dict(d - 1)} + {self.dict(d - 1)})"
        rel = r.choice(["R", "S"])
        x = self.fresh("x")
        key = f"{x}.{FIELDS[rel][0]}"
        return self.bind(x, rel, lambda: f"(sum({x} in dom({rel})) {{{{ {key} -> {self.num(d - 1)} }}}})")

    # -- dictionaries keyed by field names (records after specialization)
    def fdict(self, d: int) -> str:
        r = self.rng
        if r.random() < 0.5:
            return f"{{{{ `a` -> {self.num(d - 1)}, `b` -> {self.num(d - 1)} }}}}"
        x, f = self.fresh("x"), self.fresh("f")

        def body():
            return self.bind(f, ("fld", "R"), lambda: f"(lambda({f} in [[`a`, `b`]]) {self.num(d - 1)})")
        return self.bind(x, "R", lambda: f"(sum({x} in dom(R)) {body()})")

    def any(self, d: int) -> str:
        k = self.rng.random()
        if k < 0.6:
            return self.num(d)
        if k < 0.75:
            return self.rec(d)
        if k < 0.9:
            return self.dict(d)
        return self.fdict(d)


# --------------------------------------------------------------------------
# family templates: random holes inside shapes each rule family targets

def _sum_over(g: ExprGen, body_fn, rel=None):
    rel = rel or g.rng.choice(["R", "S"])
    x = g.fresh("x")
    return g.bind(x, rel, lambda: f"(sum({x} in dom({rel})) {body_fn(x)})"), x


def template(family: str, g: ExprGen, d: int = 3) -> str:
    r = g.rng
    if family == "normalize":
        k = r.randrange(4)
        if k == 0:
            return f"(({g.num(d - 1)} + {g.num(d - 1)}) * {g.num(d - 1)})"
        if k == 1:
            return f"(-({g.num(d - 1)} - {g.num(d - 1)}))"
        if k == 2:
            return f"({g.num(d - 1)} * {_sum_over(g, lambda x: g.num(d - 1))[0]})"
        return _sum_over(g, lambda x: f"({g.num(d - 1)} + {g.num(d - 1)})")[0]
    if family == "schedule":
        outer = r.choice(["R", "S"])
        inner = r.choice(["R", "S", "set", "fld"])

        def body(x):
            if inner == "set":
                k = g.fresh("k")
                return g.bind(k, "num", lambda: f"(sum({k} in [[1, 2, 3]]) {g.num(d - 1)})")
            if inner == "fld":
                f = g.fresh("f")
                return g.bind(f, ("fld", "R"), lambda: f"(sum({f} in FR) {g.num(d - 1)})")
            return _sum_over(g, lambda y: g.num(d - 1), inner)[0]
        return _sum_over(g, body, outer)[0]
    if family == "factorize":
        if r.random() < 0.3:
            a, b, c = g.num(d - 1), g.num(d - 1), g.num(d - 1)
            return f"(({a} * {b}) + ({a} * {c}))"
        indep = g.num(d - 1)
        return _sum_over(g, lambda x: f"({indep} * {g.num(d - 1)})")[0]
    if family == "licm":
        if r.random() < 0.3:
            y = g.fresh("y")
            val = g.num(d - 1)
            inner = g.bind(y, "num", lambda: g.num(d - 1))
            return f"((let {y} = {val} in {inner}) * {g.num(d - 1)})"
        y = g.fresh("y")
        val = g.num(d - 1)
        return _sum_over(g, lambda x: g.bind(y, "num", lambda: f"(let {y} = {val} in {g.num(d - 1)})"))[0]
    if family == "partialEval":
        k = r.randrange(5)
        if k == 0:
            y = g.fresh("y")
            return g.bind(y, "num", lambda: f"(let {y} = {g.const()} in {g.num(d - 1)})")
        if k == 1:
            v = g.fresh("k")
            return g.bind(v, "num", lambda: f"(sum({v} in [[2, 1, 2]]) {g.num(d - 1)})")
        if k == 2:
            return f"({{{{ 1 -> {g.num(d - 1)}, 2 -> {g.num(d - 1)} }}}} + {{{{ 2 -> {g.num(d - 1)}, 3 -> {g.num(d - 1)} }}}})"
        if k == 3:
            return f"({{{{ 1 -> {g.num(d - 1)}, 2 -> {g.num(d - 1)} }}}})({r.randint(1, 2)})"
        return f"((({g.const()} + {g.const()}) * {g.num(d - 1)}) + {{a = {g.num(d - 1)}, b = 1}}.a)"
    if family == "schemaSpec":
        k = r.randrange(3)
        if k == 0:
            return g.fdict(d)
        if k == 1:
            return f"({{a = {g.num(d - 1)}, b = {g.num(d - 1)}}})[`{r.choice('ab')}`]"
        return _sum_over(g, lambda x: f"({x}[`b`] * {g.num(d - 1)})")[0]
    if family == "generic":
        y, z = g.fresh("y"), g.fresh("y")
        val = g.num(d - 1)
        k = r.randrange(4)
        if k == 0:
            return g.bind(y, "num", lambda: f"(let {y} = {val} in {g.num(d - 1)})")
        if k == 1:
            return g.bind(y, "num", lambda: f"(let {y} = {val} in ({y} + {y} * {g.num(d - 1)}))")
        if k == 2:
            inner = g.bind(z, "num", lambda: f"(let {z} = {g.num(d - 1)} in {g.num(d - 1)})")
            return g.bind(y, "num", lambda: f"(let {y} = {inner} in {g.num(d - 1)})")
        return g.bind(y, "num", lambda: g.bind(z, "num", lambda: f"(let {y} = {val} in let {z} = {val} in ({y} * {z}))"))
    if family == "fuse":
        rel = r.choice(["R", "S"])
        a, b = g.fresh("t"), g.fresh("t")
        s1 = _sum_over(g, lambda x: g.num(d - 1), rel)[0]
        if r.random() < 0.4:
            s1 = _sum_over(g, lambda x: f"{{a = {g.num(d - 1)}, b = {g.num(d - 1)}}}", rel)[0]
            use_a = f"{a}.a"
        else:
            use_a = a
        s2 = _sum_over(g, lambda x: g.num(d - 1), rel)[0]
        return f"(let {a} = {s1} in let {b} = {s2} in ({use_a} * {b} + {b}))"
    if family == "memoize":
        # a loop step over state ``th``: static sums under feature binders
        f, h = g.fresh("f"), g.fresh("f")

        def inner():
            return _sum_over(g, lambda x: f"({x}[{h}] * {x}[{f}] * {g.num(d - 2)})", "R")[0]

        def step():
            agg = g.bind(h, ("fld", "R"), lambda: f"(sum({h} in FR) th({h}) * {inner()})")
            return f"(th({f}) - {agg})"
        return g.bind(f, ("fld", "R"), lambda: f"(lambda({f} in FR) {step()})")
    raise ValueError(family)


# --------------------------------------------------------------------------
# value comparison up to representation (field-keyed dictionaries vs records)

def _is_zero(v) -> bool:
    return (type(v) in (int, float) and v == 0) or (isinstance(v, dict) and not v)


def normalize_value(v):
    if type(v) is Record:
        out = {("f", n): normalize_value(x) for n, x in v.items()}
        return {k: x for k, x in out.items() if not _is_zero(x)}
    if type(v) is DictV:
        out = {}
        for k in v.keys():
            key = ("f", k.name) if type(k) is FieldV else ("k", sort_key(k))
            out[key] = normalize_value(v.data[k])
        return {k: x for k, x in out.items() if not _is_zero(x)}
    return v


def close(a, b, rel: float = 0.0) -> bool:
    if isinstance(a, dict) or isinstance(b, dict):
        if not isinstance(a, dict) or not isinstance(b, dict):
            return _is_zero(a) and _is_zero(b)
        keys = set(a) | set(b)
        return all(close(a.get(k, 0), b.get(k, 0), rel) for k in keys)
    if type(a) in (int, float) and type(b) in (int, float):
        if rel == 0.0:
            return a == b
        return abs(a - b) <= rel * max(abs(a), abs(b)) or a == b
    return a == b



def apply_family(family: str, e, db: Database):
    schema = db.schema.with_cardinalities(db.cardinalities())
    if family == "memoize":
        return static_memoize(e, "th", {}, schema)
    return rewrite_expr(e, FAMILIES[family], PassContext(schema=schema))
