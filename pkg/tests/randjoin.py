"""Random acyclic join schemas and databases for aggregate oracle tests."""

from __future__ import annotations

import random

from ifaq.aggopt import join_expr, join_spec_from_schema
from ifaq.frontend import parse, pretty, schema_from_json
from ifaq.interp import Database


def random_tree_schema(rng: random.Random, n_rel: int, star: bool = False, real: bool = False):
    """Relations T0..T{n-1}; each child shares one key attribute with its parent."""
    parents = {i: (0 if star else rng.randrange(i)) for i in range(1, n_rel)}
    attrs = {i: [] for i in range(n_rel)}
    edges = []
    for child, parent in parents.items():
        key = f"k{child}"
        attrs[parent].append(key)
        attrs[child].insert(0, key)
        edges.append({"parent": f"T{parent}", "child": f"T{child}", "attrs": [key]})
    measure_type = "real" if real else "int"
    for i in range(n_rel):
        attrs[i].append(f"a{i}")
    rels = [{"name": f"T{i}", "attrs": [{"name": a, "type": measure_type if a.startswith("a") else "int"}
                                        for a in attrs[i]]} for i in range(n_rel)]
    features = [f"a{i}" for i in range(n_rel)] + [f"k{i}" for i in range(1, n_rel)]
    return schema_from_json({"relations": rels, "featureSets": {"F": features},
                             "joinTree": {"root": "T0", "edges": edges}})


def random_database(rng: random.Random, schema, max_total: int = 200, real: bool = False):
    names = list(schema.relations)
    budget = max_total
    rows = {}
    for k, n in enumerate(names):
        left = len(names) - k - 1
        cnt = rng.randint(0, max(0, min(budget - left, max_total // len(names))))
        budget -= cnt
        out = []
        for _ in range(cnt):
            t = []
            for a in schema.relation(n).attr_names:
                if a.startswith("a"):
                    t.append(rng.randint(-4, 9) / 4 if real else rng.randint(-3, 6))
                else:
                    t.append(rng.randint(0, 3))
            out.append(tuple(t))
        rows[n] = out
    return Database.from_rows(schema, rows)


def covar_program(schema, features=None, tree=None):
    """One aggregate per unordered feature pair, plus the count. ``tree``
    restricts the join to a subtree of the schema's join tree."""
    spec = join_spec_from_schema(schema, tree)
    feats = [f for f in (features or schema.feature_sets["F"]) if f in spec.outputs]
    fields = ["n = sum(x in dom(Q)) Q(x)"]
    pairs = []
    for i, a in enumerate(feats):
        for b in feats[i:]:
            pairs.append((a, b))
            fields.append(f"m_{a}_{b} = sum(x in dom(Q)) Q(x) * x.{a} * x.{b}")
    src = f"let Q = {pretty(join_expr(spec))};\n{{\n  " + ",\n  ".join(fields) + "\n}\n"
    return parse(src), spec, pairs
