"""Brute-force reference computations over a materialized join.

Everything here works on plain Python dictionaries produced by a nested
loop join, and deliberately avoids the rewriter, the aggregate optimizer and
the execution engine.
"""

from __future__ import annotations

from fractions import Fraction

from ..aggopt.join import JoinSpec
from ..interp.database import Database
from ..ir.ast import Const

MAX_JOIN = 100_000


class OracleError(ValueError):
    pass


def materialize_join(query: JoinSpec, db: Database, limit: int = MAX_JOIN) -> list:
    """[(row dict over the query outputs, multiplicity)] in nesting order."""
    rels = query.relations
    out: list = []

    def go(i: int, bound: dict, mult: int):
        if i == len(rels):
            row = {}
            for f, src in query.outputs.items():
                row[f] = src.value if isinstance(src, Const) else bound[src[0]][src[1]]
            out.append((row, mult))
            if len(out) > limit:
                raise OracleError(f"join has more than {limit} tuples")
            return
        rel = rels[i]
        for t, m in db[rel].data.items():
            row = dict(t.items())
            here = dict(bound)
            here[rel] = row
            ok = True
            for p in query.predicates:
                (r1, a1), (r2, a2) = p.left, p.right
                if r1 in here and r2 in here and rel in (r1, r2):
                    if here[r1][a1] != here[r2][a2]:
                        ok = False
                        break
            if ok:
                go(i + 1, here, mult * m)
    go(0, {}, 1)
    return out


def covar(rows: list, features: list, label: str | None = None) -> dict:
    """count, the feature cross moments and the feature/label moments."""
    m = {(a, b): 0 for a in features for b in features}
    lab = {a: 0 for a in features}
    n = 0
    for row, k in rows:
        n += k
        for a in features:
            for b in features:
                m[(a, b)] += k * row[a] * row[b]
            if label is not None:
                lab[a] += k * row[label] * row[a]
    return {"count": n, "covar": m, "label": lab}


def bgd(rows: list, features: list, label: str, alpha: float, iterations: int,
        normalize: bool = True, theta0=0, epsilon: float | None = None) -> dict:
    """Direct batch gradient descent: one full pass over the rows per step."""
    theta = {f: (theta0.get(f, 0) if isinstance(theta0, dict) else theta0) for f in features}
    n = sum(k for _, k in rows)
    for _ in range(iterations):
        grad = {f: 0 for f in features}
        for row, k in rows:
            err = sum(theta[f] * row[f] for f in features) - row[label]
            for f in features:
                grad[f] += k * err * row[f]
        if normalize and n == 0:
            step = {f: 0 for f in features}
        else:
            rate = alpha / n if normalize else alpha
            step = {f: rate * grad[f] for f in features}
        new = {f: theta[f] - step[f] for f in features}
        delta = max((abs(new[f] - theta[f]) for f in features), default=0)
        theta = new
        if epsilon is not None and delta < epsilon:
            break
    return theta


def _holds(row: dict, cond: tuple) -> bool:
    f, op, t = cond
    if op == "<=":
        return row[f] <= t
    if op == ">":
        return row[f] > t
    raise OracleError(f"unknown operator {op!r}")


def _stats(rows, label):
    n = s = ss = 0
    for row, k in rows:
        y = row[label]
        n += k
        s += k * y
        ss += k * y * y
    return n, s, ss


def _cost(n, s, ss) -> Fraction:
    return Fraction(ss) - Fraction(s) * Fraction(s) / n


def cart(rows: list, features: list, label: str, thresholds: dict, max_depth: int = 4,
         min_node_count: int = 1) -> dict:
    """Reference regression tree as nested JSON-ready dictionaries."""

    def grow(part: list, depth: int) -> dict:
        n, s, ss = _stats(part, label)
        leaf = {"leaf": (s / n) if n else 0.0, "count": n}
        if n == 0 or depth >= max_depth or _cost(n, s, ss) == 0:
            return leaf
        best = None
        for f in features:
            for t in thresholds[f]:
                left = [(r, k) for r, k in part if _holds(r, (f, "<=", t))]
                right = [(r, k) for r, k in part if _holds(r, (f, ">", t))]
                sl, sr = _stats(left, label), _stats(right, label)
                if sl[0] < min_node_count or sr[0] < min_node_count or sl[0] == 0 or sr[0] == 0:
                    continue
                c = _cost(*sl) + _cost(*sr)
                if best is None or c < best[0]:
                    best = (c, f, t, left, right)
        if best is None:
            return leaf
        _, f, t, left, right = best
        return {"feature": f, "op": "<=", "threshold": t, "count": n,
                "left": grow(left, depth + 1), "right": grow(right, depth + 1)}
    return grow(list(rows), 1)
