"""Regression trees (CART with the variance cost) driven by per-node programs.

Every tree node gets its own loop-free program. Its result record holds,
for each split candidate (feature f, threshold t) and each branch, the
count, the label sum and the label square sum restricted to the node's
path condition and the branch condition. Those aggregates all range over
the same join, so the aggregate optimizer evaluates them as one batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from ..aggopt.join import JoinSpec, join_expr
from ..exec.pipeline import compile_program, run_compiled
from ..frontend.parser import parse
from ..frontend.printer import pretty
from ..frontend.schema import Schema
from ..interp.database import Database
from ..interp.stats import CostStats
from ..ir.ast import Program
from ..ir.values import Record, sort_key, to_json

OPS = ("<=", ">")


class TreeConfigError(ValueError):
    pass


@dataclass
class TreeConfig:
    features: list
    label: str
    thresholds: dict | None = None  # feature -> candidate thresholds; None: distinct values
    max_depth: int = 4
    min_node_count: int = 1
    cost_kind: str = "variance"

    def validate(self, query: JoinSpec | None = None) -> None:
        if self.max_depth < 1:
            raise TreeConfigError("max_depth must be at least 1")
        if self.min_node_count < 1:
            raise TreeConfigError("min_node_count must be at least 1")
        if self.cost_kind != "variance":
            raise TreeConfigError(f"unsupported cost {self.cost_kind!r}")
        if not self.features:
            raise TreeConfigError("at least one feature is required")
        if self.label in self.features:
            raise TreeConfigError("the label cannot be a feature")
        if query is not None:
            for f in list(self.features) + [self.label]:
                if f not in query.outputs:
                    raise TreeConfigError(f"{f!r} is not an output attribute of the query")
        if self.thresholds is not None:
            for f in self.features:
                if not self.thresholds.get(f):
                    raise TreeConfigError(f"no thresholds for feature {f!r}")


@dataclass
class TreeNode:
    count: int
    prediction: float
    feature: str | None = None
    op: str = "<="
    threshold: Any = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_json(self) -> dict:
        if self.is_leaf:
            return {"leaf": self.prediction, "count": self.count}
        return {"feature": self.feature, "op": self.op, "threshold": self.threshold,
                "count": self.count, "left": self.left.to_json(), "right": self.right.to_json()}

    def predict(self, row: dict) -> float:
        node = self
        while not node.is_leaf:
            node = node.left if row[node.feature] <= node.threshold else node.right
        return node.prediction

    def depth(self) -> int:
        return 1 if self.is_leaf else 1 + max(self.left.depth(), self.right.depth())

    def size(self) -> int:
        return 1 if self.is_leaf else 1 + self.left.size() + self.right.size()


@dataclass
class RegressionTree:
    root: TreeNode
    config: TreeConfig
    stats: CostStats = field(default_factory=CostStats)
    programs: int = 0

    def to_json(self) -> dict:
        return self.root.to_json()

    def predict(self, row: dict) -> float:
        return self.root.predict(row)


def default_thresholds(query: JoinSpec, db: Database, features: list) -> dict:
    """All distinct values of each feature in a relation carrying it."""
    out = {}
    for f in features:
        carriers = query.carriers(f)
        if not carriers:
            raise TreeConfigError(f"feature {f!r} is not carried by any relation")
        rel, attr = sorted(carriers.items())[0]
        vals = {t.get(attr) for t in db[rel].data} if rel in db else set()
        out[f] = sorted(vals, key=sort_key)
    return out


def _lit(v) -> str:
    s = repr(float(v)) if isinstance(v, float) else str(v)
    return f"({s})" if s.startswith("-") else s


def _cond(f: str, op: str, t) -> str:
    test = f"x.{f} <= {_lit(t)}" if op == "<=" else f"{_lit(t)} < x.{f}"
    return f"(if ({test}) then 1 else 0)"


def slot(fi: int, ti: int, branch: str, agg: str) -> str:
    return f"c{fi}_{ti}_{branch}_{agg}"


def node_program_source(cfg: TreeConfig, query: JoinSpec, path: list, thresholds: dict) -> str:
    """``path`` is the list of (feature, op, threshold) conditions from the root."""
    delta = [_cond(*c) for c in path]

    def agg(extra: list, power: int) -> str:
        factors = ["Q(x)"] + delta + extra + [f"x.{cfg.label}"] * power
        return "sum(x in dom(Q)) " + " * ".join(factors)

    fields = [("n", agg([], 0)), ("s", agg([], 1)), ("ss", agg([], 2))]
    for fi, f in enumerate(cfg.features):
        for ti, t in enumerate(thresholds[f]):
            for branch, op in (("L", "<="), ("R", ">")):
                c = [_cond(f, op, t)]
                for name, power in (("n", 0), ("s", 1), ("ss", 2)):
                    fields.append((slot(fi, ti, branch, name), agg(c, power)))
    body = ",\n  ".join(f"{n} = {e}" for n, e in fields)
    return f"let Q = {pretty(join_expr(query))};\n{{\n  {body}\n}}\n"


def build_regression_tree_program(cfg: TreeConfig, query: JoinSpec, thresholds: dict):
    """Returns the node-program emitter: path conditions -> Program."""
    cfg.validate(query)

    def emit(path: list) -> Program:
        return parse(node_program_source(cfg, query, path, thresholds))
    return emit


def _cost(n, s, ss) -> Fraction:
    return Fraction(ss) - Fraction(s) * Fraction(s) / n


def _get(v, name):
    return v.get(name) if isinstance(v, Record) else to_json(v)[name]


def train_regression_tree(cfg: TreeConfig, query: JoinSpec, db: Database,
                          schema: Schema | None = None, passes: str = "all",
                          layout_options=None) -> RegressionTree:
    cfg.validate(query)
    thresholds = cfg.thresholds or default_thresholds(query, db, cfg.features)
    thresholds = {f: sorted(thresholds[f], key=sort_key) for f in cfg.features}
    emit = build_regression_tree_program(cfg, query, thresholds)
    tree = RegressionTree(None, cfg)

    def grow(path: list, depth: int) -> TreeNode:
        c = compile_program(emit(path), schema, db, passes, layout_options)
        v, st = run_compiled(c, db)
        tree.stats = tree.stats + st
        tree.programs += 1
        n, s, ss = (_get(v, k) for k in ("n", "s", "ss"))
        leaf = TreeNode(n, (s / n) if n else 0.0)
        if n == 0 or depth >= cfg.max_depth or _cost(n, s, ss) == 0:
            return leaf
        best = None
        for fi, f in enumerate(cfg.features):
            for ti, t in enumerate(thresholds[f]):
                sl = [_get(v, slot(fi, ti, "L", a)) for a in ("n", "s", "ss")]
                sr = [_get(v, slot(fi, ti, "R", a)) for a in ("n", "s", "ss")]
                if min(sl[0], sr[0]) < max(cfg.min_node_count, 1):
                    continue
                cost = _cost(*sl) + _cost(*sr)
                if best is None or cost < best[0]:
                    best = (cost, f, t)
        if best is None:
            return leaf
        _, f, t = best
        node = TreeNode(n, leaf.prediction, f, "<=", t)
        node.left = grow(path + [(f, "<=", t)], depth + 1)
        node.right = grow(path + [(f, ">", t)], depth + 1)
        return node

    tree.root = grow([], 1)
    return tree


def rmse(tree: RegressionTree | TreeNode, rows: list, label: str) -> float:
    """Root mean squared error over (row, multiplicity) pairs."""
    n = sum(k for _, k in rows)
    if n == 0:
        return 0.0
    err = sum(k * (tree.predict(r) - r[label]) ** 2 for r, k in rows)
    return (err / n) ** 0.5
