"""Batch gradient descent for linear regression over a join."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..frontend.parser import parse
from ..frontend.printer import pretty
from ..interp.stats import IterationPolicy
from ..ir.ast import Const, Program
from ..ir.values import to_json
from ..aggopt.join import JoinSpec, join_expr


class ConfigError(ValueError):
    pass


@dataclass
class LRConfig:
    features: list
    label: str
    alpha: float = 0.1
    normalize_by_count: bool = True
    policy: IterationPolicy = field(default_factory=lambda: IterationPolicy(max_iters=10))
    theta0: float | dict = 0
    # name of a constant-1 feature added to the query output; its weight is the intercept
    intercept: str | None = None

    def all_features(self) -> list:
        return ([self.intercept] if self.intercept else []) + list(self.features)

    def theta_start(self, f: str):
        return self.theta0.get(f, 0) if isinstance(self.theta0, dict) else self.theta0

    def validate(self, query: JoinSpec | None = None) -> None:
        feats = self.all_features()
        if not feats:
            raise ConfigError("at least one feature is required")
        if len(set(feats)) != len(feats):
            raise ConfigError("duplicate feature")
        if self.label in feats:
            raise ConfigError(f"label {self.label!r} is also a feature")
        if not self.alpha > 0:
            raise ConfigError("the learning rate must be positive")
        if query is not None:
            for f in list(self.features) + [self.label]:
                if f not in query.outputs:
                    raise ConfigError(f"{f!r} is not an output attribute of the query")
            if self.intercept and self.intercept in query.outputs:
                raise ConfigError(f"intercept name {self.intercept!r} clashes with a query attribute")


def with_intercept(query: JoinSpec, name: str | None) -> JoinSpec:
    if not name:
        return query
    outs = dict(query.outputs)
    outs[name] = Const(1)
    return JoinSpec(list(query.relations), list(query.predicates), outs)


def _num(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def linear_regression_source(cfg: LRConfig, query: JoinSpec) -> str:
    cfg.validate(query)
    q = with_intercept(query, cfg.intercept)
    feats = cfg.all_features()
    fset = ", ".join(f"`{f}`" for f in feats)
    if isinstance(cfg.theta0, dict):
        init = "{{ " + ", ".join(f"`{f}` -> {_num(cfg.theta_start(f))}" for f in feats) + " }}"
    else:
        init = f"lambda(f in F) {_num(cfg.theta0)}"
    grad = (f"(sum(x in dom(Q)) Q(x) * ((sum(f2 in F) theta(f2) * x[f2]) - x[`{cfg.label}`]) * x[f1])")
    rate = _num(cfg.alpha)
    if cfg.normalize_by_count:
        rate = f"{rate} / (sum(x in dom(Q)) Q(x))"
    return (
        f"let Q = {pretty(join_expr(q))};\n"
        f"let F = [[{fset}]];\n"
        f"theta <- {init};\n"
        "while (true) {\n"
        f"  theta <- lambda(f1 in F) theta(f1) - {rate} * {grad}\n"
        "}\n"
        "theta\n"
    )


def build_linear_regression_program(cfg: LRConfig, query: JoinSpec) -> Program:
    return parse(linear_regression_source(cfg, query))


def theta_dict(v) -> dict:
    """Parameter vector as a plain mapping, whichever representation the
    evaluator produced (a dictionary keyed by fields or a record)."""
    j = to_json(v)
    if not isinstance(j, dict):
        raise TypeError(f"not a parameter vector: {v!r}")
    return {k: float(x) for k, x in j.items()}
