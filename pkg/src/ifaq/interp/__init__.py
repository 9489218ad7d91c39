"""Reference evaluator with instrumentation counters."""

from .database import Database, build_trie
from .evaluator import (
    Accumulator, Compiler, DivisionByZero, EvalError, Evaluator, KeyNotFound,
    UnboundVariable, eval_expr, eval_sum, evaluate, linf_delta, zero_of,
)
from .stats import COUNTERS, CostStats, IterationPolicy
