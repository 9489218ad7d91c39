"""Physical execution: layout choice, plan execution and plan dumps."""

from .engine import ExecCompiler, LayoutRealizationError, PlanEvaluator, execute
from .explain import explain
from .layouts import (
    ARRAY_RELATION, HASH_DICT, SORTED_DICT, SORTED_TRIE, LayoutChoice, LayoutOptions, MergeSite,
    PhysicalPlan, PlanError, choose_layouts, flatten_records, flatten_view_keys,
    flatten_view_payloads,
)
from .pipeline import PASS_SETS, Compiled, compile_program, run_compiled, run_program
