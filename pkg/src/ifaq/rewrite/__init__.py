"""High-level rewriting: rule families, passes and the fixed pipeline."""

from .engine import (
    NonTermination, PassContext, RewriteError, RewriteRule, RewriteTrace, TraceEntry,
    fixpoint, rewrite_expr, rewrite_program,
)
from .passes import (
    HIGH_LEVEL_STAGES, SpecializationError, factorize, fuse_loops, fuse_program,
    generic_opts, generic_program, hoist_lets, hoist_loop_invariants,
    licm_program, memoize_program, normalize, partial_eval, partial_eval_program,
    run_high_level_pipeline, run_pass, schedule_loops, specialize_program,
    specialize_schema, static_memoize,
)
from .rules import FAMILIES, estimate
