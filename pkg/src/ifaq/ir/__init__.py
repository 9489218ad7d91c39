"""Core-language IR: syntax, values, types and binder-aware utilities."""

from .ast import *  # noqa: F401,F403
from .ast import (
    Add, BinOp, Const, DictBuild, DictLit, Dom, Expr, FieldDyn, FieldStatic, If,
    IndexDecl, Let, Loc, Lookup, Mul, Neg, Program, RecordLit, SetLit, Sum, UnOp,
    Var, VariantLit, build_add, build_mul, children, flatten_add, flatten_mul,
    lets, map_children, size, unlet, walk,
)
from .ops import (
    alpha_rename, alpha_rename_expr, canonical, expr_equal, free_vars, fresh_name,
    occurrences, program_equal, substitute,
)
from .values import DictV, FieldV, Record, RuntimeFault, SetV, Variant, sort_key
