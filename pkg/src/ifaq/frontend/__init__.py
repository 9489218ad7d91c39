"""Concrete syntax, printing, schemas and static typing."""

from .parser import ParseError, SourceProgram, parse, parse_expr, tokenize
from .printer import pretty, pretty_program
from .schema import (
    JoinEdge, JoinTree, RelationSchema, Schema, SchemaError, load_schema, schema_from_json,
)
from .typecheck import TypeCheckError, TypeCheckFailure, TypedProgram, typecheck, unify
