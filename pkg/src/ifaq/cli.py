"""Command-line driver.

Exit codes: 0 success, 1 parse error, 2 type, schema or data error,
3 planning error (rewriting, specialization, aggregate optimization or
layout choice), 4 runtime error, 5 disagreement found by ``compare``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from .aggopt import AggOptError, join_spec_from_schema
from .apps import (
    LRConfig, TreeConfig, TreeConfigError, ConfigError, linear_regression_source, materialize_join,
    rmse, train_regression_tree,
)
from .data import CSVError, GenSpec, GenerationError, export_csv, generate_retail, load_csv
from .exec import (
    PASS_SETS, LayoutOptions, PlanError, compile_program, explain, run_compiled,
)
from .frontend import (
    ParseError, SchemaError, SourceProgram, TypeCheckFailure, load_schema, parse, pretty_program,
    typecheck,
)
from .interp import IterationPolicy
from .ir.values import RuntimeFault, json_close, to_json
from .rewrite import RewriteError

EXIT_PARSE, EXIT_TYPE, EXIT_PLAN, EXIT_RUNTIME, EXIT_MISMATCH = 1, 2, 3, 4, 5


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def _load(args, need_db: bool = True):
    schema = load_schema(args.schema)
    prog = parse(SourceProgram.from_file(args.program)) if getattr(args, "program", None) else None
    if prog is not None:
        typecheck(prog, schema, static=False)
    db = load_csv(args.db, schema) if need_db and getattr(args, "db", None) else None
    return prog, schema, db


def _layout_options(args) -> LayoutOptions:
    return LayoutOptions(sorted_tries=not args.hash_tries, arrays=not args.no_arrays,
                         sorted_views=not args.hash_views)


def _policy(args) -> IterationPolicy:
    return IterationPolicy(max_iters=args.max_iters, epsilon=args.epsilon)


def cmd_run(args) -> int:
    prog, schema, db = _load(args)
    c = compile_program(prog, schema, db, args.passes, _layout_options(args))
    value, stats = run_compiled(c, db, _policy(args))
    _write(args.out, _dump(to_json(value)))
    if args.stats:
        _write(args.stats, _dump(stats.to_json()))
    return 0


def cmd_compare(args) -> int:
    prog, schema, db = _load(args)
    runs = {}
    for passes in (args.left, args.right):
        c = compile_program(prog, schema, db, passes, _layout_options(args))
        runs[passes] = run_compiled(c, db, _policy(args))
    (va, sa), (vb, sb) = runs[args.left], runs[args.right]
    same = json_close(to_json(va), to_json(vb), rel=args.rtol)
    report = {"agree": same, "rtol": args.rtol,
              "stats": {args.left: sa.to_json(), args.right: sb.to_json()}}
    _write(args.out, _dump(report))
    return 0 if same else EXIT_MISMATCH


def cmd_trace(args) -> int:
    prog, schema, db = _load(args, need_db=bool(args.db))
    c = compile_program(prog, schema, db, "highlevel")
    trace = c.trace
    _write(args.out, trace.to_jsonl())
    if args.stages:
        d = Path(args.stages)
        d.mkdir(parents=True, exist_ok=True)
        for i, (name, p) in enumerate(trace.stages):
            (d / f"{i:02d}_{name}.ifaq").write_text(pretty_program(p) + "\n", encoding="utf-8")
    return 0


def cmd_explain(args) -> int:
    prog, schema, db = _load(args)
    c = compile_program(prog, schema, db, "all", _layout_options(args))
    _write(args.out, explain(c.plan))
    return 0


def cmd_gen(args) -> int:
    spec = GenSpec(seed=args.seed, sales=args.sales, items=args.items, stores=args.stores,
                   cities=args.cities)
    db = generate_retail(spec)
    out = Path(args.out)
    export_csv(db, out)
    (out / "schema.json").write_text(_dump(db.schema.to_json()), encoding="utf-8")
    if args.program:
        src = linear_regression_source(LRConfig(list(db.schema.feature_sets["F"]), db.schema.label),
                                       join_spec_from_schema(db.schema))
        (out / "bgd.ifaq").write_text(src, encoding="utf-8")
    return 0


def cmd_lr_program(args) -> int:
    schema = load_schema(args.schema)
    feats = args.features.split(",") if args.features else list(schema.feature_sets.get("F", ()))
    label = args.label or schema.label
    if not feats or not label:
        raise ConfigError("features and label must come from the schema or the command line")
    cfg = LRConfig(feats, label, alpha=args.alpha, normalize_by_count=not args.no_normalize,
                   intercept=args.intercept)
    _write(args.out, linear_regression_source(cfg, join_spec_from_schema(schema)))
    return 0


def cmd_cart(args) -> int:
    schema = load_schema(args.schema)
    db = load_csv(args.db, schema)
    feats = args.features.split(",") if args.features else list(schema.feature_sets.get("F", ()))
    cfg = TreeConfig(feats, args.label or schema.label, max_depth=args.max_depth,
                     min_node_count=args.min_node_count)
    q = join_spec_from_schema(schema)
    tree = train_regression_tree(cfg, q, db, schema, args.passes, _layout_options(args))
    _write(args.out, _dump(tree.to_json()))
    if args.stats:
        _write(args.stats, _dump(tree.stats.to_json()))
    if args.holdout:
        held = load_csv(args.holdout, schema)
        rows = materialize_join(q, held)
        sys.stdout.write(_dump({"rmse": rmse(tree, rows, cfg.label), "tuples": len(rows)}))
    return 0


BENCH_COLUMNS = ("sales", "iters", "passes", "tuplesScanned", "arithmeticOps", "dictLookups",
                 "dictInserts", "loopIterations", "seconds")


def cmd_bench(args) -> int:
    sales = [int(x) for x in args.sales.split(",")]
    iters = [int(x) for x in args.iters.split(",")]
    passes = args.passes.split(",")
    for p in passes:
        if p not in PASS_SETS:
            raise CLIError(f"unknown pass set {p!r}", EXIT_TYPE)
    rows = []
    for n in sales:
        db = generate_retail(GenSpec(seed=args.seed, sales=n, items=args.items, stores=args.stores,
                                     cities=args.cities))
        schema = db.schema
        src = linear_regression_source(LRConfig(list(schema.feature_sets["F"]), schema.label),
                                       join_spec_from_schema(schema))
        prog = parse(src)
        for k in iters:
            for ps in passes:
                t0 = time.perf_counter()
                c = compile_program(prog, schema, db, ps)
                _, st = run_compiled(c, db, IterationPolicy(max_iters=k))
                secs = time.perf_counter() - t0
                row = {"sales": n, "iters": k, "passes": ps, **st.counters(),
                       "seconds": "-" if args.no_time else f"{secs:.6f}"}
                rows.append(row)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out not in (None, "-") else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _add_layout_flags(sp) -> None:
    sp.add_argument("--hash-tries", action="store_true", help="keep trie indexes as hash dictionaries")
    sp.add_argument("--no-arrays", action="store_true", help="keep base relations as hash dictionaries")
    sp.add_argument("--hash-views", action="store_true", help="no sorted views or merge probes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ifaq", description="Compile and run aggregate programs over relational data.")
    sub = ap.add_subparsers(dest="command", required=True)

    def program_args(sp, db_required=True):
        sp.add_argument("--program", required=True, help="program source file")
        sp.add_argument("--schema", required=True, help="schema JSON file")
        sp.add_argument("--db", required=db_required, help="directory of relation CSV files")

    sp = sub.add_parser("run", help="compile and evaluate a program")
    program_args(sp)
    sp.add_argument("--passes", choices=PASS_SETS, default="all")
    sp.add_argument("--max-iters", type=int, default=100)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--out", default="-", help="result JSON file (default stdout)")
    sp.add_argument("--stats", help="cost counter JSON file")
    _add_layout_flags(sp)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("compare", help="evaluate under two pass sets and compare the results")
    program_args(sp)
    sp.add_argument("--left", choices=PASS_SETS, default="none")
    sp.add_argument("--right", choices=PASS_SETS, default="all")
    sp.add_argument("--rtol", type=float, default=1e-9)
    sp.add_argument("--max-iters", type=int, default=100)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--out", default="-")
    _add_layout_flags(sp)
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("trace", help="dump the rewrite trace of the high-level passes")
    program_args(sp, db_required=False)
    sp.add_argument("--out", default="-", help="trace JSONL file (default stdout)")
    sp.add_argument("--stages", help="directory for per-stage pretty-printed programs")
    sp.set_defaults(fn=cmd_trace)

    sp = sub.add_parser("explain", help="print the physical plan")
    program_args(sp)
    sp.add_argument("--out", default="-")
    _add_layout_flags(sp)
    sp.set_defaults(fn=cmd_explain)

    sp = sub.add_parser("gen", help="generate a retail database as CSV files")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--sales", type=int, default=1000)
    sp.add_argument("--items", type=int, default=50)
    sp.add_argument("--stores", type=int, default=10)
    sp.add_argument("--cities", type=int, default=5)
    sp.add_argument("--program", action="store_true", help="also write the gradient descent program")
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("lr-program", help="emit the gradient descent program for a schema")
    sp.add_argument("--schema", required=True)
    sp.add_argument("--features", help="comma-separated features (default: feature set F)")
    sp.add_argument("--label")
    sp.add_argument("--alpha", type=float, default=0.1)
    sp.add_argument("--no-normalize", action="store_true")
    sp.add_argument("--intercept", help="name of a constant-1 intercept feature")
    sp.add_argument("--out", default="-")
    sp.set_defaults(fn=cmd_lr_program)

    sp = sub.add_parser("cart", help="train a regression tree")
    sp.add_argument("--schema", required=True)
    sp.add_argument("--db", required=True)
    sp.add_argument("--features")
    sp.add_argument("--label")
    sp.add_argument("--max-depth", type=int, default=4)
    sp.add_argument("--min-node-count", type=int, default=1)
    sp.add_argument("--passes", choices=PASS_SETS, default="all")
    sp.add_argument("--holdout", help="CSV directory of held-out data for an RMSE report")
    sp.add_argument("--out", default="-")
    sp.add_argument("--stats")
    _add_layout_flags(sp)
    sp.set_defaults(fn=cmd_cart)

    sp = sub.add_parser("bench", help="sweep data sizes, iteration counts and pass sets")
    sp.add_argument("--sales", default="1000,10000")
    sp.add_argument("--iters", default="1,10,50")
    sp.add_argument("--passes", default="none,highlevel,all")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--items", type=int, default=100)
    sp.add_argument("--stores", type=int, default=20)
    sp.add_argument("--cities", type=int, default=5)
    sp.add_argument("--no-time", action="store_true", help="omit wall times (reproducible output)")
    sp.add_argument("--out", default="-", help="CSV file (default stdout)")
    sp.set_defaults(fn=cmd_bench)
    return ap


def _code(exc: BaseException) -> int | None:
    if isinstance(exc, CLIError):
        return exc.code
    if isinstance(exc, ParseError):
        return EXIT_PARSE
    if isinstance(exc, (TypeCheckFailure, SchemaError, CSVError, ConfigError, TreeConfigError,
                        GenerationError)):
        return EXIT_TYPE
    if isinstance(exc, (RewriteError, AggOptError, PlanError)):
        return EXIT_PLAN
    if isinstance(exc, (RuntimeFault, ZeroDivisionError, RecursionError)):
        return EXIT_RUNTIME
    if isinstance(exc, OSError):
        return EXIT_TYPE
    return None


def main(argv: list | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - mapped onto the exit-code contract
        code = _code(exc)
        if code is None:
            raise
        print(f"ifaq {args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
