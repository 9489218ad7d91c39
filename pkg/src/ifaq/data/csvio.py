"""CSV directories: one ``<relation>.csv`` per relation with a header row.

Bag semantics: a tuple with multiplicity m is written as m identical rows,
and duplicate rows are counted back into multiplicities on load.
"""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path

from ..aggopt.lower import trie_order
from ..frontend.schema import Schema
from ..interp.database import Database
from ..ir.types import BOOL, INT, REAL, STRING
from ..ir.values import Record, sort_key


class CSVError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1"):
        return True
    if t in ("false", "0"):
        return False
    raise ValueError(text)


_PARSERS = {INT: int, REAL: float, BOOL: _parse_bool, STRING: str}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _row_order(schema: Schema, name: str) -> tuple:
    attrs = schema.relation(name).attr_names
    jt = schema.join_tree
    return trie_order(jt, name, attrs) if jt is not None and name in jt.nodes else attrs


def export_csv(db: Database, directory, schema: Schema | None = None) -> list:
    """Write every relation; rows follow the relation's trie attribute order."""
    schema = schema or db.schema
    if schema is None:
        raise CSVError("exporting needs a schema")
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in schema.relations:
        attrs = schema.relation(name).attr_names
        order = _row_order(schema, name)
        rel = db[name] if name in db else None
        tuples = sorted(rel.data.items() if rel is not None else (),
                        key=lambda kv: tuple(sort_key(kv[0].get(a)) for a in order))
        path = out / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(attrs)
            for t, m in tuples:
                if not isinstance(m, int) or m < 0:
                    raise CSVError(f"relation {name} has non-integer multiplicity {m!r}")
                row = [_fmt(t.get(a)) for a in attrs]
                for _ in range(m):
                    w.writerow(row)
        written.append(path)
    return written


def load_csv(directory, schema: Schema) -> Database:
    base = Path(directory)
    if not base.is_dir():
        raise CSVError(f"database directory not found: {base}")
    db = Database(schema=schema)
    for name, rs in schema.relations.items():
        path = base / f"{name}.csv"
        if not path.exists():
            raise CSVError(f"missing file {path} for relation {name}")
        attrs = rs.attr_names
        with open(path, newline="", encoding="utf-8") as fh:
            rows = csv.reader(fh)
            header = next(rows, None)
            if header is None:
                raise CSVError(f"{path}: empty file, expected a header row")
            header = [h.strip() for h in header]
            for a in attrs:
                if a not in header:
                    raise CSVError(f"{path}: missing column {a!r}")
            for h in header:
                if h not in attrs:
                    raise CSVError(f"{path}: unexpected column {h!r}")
            cols = [header.index(a) for a in attrs]
            parsers = [_PARSERS.get(rs.attr_type(a), str) for a in attrs]
            counts: Counter = Counter()
            for lineno, row in enumerate(rows, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise CSVError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
                vals = []
                for a, c, parse in zip(attrs, cols, parsers):
                    try:
                        vals.append(parse(row[c]))
                    except ValueError:
                        raise CSVError(f"{path}:{lineno}: cannot parse {row[c]!r} in column {a!r}") from None
                counts[Record(zip(attrs, vals))] += 1
        db.add(name, dict(counts))
    return db
