"""Runtime value domain of the core language.

Scalars are plain Python ``int``/``float``/``bool``/``str``. Field names,
records, variants, sets and dictionaries get small immutable wrappers so that
they are hashable (records are used as relation keys) and carry the canonical
total order used for every iteration.
"""

from __future__ import annotations

import math
from typing import Any, Iterable, Iterator


class RuntimeFault(Exception):
    """Dynamic type fault raised by ring operations on incompatible values."""


class FieldV:
    """A field name used as a first-class value (type ``Field``)."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __eq__(self, other):
        return isinstance(other, FieldV) and other.name == self.name

    def __hash__(self):
        return hash(("FieldV", self.name))

    def __repr__(self):
        return f"`{self.name}`"


class Record:
    """Immutable record; fields are kept sorted by name."""

    __slots__ = ("names", "vals", "_hash")

    def __init__(self, fields: Iterable[tuple[str, Any]] | dict):
        items = sorted(fields.items() if isinstance(fields, dict) else fields,
                       key=lambda kv: kv[0])
        self.names = tuple(k for k, _ in items)
        self.vals = tuple(v for _, v in items)
        if len(set(self.names)) != len(self.names):
            raise RuntimeFault(f"duplicate record fields {self.names}")
        self._hash = None

    @classmethod
    def _raw(cls, names: tuple, vals: tuple) -> "Record":
        r = cls.__new__(cls)
        r.names = names
        r.vals = vals
        r._hash = None
        return r

    def get(self, name: str) -> Any:
        try:
            return self.vals[self.names.index(name)]
        except ValueError:
            raise RuntimeFault(f"record has no field {name!r} (fields: {self.names})") from None

    def has(self, name: str) -> bool:
        return name in self.names

    def items(self):
        return zip(self.names, self.vals)

    def __eq__(self, other):
        return isinstance(other, Record) and self.names == other.names and self.vals == other.vals

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.names, self.vals))
        return self._hash

    def __repr__(self):
        return "{" + ", ".join(f"{n}={v!r}" for n, v in self.items()) + "}"


class Variant:
    """A partial record carrying exactly one field."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, value: Any):
        self.name = name
        self.value = value

    def __eq__(self, other):
        return isinstance(other, Variant) and (self.name, self.value) == (other.name, other.value)

    def __hash__(self):
        return hash(("Variant", self.name, self.value))

    def __repr__(self):
        return f"<{self.name}={self.value!r}>"


class SetV:
    """Ordered set; ``items`` is in canonical order.

    ``relation`` is set when the set is the domain of a base relation (or of
    a trie leaf level), which lets the evaluators count tuple visits.
    """

    __slots__ = ("items", "relation", "_hash")

    def __init__(self, items: Iterable[Any], relation: str | None = None, *, presorted=False):
        if presorted:
            self.items = tuple(items)
        else:
            self.items = tuple(sorted(set(items), key=sort_key))
        self.relation = relation
        self._hash = None

    def __iter__(self) -> Iterator[Any]:
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __eq__(self, other):
        return isinstance(other, SetV) and self.items == other.items

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(("SetV", self.items))
        return self._hash

    def __repr__(self):
        return "[[" + ", ".join(map(repr, self.items)) + "]]"


def _is_num_zero(v) -> bool:
    return type(v) in (int, float) and v == 0


class DictV:
    """Finite map from keys to ring values.

    Equality ignores entries whose value is a numeric zero, so a dictionary
    with an explicit zero entry equals the one without it.
    """

    __slots__ = ("data", "relation", "_keys", "_dom", "_hash")

    def __init__(self, data: dict | Iterable[tuple[Any, Any]] = (), relation: str | None = None):
        self.data = data if isinstance(data, dict) else dict(data)
        self.relation = relation
        self._keys = None
        self._dom = None
        self._hash = None

    def keys(self) -> tuple:
        """Keys in canonical order (cached)."""
        if self._keys is None:
            self._keys = tuple(sorted(self.data, key=sort_key))
        return self._keys

    def dom(self) -> SetV:
        if self._dom is None:
            self._dom = SetV(self.keys(), self.relation, presorted=True)
        return self._dom

    def items(self):
        d = self.data
        return [(k, d[k]) for k in self.keys()]

    def __len__(self):
        return len(self.data)

    def __contains__(self, key):
        return key in self.data

    def _support(self) -> dict:
        return {k: v for k, v in self.data.items() if not _is_num_zero(v)}

    def __eq__(self, other):
        return isinstance(other, DictV) and self._support() == other._support()

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(("DictV", frozenset(self._support().items())))
        return self._hash

    def __repr__(self):
        return "{{" + ", ".join(f"{k!r} -> {v!r}" for k, v in self.items()) + "}}"


# --------------------------------------------------------------------------
# canonical order: numeric < bool < string < field < record < variant < set < dict

def sort_key(v: Any):
    t = type(v)
    if t is bool:
        return (1, v)
    if t is int or t is float:
        return (0, v)
    if t is str:
        return (2, v)
    if t is FieldV:
        return (3, v.name)
    if t is Record:
        return (4, tuple((n, sort_key(x)) for n, x in zip(v.names, v.vals)))
    if t is Variant:
        return (5, v.name, sort_key(v.value))
    if t is SetV:
        return (6, tuple(sort_key(x) for x in v.items))
    if t is DictV:
        return (7, tuple((sort_key(k), sort_key(x)) for k, x in v.items()))
    raise RuntimeFault(f"not an IFAQ value: {v!r}")


def is_number(v) -> bool:
    t = type(v)
    return t is int or t is float or t is bool


class OpCounter:
    """Minimal counter sink used by the ring operations."""

    __slots__ = ("arithmeticOps", "dictInserts")

    def __init__(self):
        self.arithmeticOps = 0
        self.dictInserts = 0


_NULL = OpCounter()


# --------------------------------------------------------------------------
# ring operations

def ring_add(a, b, c: OpCounter = _NULL):
    ta, tb = type(a), type(b)
    if (ta is int or ta is float or ta is bool) and (tb is int or tb is float or tb is bool):
        c.arithmeticOps += 1
        return a + b
    # a literal integer zero acts as the identity of every ring
    if ta is int and a == 0:
        return b
    if tb is int and b == 0:
        return a
    if ta is Record and tb is Record:
        if a.names != b.names:
            raise RuntimeFault(f"adding records with different fields {a.names} / {b.names}")
        return Record._raw(a.names, tuple(ring_add(x, y, c) for x, y in zip(a.vals, b.vals)))
    if ta is DictV and tb is DictV:
        out = dict(a.data)
        for k, v in b.data.items():
            c.dictInserts += 1
            out[k] = ring_add(out[k], v, c) if k in out else v
        return DictV(out)
    if ta is SetV and tb is SetV:
        return SetV(a.items + b.items)
    raise RuntimeFault(f"cannot add {_kind(a)} and {_kind(b)}")


def ring_mul(a, b, c: OpCounter = _NULL):
    ta, tb = type(a), type(b)
    an = ta is int or ta is float or ta is bool
    bn = tb is int or tb is float or tb is bool
    if an and bn:
        c.arithmeticOps += 1
        return a * b
    if an:
        return scale(b, a, c)
    if bn:
        return scale(a, b, c)
    if ta is Record and tb is Record:
        if a.names != b.names:
            raise RuntimeFault(f"multiplying records with different fields {a.names} / {b.names}")
        return Record._raw(a.names, tuple(ring_mul(x, y, c) for x, y in zip(a.vals, b.vals)))
    raise RuntimeFault(f"cannot multiply {_kind(a)} and {_kind(b)}")


def scale(v, s, c: OpCounter = _NULL):
    """Multiply structured value ``v`` by scalar ``s``."""
    t = type(v)
    if t is int or t is float or t is bool:
        c.arithmeticOps += 1
        return v * s
    if t is Record:
        return Record._raw(v.names, tuple(scale(x, s, c) for x in v.vals))
    if t is DictV:
        return DictV({k: scale(x, s, c) for k, x in v.data.items()})
    raise RuntimeFault(f"cannot scale {_kind(v)}")


def ring_neg(v, c: OpCounter = _NULL):
    t = type(v)
    if t is int or t is float or t is bool:
        c.arithmeticOps += 1
        return -v
    if t is Record:
        return Record._raw(v.names, tuple(ring_neg(x, c) for x in v.vals))
    if t is DictV:
        return DictV({k: ring_neg(x, c) for k, x in v.data.items()})
    raise RuntimeFault(f"cannot negate {_kind(v)}")


def zero_like(v):
    """Additive identity with the same shape as ``v``."""
    t = type(v)
    if t is float:
        return 0.0
    if t is int or t is bool:
        return 0
    if t is Record:
        return Record._raw(v.names, tuple(zero_like(x) for x in v.vals))
    if t is DictV:
        return DictV({})
    if t is SetV:
        return SetV(())
    raise RuntimeFault(f"no additive identity for {_kind(v)}")


def drop_zeros(d: DictV) -> DictV:
    """Finite-support form of a dictionary produced by summation."""
    if any(_is_num_zero(v) for v in d.data.values()):
        return DictV({k: v for k, v in d.data.items() if not _is_num_zero(v)}, d.relation)
    return d


def _kind(v) -> str:
    return type(v).__name__


def values_close(a, b, rel: float = 0.0, abs_tol: float = 0.0) -> bool:
    """Structural equality with a relative tolerance on floats."""
    if is_number(a) and is_number(b):
        if rel == 0.0 and abs_tol == 0.0:
            return a == b
        return math.isclose(a, b, rel_tol=rel, abs_tol=abs_tol)
    if type(a) is not type(b):
        if type(a) is int and a == 0:
            return values_close(zero_like(b), b, rel, abs_tol)
        if type(b) is int and b == 0:
            return values_close(a, zero_like(a), rel, abs_tol)
        return False
    if isinstance(a, Record):
        return a.names == b.names and all(values_close(x, y, rel, abs_tol) for x, y in zip(a.vals, b.vals))
    if isinstance(a, DictV):
        sa, sb = a._support(), b._support()
        keys = set(sa) | set(sb)
        return all(values_close(sa.get(k, 0), sb.get(k, 0), rel, abs_tol) for k in keys)
    if isinstance(a, Variant):
        return a.name == b.name and values_close(a.value, b.value, rel, abs_tol)
    return a == b


def json_close(a, b, rel: float = 0.0) -> bool:
    """values_close over JSON views, so a record and a dictionary keyed by the
    same field names compare equal."""
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(json_close(a[k], b[k], rel) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(json_close(x, y, rel) for x, y in zip(a, b))
    if is_number(a) and is_number(b):
        return a == b if rel == 0.0 else math.isclose(a, b, rel_tol=rel)
    return a == b


def to_json(v: Any):
    """JSON-ready view; dictionaries keyed only by field names become objects."""
    t = type(v)
    if t is bool or t is int or t is str:
        return v
    if t is float:
        return v if math.isfinite(v) else repr(v)
    if t is FieldV:
        return {"field": v.name}
    if t is Record:
        return {n: to_json(x) for n, x in v.items()}
    if t is Variant:
        return {"variant": v.name, "value": to_json(v.value)}
    if t is SetV:
        return [to_json(x) for x in v.items]
    if t is DictV:
        keys = v.keys()
        if keys and all(type(k) is FieldV for k in keys):
            return {k.name: to_json(v.data[k]) for k in keys}
        return [[to_json(k), to_json(v.data[k])] for k in keys]
    raise RuntimeFault(f"not an IFAQ value: {v!r}")
