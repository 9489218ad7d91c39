"""Type lattice of the statically-typed dialect."""

from __future__ import annotations

from dataclasses import dataclass


class IfaqType:
    __slots__ = ()


@dataclass(frozen=True)
class Scalar(IfaqType):
    kind: str  # Int | Real | String | Enum | Bool | Field

    def __str__(self):
        return self.kind


@dataclass(frozen=True)
class Hot(IfaqType):
    """One-hot encoding of a categorical type; carried but never constructed."""

    n: int
    of: Scalar

    def __str__(self):
        return f"Hot({self.n}, {self.of})"


@dataclass(frozen=True)
class RecordT(IfaqType):
    fields: tuple  # sorted tuple[tuple[str, IfaqType], ...]

    def get(self, name: str):
        for n, t in self.fields:
            if n == name:
                return t
        return None

    def __str__(self):
        return "{" + ", ".join(f"{n}: {t}" for n, t in self.fields) + "}"


@dataclass(frozen=True)
class VariantT(IfaqType):
    fields: tuple

    def __str__(self):
        return "<" + ", ".join(f"{n}: {t}" for n, t in self.fields) + ">"


@dataclass(frozen=True)
class DictT(IfaqType):
    key: IfaqType
    value: IfaqType

    def __str__(self):
        return f"Dict({self.key}, {self.value})"


@dataclass(frozen=True)
class SetT(IfaqType):
    elem: IfaqType

    def __str__(self):
        return f"Set({self.elem})"


INT = Scalar("Int")
REAL = Scalar("Real")
BOOL = Scalar("Bool")
STRING = Scalar("String")
FIELD = Scalar("Field")

SCALAR_NAMES = {"int": INT, "real": REAL, "bool": BOOL, "string": STRING, "field": FIELD,
                "enum": Scalar("Enum")}


def record_type(fields) -> RecordT:
    return RecordT(tuple(sorted(fields, key=lambda f: f[0])))


def is_numeric(t: IfaqType) -> bool:
    return t in (INT, REAL, BOOL)
