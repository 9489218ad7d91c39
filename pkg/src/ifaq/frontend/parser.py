"""Concrete syntax: tokenizer and recursive-descent parser.

Syntax summary::

    index T = trie(S, s, i);          -- trie index over a base relation
    let F = [[`i`, `s`]];             -- prelude binding
    theta <- lambda(f in F) 0.0;      -- loop state initialisation
    while (true) { theta <- ... }     -- loop
    theta                             -- result

Expressions use ``sum(x in e) e``, ``lambda(x in e) e``, ``let x = e in e``,
``if e then e else e``, ``dom(e)``, ``e(e)``, ``e(e ?? default)``, ``e.f``,
``e[e]``, ``{f = e}``, ``<f = e>``, ``{{k -> v}}``, ``[[e, ...]]`` and
field literals `` `f` ``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from ..ir.ast import (
    Add, BinOp, Const, DictBuild, DictLit, Dom, Expr, FieldDyn, FieldStatic, If,
    IndexDecl, Let, Loc, Lookup, Mul, Neg, Program, RecordLit, SetLit, Sum, UnOp,
    Var, VariantLit, UNOPS,
)
from ..ir.values import FieldV

KEYWORDS = {"let", "in", "sum", "lambda", "dom", "if", "then", "else", "while",
            "true", "false", "min", "index", "trie"} | set(UNOPS)


class ParseError(Exception):
    def __init__(self, message: str, loc: Loc | None = None, origin: str = "<inline>"):
        self.message = message
        self.loc = loc
        self.origin = origin
        where = f"{origin}:{loc}" if loc else origin
        super().__init__(f"{where}: {message}")


@dataclass
class SourceProgram:
    text: str
    origin: str = "<inline>"

    @classmethod
    def from_file(cls, path) -> "SourceProgram":
        return cls(Path(path).read_text(encoding="utf-8"), str(path))


@dataclass
class Token:
    kind: str  # num | str | field | ident | kw | op | eof
    text: str
    loc: Loc


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|--[^\n]*)
  | (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<field>`[A-Za-z_][A-Za-z0-9_]*`)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><-|->|==|<=|&&|\|\||\?\?|[-+*/(){}\[\],;=.<>])
""", re.VERBOSE)


def tokenize(text: str, origin: str = "<inline>") -> list[Token]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}",
                             Loc(line, pos - line_start + 1), origin)
        kind = m.lastgroup
        tok = m.group()
        loc = Loc(line, pos - line_start + 1)
        if kind != "ws":
            if kind == "ident" and tok in KEYWORDS:
                kind = "kw"
            toks.append(Token(kind, tok, loc))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rfind("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", Loc(line, pos - line_start + 1)))
    return toks


class Parser:
    def __init__(self, text: str, origin: str = "<inline>"):
        self.origin = origin
        self.toks = tokenize(text, origin)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def ident(self) -> str:
        t = self.tok
        if t.kind == "kw":
            self.error(f"reserved word {t.text!r} used as identifier")
        if t.kind != "ident":
            self.error(f"expected identifier, found {t.text or 'end of input'!r}")
        self.advance()
        return t.text

    def error(self, msg: str):
        raise ParseError(msg, self.tok.loc, self.origin)

    # -- programs
    def program(self) -> Program:
        prelude = []
        indexes = []
        loop_var = init = cond = step = None
        while self.at("index"):
            self.advance()
            name = self.ident()
            self.expect("=")
            self.expect("trie")
            self.expect("(")
            rel = self.ident()
            attrs = []
            while self.at(","):
                self.advance()
                attrs.append(self.ident())
            self.expect(")")
            self.expect(";")
            indexes.append(IndexDecl(name, rel, tuple(attrs)))
        while self.at("let"):
            loc = self.advance().loc
            var = self.ident()
            self.expect("=")
            rhs = self.expr()
            if self.at(";"):
                self.advance()
                prelude.append((var, rhs))
                continue
            self.expect("in")
            body = self.expr()
            return self._finish(prelude, indexes, None, None, None, None,
                                Let(var, rhs, body, loc=loc))
        if self.tok.kind == "ident" and self.peek().kind == "op" and self.peek().text == "<-":
            loop_var = self.ident()
            self.expect("<-")
            init = self.expr()
            self.expect(";")
            self.expect("while")
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            self.expect("{")
            name = self.ident()
            if name != loop_var:
                self.error(f"loop must update {loop_var!r}, not {name!r}")
            self.expect("<-")
            step = self.expr()
            if self.at(";"):
                self.advance()
            self.expect("}")
            if self.at(";"):
                self.advance()
        result = self.expr()
        return self._finish(prelude, indexes, loop_var, init, cond, step, result)

    def _finish(self, prelude, indexes, loop_var, init, cond, step, result) -> Program:
        if self.at(";"):
            self.advance()
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r} after program result")
        return Program(tuple(prelude), loop_var, init, cond, step, result, tuple(indexes))

    # -- expressions
    def expr(self) -> Expr:
        t = self.tok
        if t.kind == "kw":
            if t.text == "let":
                self.advance()
                var = self.ident()
                self.expect("=")
                val = self.expr()
                self.expect("in")
                return Let(var, val, self.expr(), loc=t.loc)
            if t.text in ("sum", "lambda"):
                self.advance()
                self.expect("(")
                var = self.ident()
                self.expect("in")
                coll = self.expr()
                self.expect(")")
                body = self.expr()
                cls = Sum if t.text == "sum" else DictBuild
                return cls(var, coll, body, loc=t.loc)
            if t.text == "if":
                self.advance()
                c = self.expr()
                self.expect("then")
                a = self.expr()
                self.expect("else")
                return If(c, a, self.expr(), loc=t.loc)
        return self.or_expr()

    def or_expr(self) -> Expr:
        e = self.and_expr()
        while self.at("||"):
            loc = self.advance().loc
            e = BinOp("||", e, self.and_expr(), loc=loc)
        return e

    def and_expr(self) -> Expr:
        e = self.cmp_expr()
        while self.at("&&"):
            loc = self.advance().loc
            e = BinOp("&&", e, self.cmp_expr(), loc=loc)
        return e

    def cmp_expr(self) -> Expr:
        e = self.add_expr()
        if self.at("==") or self.at("<") or self.at("<="):
            op = self.advance()
            e = BinOp(op.text, e, self.add_expr(), loc=op.loc)
            if self.at("==") or self.at("<") or self.at("<="):
                self.error("comparisons do not associate; add parentheses")
        return e

    def add_expr(self) -> Expr:
        e = self.mul_expr()
        while self.at("+") or self.at("-"):
            op = self.advance()
            r = self.mul_expr()
            e = Add(e, r, loc=op.loc) if op.text == "+" else Add(e, Neg(r, loc=op.loc), loc=op.loc)
        return e

    def mul_expr(self) -> Expr:
        e = self.unary()
        while self.at("*") or self.at("/"):
            op = self.advance()
            r = self.unary()
            e = Mul(e, r, loc=op.loc) if op.text == "*" else BinOp("/", e, r, loc=op.loc)
        return e

    def unary(self) -> Expr:
        if self.at("-"):
            loc = self.advance().loc
            if self.tok.kind == "num":
                return self.postfix(self._number(negate=True))
            return Neg(self.unary(), loc=loc)
        return self.postfix(self.atom())

    def _number(self, negate=False) -> Const:
        t = self.advance()
        txt = t.text
        v = float(txt) if any(ch in txt for ch in ".eE") else int(txt)
        return Const(-v if negate else v, loc=t.loc)

    def postfix(self, e: Expr) -> Expr:
        while True:
            if self.at("("):
                loc = self.advance().loc
                key = self.expr()
                default = None
                if self.at("??"):
                    self.advance()
                    default = self.expr()
                self.expect(")")
                e = Lookup(e, key, default, loc=loc)
            elif self.at("."):
                loc = self.advance().loc
                e = FieldStatic(e, self.ident(), loc=loc)
            elif self.at("["):
                loc = self.advance().loc
                f = self.expr()
                self.expect("]")
                e = FieldDyn(e, f, loc=loc)
            else:
                return e

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            return self._number()
        if t.kind == "str":
            self.advance()
            return Const(bytes(t.text[1:-1], "utf-8").decode("unicode_escape"), loc=t.loc)
        if t.kind == "field":
            self.advance()
            return Const(FieldV(t.text[1:-1]), loc=t.loc)
        if t.kind == "ident":
            self.advance()
            return Var(t.text, loc=t.loc)
        if t.kind == "kw":
            if t.text in ("true", "false"):
                self.advance()
                return Const(t.text == "true", loc=t.loc)
            if t.text in ("let", "sum", "lambda", "if"):
                return self.expr()
            if t.text == "dom":
                self.advance()
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return Dom(e, loc=t.loc)
            if t.text in UNOPS:
                self.advance()
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return UnOp(t.text, e, loc=t.loc)
            if t.text == "min":
                self.advance()
                self.expect("(")
                a = self.expr()
                self.expect(",")
                b = self.expr()
                self.expect(")")
                return BinOp("min", a, b, loc=t.loc)
            self.error(f"reserved word {t.text!r} cannot start an expression")
        if t.kind == "op":
            if t.text == "(":
                self.advance()
                e = self.expr()
                self.expect(")")
                return e
            if t.text == "{":
                self.advance()
                if self.at("{"):
                    self.advance()
                    return self._dict_lit(t.loc)
                return self._record_lit(t.loc)
            if t.text == "[":
                self.advance()
                self.expect("[")
                items = []
                if not self.at("]"):
                    items.append(self.expr())
                    while self.at(","):
                        self.advance()
                        items.append(self.expr())
                self.expect("]")
                self.expect("]")
                return SetLit(tuple(items), loc=t.loc)
            if t.text == "<":
                self.advance()
                name = self.ident()
                self.expect("=")
                e = self.add_expr()
                self.expect(">")
                return VariantLit(name, e, loc=t.loc)
        self.error(f"unexpected {t.text or 'end of input'!r}")

    def _dict_lit(self, loc) -> DictLit:
        items = []
        if not self.at("}"):
            while True:
                k = self.expr()
                self.expect("->")
                items.append((k, self.expr()))
                if not self.at(","):
                    break
                self.advance()
        self.expect("}")
        self.expect("}")
        return DictLit(tuple(items), loc=loc)

    def _record_lit(self, loc) -> RecordLit:
        fields = []
        if not self.at("}"):
            while True:
                floc = self.tok.loc
                name = self.ident()
                if any(n == name for n, _ in fields):
                    raise ParseError(f"duplicate record field {name!r}", floc, self.origin)
                self.expect("=")
                fields.append((name, self.expr()))
                if not self.at(","):
                    break
                self.advance()
        self.expect("}")
        return RecordLit(tuple(fields), loc=loc)


def parse(src: SourceProgram | str, origin: str = "<inline>") -> Program:
    if isinstance(src, SourceProgram):
        return Parser(src.text, src.origin).program()
    return Parser(src, origin).program()


def parse_expr(text: str) -> Expr:
    p = Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return e
