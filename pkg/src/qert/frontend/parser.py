"""Lexer and recursive-descent parser for qGCL source files."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (Case, Diagnostic, Init, OpDef, Pos, Program, QgclSyntaxError, Skip,
                     SourceFile, UnitaryApp, VarDecl, While, seq)

KEYWORDS = {
    "var", "bool", "int", "qubits", "define", "matrix", "measurement", "builtin", "on",
    "skip", "case", "of", "end", "while", "do", "od",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<ket>\|(?:\d+|\++)>)
  | (?P<assign>:=)
  | (?P<mulassign>\*=)
  | (?P<arrow>->)
  | (?P<number>-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[;:\[\]{}(),=])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, int, number, ket, or the punctuation text itself
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise QgclSyntaxError(Diagnostic("error", line, col, "E_LEX",
                                             f"unexpected character {source[pos]!r}"))
        kind = m.lastgroup
        text = m.group()
        if kind == "ident" and text in KEYWORDS:
            tokens.append(Token("keyword", text, line, col))
        elif kind == "ident":
            tokens.append(Token("ident", text, line, col))
        elif kind == "number":
            is_int = re.fullmatch(r"\d+", text) is not None
            tokens.append(Token("int" if is_int else "number", text, line, col))
        elif kind == "ket":
            tokens.append(Token("ket", text[1:-1], line, col))
        elif kind in ("assign", "mulassign", "arrow", "punct"):
            tokens.append(Token(text, text, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _describe(tok: Token) -> str:
    return "end of input" if tok.kind == "eof" else repr(tok.text)


class Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_kw(self, word: str) -> bool:
        return self.at("keyword", word)

    def error(self, expected: set[str]):
        t = self.tok
        exp = ", ".join(sorted(expected))
        raise QgclSyntaxError(
            Diagnostic("error", t.line, t.col, "E_PARSE", f"expected {exp} but found {_describe(t)}"),
            frozenset(expected))

    def expect(self, kind: str, text: str | None = None) -> Token:
        if not self.at(kind, text):
            self.error({text or kind})
        t = self.tok
        self.i += 1
        return t

    def expect_kw(self, word: str) -> Token:
        return self.expect("keyword", word)

    def pos(self) -> Pos:
        return Pos(self.tok.line, self.tok.col)

    # -- file level
    def parse_file(self) -> SourceFile:
        decls, defs = [], []
        while self.at_kw("var") or self.at_kw("define"):
            if self.at_kw("var"):
                decls.append(self.parse_var())
            else:
                defs.append(self.parse_define())
        body = self.parse_stmts()
        if not self.at("eof"):
            self.error({";", "end of input"})
        return SourceFile(tuple(decls), tuple(defs), body)

    def parse_var(self) -> VarDecl:
        p = self.pos()
        self.expect_kw("var")
        name = self.expect("ident").text
        self.expect(":")
        if self.at_kw("bool"):
            self.i += 1
            decl = VarDecl(name, "bool", None, p)
        elif self.at_kw("int") or self.at_kw("qubits"):
            kind = self.tok.text
            self.i += 1
            self.expect("[")
            size = int(self.expect("int").text)
            self.expect("]")
            decl = VarDecl(name, kind, size, p)
        else:
            self.error({"bool", "int", "qubits"})
        self.expect(";")
        return decl

    def parse_define(self) -> OpDef:
        p = self.pos()
        self.expect_kw("define")
        name = self.expect("ident").text
        self.expect(":=")
        if self.at_kw("matrix"):
            self.i += 1
            kind, payload = "matrix", self.parse_matrix()
        elif self.at_kw("measurement"):
            self.i += 1
            self.expect("{")
            items = []
            while True:
                m = int(self.expect("int").text)
                self.expect(":")
                items.append((m, self.parse_matrix()))
                if self.at(","):
                    self.i += 1
                    continue
                break
            self.expect("}")
            kind, payload = "measurement", tuple(items)
        elif self.at_kw("builtin"):
            self.i += 1
            bname = self.expect("ident").text
            params = []
            if self.at("("):
                self.i += 1
                params.append(int(self.expect("int").text))
                while self.at(","):
                    self.i += 1
                    params.append(int(self.expect("int").text))
                self.expect(")")
            kind, payload = "builtin", (bname, tuple(params))
        else:
            self.error({"matrix", "measurement", "builtin"})
        on = None
        if self.at_kw("on"):
            self.i += 1
            self.expect("[")
            dims = [int(self.expect("int").text)]
            while self.at(","):
                self.i += 1
                dims.append(int(self.expect("int").text))
            self.expect("]")
            on = tuple(dims)
        self.expect(";")
        return OpDef(name, kind, payload, on, p)

    def parse_matrix(self):
        """Row-major list of rows of ``[re, im]`` pairs."""
        value = self.parse_json_list()
        try:
            return tuple(tuple(complex(float(re_), float(im)) for re_, im in row) for row in value)
        except (TypeError, ValueError):
            t = self.tokens[self.i - 1]
            raise QgclSyntaxError(Diagnostic("error", t.line, t.col, "E_PARSE",
                                             "matrix literal must be a list of rows of [re, im] pairs"),
                                  frozenset({"matrix literal"}))

    def parse_json_list(self):
        self.expect("[")
        items = []
        if not self.at("]"):
            while True:
                if self.at("["):
                    items.append(self.parse_json_list())
                elif self.at("int") or self.at("number"):
                    items.append(float(self.tok.text))
                    self.i += 1
                else:
                    self.error({"[", "number"})
                if self.at(","):
                    self.i += 1
                    continue
                break
        self.expect("]")
        return items

    # -- statements
    def parse_stmts(self) -> Program:
        stmts = [self.parse_stmt()]
        while self.at(";"):
            self.i += 1
            # a trailing ';' is allowed before end/od/eof; an int starts the next case branch
            if self.at("eof") or self.at_kw("end") or self.at_kw("od") or self.at("int"):
                break
            stmts.append(self.parse_stmt())
        return seq(*stmts)

    def parse_targets(self) -> tuple[str, ...]:
        self.expect("[")
        names = [self.expect("ident").text]
        while self.at(","):
            self.i += 1
            names.append(self.expect("ident").text)
        self.expect("]")
        return tuple(names)

    def parse_stmt(self) -> Program:
        p = self.pos()
        if self.at_kw("skip"):
            self.i += 1
            return Skip(p)
        if self.at("ident") and self.peek().kind == ":=":
            var = self.tok.text
            self.i += 2
            ket = self.expect("ket").text
            if ket.isdigit():
                ket = str(int(ket))
            return Init(var, ket, p)
        if self.at("["):
            targets = self.parse_targets()
            self.expect("*=")
            label = self.expect("ident").text
            return UnitaryApp(label, targets, p)
        if self.at_kw("case"):
            self.i += 1
            label = self.expect("ident").text
            targets = self.parse_targets()
            self.expect_kw("of")
            branches = []
            while self.at("int"):
                m = int(self.tok.text)
                self.i += 1
                self.expect("->")
                branches.append((m, self.parse_stmts()))
            if not branches:
                self.error({"outcome"})
            self.expect_kw("end")
            return Case(label, targets, tuple(branches), p)
        if self.at_kw("while"):
            self.i += 1
            label = self.expect("ident").text
            targets = self.parse_targets()
            self.expect("=")
            one = self.expect("int")
            if one.text != "1":
                raise QgclSyntaxError(Diagnostic("error", one.line, one.col, "E_PARSE",
                                                 "loop guard must test outcome 1"), frozenset({"1"}))
            self.expect_kw("do")
            body = self.parse_stmts()
            self.expect_kw("od")
            return While(label, targets, body, p)
        self.error({"skip", "case", "while", "[", "identifier"})


def parse(source: str) -> SourceFile:
    """Parse a complete ``.qgcl`` source file."""
    return Parser(source).parse_file()


def parse_program(source: str) -> Program:
    """Parse a bare statement sequence (no declarations)."""
    return parse(source).body
