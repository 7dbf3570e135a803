"""qGCL abstract syntax, diagnostics and the pretty-printer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


@dataclass(frozen=True)
class Pos:
    line: int = 0
    col: int = 0


_NOPOS = Pos()


def _pos():
    return field(default=_NOPOS, compare=False, repr=False)


@dataclass(frozen=True)
class Skip:
    pos: Pos = _pos()


@dataclass(frozen=True)
class Init:
    """``q := |ket>``; ``ket`` is a basis index (``"3"``) or a run of ``+``."""

    var: str
    ket: str
    pos: Pos = _pos()

    @property
    def label(self) -> str:
        return f"|{self.ket}>"

    @property
    def is_sugar(self) -> bool:
        return self.ket.startswith("+")


@dataclass(frozen=True)
class UnitaryApp:
    label: str
    targets: tuple[str, ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class Seq:
    first: "Program"
    second: "Program"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Case:
    label: str
    targets: tuple[str, ...]
    branches: tuple[tuple[int, "Program"], ...]
    pos: Pos = _pos()

    def branch(self, m: int) -> "Program":
        for mid, body in self.branches:
            if mid == m:
                return body
        raise KeyError(m)


@dataclass(frozen=True)
class While:
    label: str
    targets: tuple[str, ...]
    body: "Program"
    pos: Pos = _pos()


Program = Union[Skip, Init, UnitaryApp, Seq, Case, While]


@dataclass(frozen=True)
class VarDecl:
    name: str
    kind: str  # "bool" | "int" | "qubits"
    size: int | None = None
    pos: Pos = _pos()

    @property
    def dim(self) -> int:
        if self.kind == "bool":
            return 2
        if self.kind == "qubits":
            return 2 ** self.size
        return self.size


Matrix = tuple[tuple[complex, ...], ...]


@dataclass(frozen=True)
class OpDef:
    """``define name := ...``.

    ``kind`` is ``matrix`` (payload: Matrix), ``measurement`` (payload: tuple of
    ``(outcome, Matrix)``) or ``builtin`` (payload: ``(builtin_name, params)``).
    """

    name: str
    kind: str
    payload: object
    on: tuple[int, ...] | None = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class SourceFile:
    vars: tuple[VarDecl, ...]
    defs: tuple[OpDef, ...]
    body: Program


def seq(*stmts: Program) -> Program:
    """Right-nested sequence, the shape the parser produces."""
    if not stmts:
        raise ValueError("empty statement sequence")
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(s, out)
    return out


def flatten(p: Program) -> list[Program]:
    if isinstance(p, Seq):
        return flatten(p.first) + flatten(p.second)
    return [p]


def contains_loop(p: Program) -> bool:
    if isinstance(p, While):
        return True
    if isinstance(p, Seq):
        return contains_loop(p.first) or contains_loop(p.second)
    if isinstance(p, Case):
        return any(contains_loop(b) for _, b in p.branches)
    return False


def walk(p: Program):
    yield p
    if isinstance(p, Seq):
        yield from walk(p.first)
        yield from walk(p.second)
    elif isinstance(p, Case):
        for _, b in p.branches:
            yield from walk(b)
    elif isinstance(p, While):
        yield from walk(p.body)


# -- diagnostics --------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    severity: str
    line: int
    col: int
    code: str
    message: str

    def to_dict(self) -> dict:
        return {"severity": self.severity, "line": self.line, "col": self.col,
                "code": self.code, "message": self.message}


class QgclError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(f"{d.line}:{d.col}: {d.code}: {d.message}" for d in self.diagnostics))


class QgclSyntaxError(QgclError):
    def __init__(self, diagnostic: Diagnostic, expected: frozenset[str] = frozenset()):
        self.expected = expected
        super().__init__([diagnostic])


class ElaborationError(QgclError):
    pass


# -- pretty printer -----------------------------------------------------------

def _num(x: float) -> str:
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def format_matrix(mat) -> str:
    rows = []
    for row in mat:
        rows.append("[" + ", ".join(f"[{_num(complex(z).real)}, {_num(complex(z).imag)}]" for z in row) + "]")
    return "[" + ", ".join(rows) + "]"


def _targets(ts) -> str:
    return "[" + ", ".join(ts) + "]"


def _stmts(p: Program, indent: int) -> list[str]:
    lines: list[str] = []
    parts = flatten(p)
    for i, s in enumerate(parts):
        sub = _stmt(s, indent)
        if i < len(parts) - 1:
            sub[-1] += ";"
        lines.extend(sub)
    return lines


def _stmt(s: Program, indent: int) -> list[str]:
    pad = "  " * indent
    if isinstance(s, Skip):
        return [pad + "skip"]
    if isinstance(s, Init):
        return [f"{pad}{s.var} := |{s.ket}>"]
    if isinstance(s, UnitaryApp):
        return [f"{pad}{_targets(s.targets)} *= {s.label}"]
    if isinstance(s, Case):
        lines = [f"{pad}case {s.label}{_targets(s.targets)} of"]
        for i, (m, body) in enumerate(s.branches):
            lines.append(f"{pad}  {m} ->")
            lines.extend(_stmts(body, indent + 2))
            if i < len(s.branches) - 1:
                lines[-1] += ";"
        lines.append(pad + "end")
        return lines
    if isinstance(s, While):
        lines = [f"{pad}while {s.label}{_targets(s.targets)} = 1 do"]
        lines.extend(_stmts(s.body, indent + 1))
        lines.append(pad + "od")
        return lines
    if isinstance(s, Seq):
        return _stmts(s, indent)
    raise TypeError(f"not a program node: {s!r}")


def _decl(v: VarDecl) -> str:
    if v.kind == "bool":
        return f"var {v.name} : bool;"
    return f"var {v.name} : {v.kind}[{v.size}];"


def _def(d: OpDef) -> str:
    on = "" if d.on is None else " on [" + ", ".join(str(x) for x in d.on) + "]"
    if d.kind == "matrix":
        rhs = "matrix " + format_matrix(d.payload)
    elif d.kind == "measurement":
        rhs = "measurement { " + ", ".join(f"{m}: {format_matrix(mat)}" for m, mat in d.payload) + " }"
    else:
        name, params = d.payload
        rhs = "builtin " + name + ("(" + ", ".join(str(p) for p in params) + ")" if params else "")
    return f"define {d.name} := {rhs}{on};"


def pretty(node) -> str:
    """Render a :class:`SourceFile` or bare program as parseable source."""
    if isinstance(node, SourceFile):
        head = [_decl(v) for v in node.vars] + [_def(d) for d in node.defs]
        body = _stmts(node.body, 0)
        return "\n".join(head + ([""] if head else []) + body) + "\n"
    return "\n".join(_stmts(node, 0)) + "\n"
