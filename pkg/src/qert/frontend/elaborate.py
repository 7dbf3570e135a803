"""Static checks and operator resolution for parsed qGCL sources."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..operators import (DEFAULT_TOL, MeasurementSet, OperatorError, StateSpaceLayout, Tolerances,
                         UnitaryOp, basis_vector)
from . import builtins as bi
from .parser import parse
from .syntax import (Case, Diagnostic, ElaborationError, Init, Pos, Program, Seq, Skip,
                     SourceFile, UnitaryApp, While, walk)

Operator = UnitaryOp | MeasurementSet


@dataclass(frozen=True)
class ElaboratedProgram:
    program: Program
    layout: StateSpaceLayout
    operators: dict[str, Operator] = field(hash=False)
    source: SourceFile | None = field(default=None, compare=False, hash=False)
    notes: tuple[str, ...] = ()

    def unitary(self, label: str) -> UnitaryOp:
        return self.operators[label]

    def measurement(self, label: str) -> MeasurementSet:
        return self.operators[label]

    def init_vector(self, node: Init) -> np.ndarray:
        d = self.layout.dim(node.var)
        if node.is_sugar:
            return np.full(d, 1 / math.sqrt(d), dtype=complex)
        return basis_vector(d, int(node.ket))

    def with_program(self, program: Program) -> "ElaboratedProgram":
        """Same layout and operator table, different statement (e.g. a loop in the body)."""
        return replace(self, program=program)


class _Elaborator:
    def __init__(self, src: SourceFile, tol: Tolerances):
        self.src = src
        self.tol = tol
        self.diags: list[Diagnostic] = []
        self.dims: dict[str, int] = {}
        self.ops: dict[str, Operator] = {}
        self.on: dict[str, tuple[int, ...]] = {}
        self.notes: list[str] = []

    def err(self, pos: Pos, code: str, msg: str):
        self.diags.append(Diagnostic("error", pos.line, pos.col, code, msg))

    def run(self) -> ElaboratedProgram:
        for v in self.src.vars:
            if v.name in self.dims:
                self.err(v.pos, "E_DUPLICATE", f"variable {v.name!r} declared twice")
                continue
            if v.kind == "int" and v.size < 2:
                self.err(v.pos, "E_DIMENSION", f"int variable {v.name!r} needs dimension >= 2")
                continue
            if v.kind == "qubits" and v.size < 1:
                self.err(v.pos, "E_DIMENSION", f"qubits variable {v.name!r} needs at least one qubit")
                continue
            self.dims[v.name] = v.dim
        for d in self.src.defs:
            if d.name in self.ops:
                self.err(d.pos, "E_DUPLICATE", f"operator {d.name!r} defined twice")
                continue
            op = self.define(d)
            if op is not None:
                self.ops[d.name] = op
                if d.on is not None:
                    self.on[d.name] = d.on
        self.check(self.src.body)
        if self.diags:
            raise ElaborationError(self.diags)
        layout = StateSpaceLayout(tuple(self.dims.items()))
        used = {n.label for n in walk(self.src.body) if isinstance(n, (UnitaryApp, Case, While))}
        ops = {k: v for k, v in self.ops.items() if k in used}
        return ElaboratedProgram(self.src.body, layout, ops, self.src, tuple(self.notes))

    def define(self, d) -> Operator | None:
        try:
            if d.kind == "builtin":
                name, params = d.payload
                op = replace(bi.builtin(name, *params), label=d.name)
            elif d.kind == "matrix":
                op = UnitaryOp(d.name, np.array(d.payload, dtype=complex))
            else:
                op = MeasurementSet(d.name, tuple((m, np.array(mat, dtype=complex)) for m, mat in d.payload))
        except bi.UnknownBuiltin as e:
            self.err(d.pos, "E_UNKNOWN_OPERATOR", str(e))
            return None
        except (OperatorError, ValueError) as e:
            self.err(d.pos, "E_DIMENSION", f"operator {d.name!r}: {e}")
            return None
        return self.validate(d.pos, op, d.on)

    def validate(self, pos: Pos, op: Operator, on) -> Operator | None:
        mats = [op.matrix] if isinstance(op, UnitaryOp) else [m for _, m in op.outcomes]
        for mat in mats:
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape != mats[0].shape:
                self.err(pos, "E_DIMENSION", f"operator {op.label!r} must consist of equal square matrices")
                return None
        if on is not None and math.prod(on) != mats[0].shape[0]:
            self.err(pos, "E_DIMENSION",
                     f"operator {op.label!r} has dimension {mats[0].shape[0]} but is declared on {list(on)}")
            return None
        if isinstance(op, UnitaryOp):
            err = op.unitarity_error()
            if err >= self.tol.norm:
                self.err(pos, "E_NONUNITARY", f"operator {op.label!r} is not unitary (|U†U - I|max = {err:.3g})")
                return None
        else:
            err = op.normalization_error()
            if err >= self.tol.norm:
                self.err(pos, "E_NORMALIZATION",
                         f"measurement {op.label!r} violates the normalization condition "
                         f"(|ΣM†M - I|max = {err:.3g})")
                return None
        return op

    def lookup(self, pos: Pos, label: str, kind: type) -> Operator | None:
        op = self.ops.get(label)
        if op is None and label in bi.PARAMETERLESS:
            op = bi.builtin(label)
            self.ops[label] = op
        if op is None:
            if any(d.name == label for d in self.src.defs):
                return None  # already reported at its definition
            self.err(pos, "E_UNKNOWN_OPERATOR", f"unknown operator {label!r}")
            return None
        if not isinstance(op, kind):
            want = "unitary" if kind is UnitaryOp else "measurement"
            self.err(pos, "E_KIND", f"operator {label!r} is not a {want}")
            return None
        return op

    def targets(self, pos: Pos, targets, op: Operator | None) -> None:
        ok = True
        for t in targets:
            if t not in self.dims:
                self.err(pos, "E_UNDECLARED", f"undeclared variable {t!r}")
                ok = False
        if len(set(targets)) != len(targets):
            self.err(pos, "E_DIMENSION", f"repeated target variable in {list(targets)}")
            ok = False
        if not ok or op is None:
            return
        dims = tuple(self.dims[t] for t in targets)
        want = op.dim
        if math.prod(dims) != want or (op.label in self.on and self.on[op.label] != dims):
            self.err(pos, "E_DIMENSION",
                     f"operator {op.label!r} of dimension {want} applied to {list(targets)} with dimensions {list(dims)}")

    def check(self, p: Program) -> None:
        if isinstance(p, Skip):
            return
        if isinstance(p, Init):
            if p.var not in self.dims:
                self.err(p.pos, "E_UNDECLARED", f"undeclared variable {p.var!r}")
                return
            d = self.dims[p.var]
            if p.is_sugar:
                if 2 ** len(p.ket) != d:
                    self.err(p.pos, "E_DIMENSION", f"ket |{p.ket}> needs dimension {2 ** len(p.ket)}, "
                                                   f"variable {p.var!r} has {d}")
                else:
                    self.notes.append(f"{p.pos.line}:{p.pos.col}: {p.var} := |{p.ket}> expands to "
                                      f"{p.var} := |0>; [{p.var}] *= H^{len(p.ket)}, costed as label '{p.label}'")
            elif int(p.ket) >= d:
                self.err(p.pos, "E_DIMENSION", f"basis index {p.ket} out of range for {p.var!r} (dimension {d})")
            return
        if isinstance(p, UnitaryApp):
            self.targets(p.pos, p.targets, self.lookup(p.pos, p.label, UnitaryOp))
            return
        if isinstance(p, Seq):
            self.check(p.first)
            self.check(p.second)
            return
        if isinstance(p, Case):
            op = self.lookup(p.pos, p.label, MeasurementSet)
            self.targets(p.pos, p.targets, op)
            ids = [m for m, _ in p.branches]
            if op is not None:
                missing = sorted(set(op.ids) - set(ids))
                extra = sorted(set(ids) - set(op.ids))
                dup = sorted({m for m in ids if ids.count(m) > 1})
                if missing or extra or dup:
                    parts = []
                    if missing:
                        parts.append(f"missing outcomes {missing}")
                    if extra:
                        parts.append(f"unknown outcomes {extra}")
                    if dup:
                        parts.append(f"repeated outcomes {dup}")
                    self.err(p.pos, "E_COVERAGE", f"case on {p.label!r}: " + ", ".join(parts))
            for _, body in p.branches:
                self.check(body)
            return
        if isinstance(p, While):
            op = self.lookup(p.pos, p.label, MeasurementSet)
            self.targets(p.pos, p.targets, op)
            if op is not None and sorted(op.ids) != [0, 1]:
                self.err(p.pos, "E_GUARD", f"loop guard {p.label!r} must have outcomes exactly {{0, 1}}")
            self.check(p.body)
            return
        raise TypeError(f"not a program node: {p!r}")


def elaborate(src: SourceFile, tol: Tolerances = DEFAULT_TOL) -> ElaboratedProgram:
    return _Elaborator(src, tol).run()


def load(text: str, tol: Tolerances = DEFAULT_TOL) -> ElaboratedProgram:
    """Parse and elaborate ``.qgcl`` source text."""
    return elaborate(parse(text), tol)


def load_file(path, tol: Tolerances = DEFAULT_TOL) -> ElaboratedProgram:
    with open(path, encoding="utf-8") as fh:
        return load(fh.read(), tol)
