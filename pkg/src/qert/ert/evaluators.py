"""Expected-runtime evaluators.

Three independent routes to ``ert[S](t)(ρ)``:

* :func:`ert_backward` follows the transformer rules with explicit states and
  continuations.  A loop is unrolled from the bottom element (``t₀ = 0``,
  ``tₙ₊₁ = Φ(tₙ)``) with the iterates kept in affine form so they can be
  re-evaluated cheaply.
* :func:`ert_forward` pushes the state forward and charges every step
  against the probability mass that reaches it.
* :func:`ert_affine` propagates the continuation's observable backwards
  through loop-free code (channel adjoints), giving the exact affine result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..frontend.elaborate import ElaboratedProgram
from ..frontend.syntax import Case, Init, Program, Seq, Skip, UnitaryApp, While, contains_loop
from ..operators import OperatorError, PartialDensityMatrix, conjugate, reset, reset_adjoint
from ..semantics import ForwardRunner, SemanticsOptions
from .cost import UNIT, CostModel
from .expr import Affine, RuntimeExpr

# branch probabilities at or below this are treated as impossible outcomes
ZERO_PROB = 1e-15


class LoopInBody(OperatorError):
    """A loop-free evaluator met a ``while``."""


@dataclass(frozen=True)
class ErtOptions:
    epsilon_value: float = 1e-10
    max_unroll: int = 10_000
    epsilon_mass: float = 1e-12
    max_iterations: int = 10_000

    def semantics(self) -> SemanticsOptions:
        return SemanticsOptions(self.epsilon_mass, self.max_iterations)


@dataclass(frozen=True)
class LoopReport:
    label: str
    line: int
    iterations: int
    converged: bool
    values: tuple[float, ...] = ()


@dataclass(frozen=True)
class BackwardResult:
    value: float
    converged: bool
    loops: tuple[LoopReport, ...] = ()

    @property
    def lower_bound(self) -> bool:
        return not self.converged


@dataclass(frozen=True)
class ForwardResult:
    value: float
    converged: bool
    residual_mass: float
    iterations: tuple[int, ...] = ()


def _as_affine(t, layout) -> Affine:
    if isinstance(t, Affine):
        return t
    if t is None:
        return Affine.zero(layout.total_dim)
    return t.affine(layout)


def _trace(a: np.ndarray) -> float:
    return float(np.trace(a).real)


class Heisenberg:
    """Backward propagation of affine runtime functions through a program."""

    def __init__(self, prog: ElaboratedProgram, cost: CostModel, opts: ErtOptions, allow_loops: bool = True):
        self.prog = prog
        self.layout = prog.layout
        self.cost = cost
        self.opts = opts
        self.allow_loops = allow_loops
        self.eye = np.eye(self.layout.total_dim, dtype=complex)
        self.reports: list[LoopReport] = []
        self._chains: dict = {}
        self._sup: dict = {}

    def _lift(self, t: Affine) -> np.ndarray:
        # constant c as the observable c·I, so that branch weights absorb it
        return t.matrix + t.constant * self.eye

    def transform(self, p: Program, t: Affine) -> Affine:
        if isinstance(p, Skip):
            return Affine(t.constant + self.cost.skip_cost, t.matrix)
        if isinstance(p, Init):
            return Affine(t.constant + self.cost.init(p.label),
                          reset_adjoint(self.layout, p.var, self.prog.init_vector(p), t.matrix))
        if isinstance(p, UnitaryApp):
            u = self.prog.unitary(p.label).matrix
            return Affine(t.constant + self.cost.unitary(p.label),
                          conjugate(self.layout, u.conj().T, p.targets, t.matrix))
        if isinstance(p, Seq):
            return self.transform(p.first, self.transform(p.second, t))
        if isinstance(p, Case):
            mset = self.prog.measurement(p.label)
            acc = np.zeros_like(t.matrix)
            for m, body in p.branches:
                branch = self.transform(body, t)
                acc = acc + conjugate(self.layout, mset.operator(m).conj().T, p.targets, self._lift(branch))
            return Affine(self.cost.measurement(p.label), acc)
        if isinstance(p, While):
            if not self.allow_loops:
                raise LoopInBody(f"loop at line {p.pos.line} in a loop-free context")
            return self.loop(p, t)
        raise TypeError(f"not a program node: {p!r}")

    def phi(self, loop: While, t: Affine, current: Affine) -> Affine:
        """One application of the loop's characteristic function to ``current``."""
        mset = self.prog.measurement(loop.label)
        body = self.transform(loop.body, current)
        cont = conjugate(self.layout, mset.operator(1).conj().T, loop.targets, self._lift(body))
        stop = conjugate(self.layout, mset.operator(0).conj().T, loop.targets, self._lift(t))
        return Affine(self.cost.measurement(loop.label), cont + stop)

    def loop(self, loop: While, t: Affine, point: np.ndarray | None = None) -> Affine:
        """Kleene iterates of the loop until the increment falls below ``epsilon_value``.

        With ``point`` the increment is measured at that state; otherwise by
        its supremum over all partial density matrices.  The iterates do not
        depend on the state, so they are cached per (loop, continuation).
        """
        key = (id(loop), t.constant, t.matrix.tobytes())
        if point is None and key in self._sup:
            report, result = self._sup[key]
            self.reports.append(report)
            return result
        chain = self._chains.setdefault(key, [Affine.zero(self.layout.total_dim)])
        values = [0.0] if point is not None else []
        converged = False
        n = 0
        while n < self.opts.max_unroll:
            if n + 1 == len(chain):
                chain.append(self.phi(loop, t, chain[n]))
            cur, nxt = chain[n], chain[n + 1]
            n += 1
            if point is not None:
                v = nxt(point)
                inc = v - values[-1]
                values.append(v)
            else:
                d = (nxt - cur).hermitian()
                lam_max = float(np.linalg.eigvalsh(d.matrix)[-1])
                inc = d.constant + max(lam_max, 0.0)
            if inc < self.opts.epsilon_value:
                converged = True
                break
        report = LoopReport(loop.label, loop.pos.line, n, converged, tuple(values))
        self.reports.append(report)
        if point is None:
            self._sup[key] = (report, chain[n])
        return chain[n]


class _Given:
    def __init__(self, t: Affine):
        self.t = t

    def __call__(self, rho: np.ndarray) -> float:
        return self.t(rho)

    def affine(self) -> Affine:
        return self.t


class _Then:
    """Continuation ``ert[rest](k)`` evaluated lazily."""

    def __init__(self, ev: "_Backward", rest: Program, k):
        self.ev, self.rest, self.k = ev, rest, k
        self._aff = None

    def __call__(self, rho: np.ndarray) -> float:
        return self.ev.value(self.rest, self.k, rho)

    def affine(self) -> Affine:
        if self._aff is None:
            self._aff = self.ev.heis.transform(self.rest, self.k.affine())
        return self._aff


class _Backward:
    def __init__(self, prog: ElaboratedProgram, cost: CostModel, opts: ErtOptions):
        self.prog = prog
        self.layout = prog.layout
        self.cost = cost
        self.heis = Heisenberg(prog, cost, opts)

    def value(self, p: Program, k, rho: np.ndarray) -> float:
        if isinstance(p, Skip):
            return self.cost.skip_cost + k(rho)
        if isinstance(p, Init):
            return self.cost.init(p.label) + k(reset(self.layout, p.var, self.prog.init_vector(p), rho))
        if isinstance(p, UnitaryApp):
            u = self.prog.unitary(p.label).matrix
            return self.cost.unitary(p.label) + k(conjugate(self.layout, u, p.targets, rho))
        if isinstance(p, Seq):
            return self.value(p.first, _Then(self, p.second, k), rho)
        if isinstance(p, Case):
            mset = self.prog.measurement(p.label)
            total = self.cost.measurement(p.label)
            for m, body in p.branches:
                post = conjugate(self.layout, mset.operator(m), p.targets, rho)
                prob = _trace(post)
                if prob > ZERO_PROB:
                    total += prob * self.value(body, k, post / prob)
            return total
        if isinstance(p, While):
            return self.heis.loop(p, k.affine(), point=rho)(rho)
        raise TypeError(f"not a program node: {p!r}")


def _check_state(prog: ElaboratedProgram, rho) -> np.ndarray:
    if isinstance(rho, PartialDensityMatrix):
        if rho.layout != prog.layout:
            raise OperatorError(f"state layout {rho.layout.variables} does not match program layout "
                                f"{prog.layout.variables}")
        return np.asarray(rho.matrix)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (prog.layout.total_dim,) * 2:
        raise OperatorError(f"state of shape {rho.shape} does not match layout dimension {prog.layout.total_dim}")
    return rho


def ert_backward(prog: ElaboratedProgram, t: RuntimeExpr | Affine | None, rho,
                 cost: CostModel = UNIT, opts: ErtOptions = ErtOptions(),
                 program: Program | None = None) -> BackwardResult:
    """``ert[S](t)(ρ)`` by the transformer rules; loops report a lower bound when capped."""
    return ert_backward_many(prog, t, [rho], cost, opts, program)[0]


def ert_backward_many(prog: ElaboratedProgram, t: RuntimeExpr | Affine | None, states,
                      cost: CostModel = UNIT, opts: ErtOptions = ErtOptions(),
                      program: Program | None = None) -> list[BackwardResult]:
    """:func:`ert_backward` at several states, sharing the loops' Kleene iterates."""
    ev = _Backward(prog, cost, opts)
    k = _Given(_as_affine(t, prog.layout))
    p = program if program is not None else prog.program
    out = []
    for rho in states:
        rho = _check_state(prog, rho)
        ev.heis.reports.clear()
        value = ev.value(p, k, rho)
        reports = tuple(ev.heis.reports)
        out.append(BackwardResult(value, all(r.converged for r in reports), reports))
    return out


def ert_forward(prog: ElaboratedProgram, rho, t: RuntimeExpr | Affine | None = None,
                cost: CostModel = UNIT, opts: ErtOptions = ErtOptions()) -> ForwardResult:
    """Expected runtime by forward mass accumulation.

    Each primitive step costs ``T·(mass reaching it)``; the continuation is
    charged on the final (sub-normalised) state as ``c₀·tr σ + tr(Aσ)``.
    """
    rho = _check_state(prog, rho)
    charges: list[float] = []

    def on_cost(kind, label, mass):
        charges.append(cost.charge(kind, label) * mass)

    runner = ForwardRunner(prog, opts.semantics(), on_cost)
    out = runner.run(prog.program, rho)
    t_aff = _as_affine(t, prog.layout)
    charges.append(t_aff.constant * _trace(out))
    charges.append(float(np.real(np.sum(t_aff.matrix * out.T))))
    return ForwardResult(math.fsum(charges), runner.converged, runner.residual, tuple(runner.iterations))


def ert_affine_form(prog: ElaboratedProgram, t: RuntimeExpr | Affine | None = None,
                    cost: CostModel = UNIT, program: Program | None = None) -> Affine:
    p = program if program is not None else prog.program
    if contains_loop(p):
        raise LoopInBody("exact affine evaluation needs a loop-free program")
    heis = Heisenberg(prog, cost, ErtOptions(), allow_loops=False)
    return heis.transform(p, _as_affine(t, prog.layout)).hermitian()


def ert_affine(prog: ElaboratedProgram, t: RuntimeExpr | Affine | None = None,
               cost: CostModel = UNIT, program: Program | None = None) -> RuntimeExpr:
    """Exact ``ert[S](t)`` for loop-free ``S`` as an affine runtime expression."""
    return ert_affine_form(prog, t, cost, program).to_expr()


def char_fun_apply_form(prog: ElaboratedProgram, loop: While, t, inv, cost: CostModel = UNIT) -> Affine:
    if contains_loop(loop.body):
        raise LoopInBody("characteristic function in exact mode needs a loop-free body")
    heis = Heisenberg(prog, cost, ErtOptions(), allow_loops=False)
    return heis.phi(loop, _as_affine(t, prog.layout), _as_affine(inv, prog.layout)).hermitian()


def char_fun_apply(prog: ElaboratedProgram, loop: While, t, inv, cost: CostModel = UNIT) -> RuntimeExpr:
    """``Φ(I)`` for the loop with continuation ``t``, in affine form."""
    return char_fun_apply_form(prog, loop, t, inv, cost).to_expr()


@dataclass(frozen=True)
class ErtReport:
    backward: BackwardResult
    forward: ForwardResult
    difference: float
    notes: tuple[str, ...] = field(default=())

    @property
    def converged(self) -> bool:
        return self.backward.converged and self.forward.converged

    @property
    def value(self) -> float:
        return self.backward.value


def ert_of_program(prog: ElaboratedProgram, rho, cost: CostModel = UNIT,
                   opts: ErtOptions = ErtOptions()) -> ErtReport:
    """Runtime of the program alone (continuation 0) by both evaluators."""
    b = ert_backward(prog, None, rho, cost, opts)
    f = ert_forward(prog, rho, None, cost, opts)
    notes = []
    if not b.converged:
        notes.append("backward evaluation hit max_unroll: value is a lower bound")
    if not f.converged:
        notes.append(f"forward evaluation hit max_iterations with residual mass {f.residual_mass:.3g}: "
                     "value is a lower bound")
    return ErtReport(b, f, abs(b.value - f.value), tuple(notes))
