"""Denotational semantics of qGCL on partial density matrices.

Loops are evaluated as the limit of their Kleene approximants: the exit
branch of every unrolling is accumulated while the live (continuing) mass
is pushed through the body again, until that mass drops below
``epsilon_mass`` or the iteration cap is hit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .frontend.elaborate import ElaboratedProgram
from .frontend.syntax import Case, Init, Program, Seq, Skip, UnitaryApp, While
from .operators import OperatorError, PartialDensityMatrix, conjugate, reset


@dataclass(frozen=True)
class SemanticsOptions:
    epsilon_mass: float = 1e-9
    max_iterations: int = 10_000

    def __post_init__(self):
        if not self.epsilon_mass > 0:
            raise ValueError("epsilon_mass must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class SemanticsResult:
    state: PartialDensityMatrix
    residual_mass: float
    converged: bool
    iterations_used: tuple[int, ...]


def _tr(a: np.ndarray) -> float:
    return float(np.trace(a).real)


class ForwardRunner:
    """Pushes an unnormalised state through a program.

    ``on_cost`` (optional) is called with ``(kind, label, mass)`` for every
    primitive step so callers can charge runtime against the mass that
    reaches it.
    """

    def __init__(self, prog: ElaboratedProgram, opts: SemanticsOptions,
                 on_cost: Callable[[str, str, float], None] | None = None):
        self.prog = prog
        self.layout = prog.layout
        self.opts = opts
        self.on_cost = on_cost
        self.residual = 0.0
        self.converged = True
        self.iterations: list[int] = []
        self.live_trace: list[list[float]] = []

    def charge(self, kind: str, label: str, rho: np.ndarray):
        if self.on_cost is not None:
            self.on_cost(kind, label, _tr(rho))

    def run(self, p: Program, rho: np.ndarray) -> np.ndarray:
        if isinstance(p, Skip):
            self.charge("skip", "skip", rho)
            return rho
        if isinstance(p, Init):
            self.charge("init", p.label, rho)
            return reset(self.layout, p.var, self.prog.init_vector(p), rho)
        if isinstance(p, UnitaryApp):
            self.charge("unitary", p.label, rho)
            return conjugate(self.layout, self.prog.unitary(p.label).matrix, p.targets, rho)
        if isinstance(p, Seq):
            return self.run(p.second, self.run(p.first, rho))
        if isinstance(p, Case):
            self.charge("measurement", p.label, rho)
            mset = self.prog.measurement(p.label)
            out = np.zeros_like(rho)
            for m, body in p.branches:
                out = out + self.run(body, conjugate(self.layout, mset.operator(m), p.targets, rho))
            return out
        if isinstance(p, While):
            return self.run_loop(p, rho)
        raise TypeError(f"not a program node: {p!r}")

    def step(self, p: While, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One unfolding of the loop: (exit contribution, next live state)."""
        mset = self.prog.measurement(p.label)
        exit_part = conjugate(self.layout, mset.operator(0), p.targets, sigma)
        cont = conjugate(self.layout, mset.operator(1), p.targets, sigma)
        return exit_part, self.run(p.body, cont)

    def run_loop(self, p: While, rho: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(rho)
        sigma = rho
        n = 0
        trace_log = []
        while True:
            live = _tr(sigma)
            trace_log.append(live)
            if live < self.opts.epsilon_mass:
                break
            if n >= self.opts.max_iterations:
                self.converged = False
                break
            n += 1
            self.charge("measurement", p.label, sigma)
            exit_part, sigma = self.step(p, sigma)
            acc = acc + exit_part
        self.residual += max(_tr(sigma), 0.0)
        self.iterations.append(n)
        self.live_trace.append(trace_log)
        return acc


def _check_layout(prog: ElaboratedProgram, rho: PartialDensityMatrix):
    if rho.layout != prog.layout:
        raise OperatorError(f"state layout {rho.layout.variables} does not match program layout "
                            f"{prog.layout.variables}")


def eval_program(prog: ElaboratedProgram, rho: PartialDensityMatrix,
                 opts: SemanticsOptions = SemanticsOptions()) -> SemanticsResult:
    """``⟦S⟧(ρ)`` with loop residuals reported."""
    _check_layout(prog, rho)
    runner = ForwardRunner(prog, opts)
    out = runner.run(prog.program, np.asarray(rho.matrix))
    return SemanticsResult(rho.with_matrix(out), runner.residual, runner.converged, tuple(runner.iterations))


def char_fun_semantics_step(prog: ElaboratedProgram, loop: While, sigma: PartialDensityMatrix,
                            opts: SemanticsOptions = SemanticsOptions()):
    """Exit contribution and next live state of one loop unfolding from ``sigma``."""
    _check_layout(prog, sigma)
    runner = ForwardRunner(prog, opts)
    exit_part, nxt = runner.step(loop, np.asarray(sigma.matrix))
    return sigma.with_matrix(exit_part), sigma.with_matrix(nxt)
