"""Simplified BB84 key-distribution loop: program, runtime invariant and closed form.

Variables, in layout order: counter ``k : int[d]``, Alice's two coins
``A : qubits[2]``, Bob's coin ``B : bool`` and the key register
``Q : qubits[m]``.  Each iteration flips the coins, measures Alice's coins
(outcome ``2e + b`` for the encoded bit ``b`` and basis ``e``) and Bob's coin;
when Bob's basis equals ``e`` the bit is stored and the counter advances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ert.cost import UNIT, CostModel
from .ert.evaluators import ErtOptions, ert_of_program
from .ert.expr import RuntimeExpr, projector_term
from .ert.invariant import VERIFIED, check_invariant
from .frontend.elaborate import ElaboratedProgram, load
from .frontend.syntax import While, flatten
from .operators import OperatorError, PartialDensityMatrix
from .trajectory import TrajectoryConfig, estimate

GUARD, ALICE, BOB = "M_m", "M_A", "M_B"
SET0, SET1, SUCC = "U_P0", "U_P1", "U_succ"


def source(m: int, d: int) -> str:
    if not 1 <= m < d:
        raise OperatorError(f"BB84 needs 1 <= m < d, got m={m}, d={d}")
    branches = []
    for e in (0, 1):
        for b in (0, 1):
            keep = f"[k, Q] *= U_P{b}; [k] *= U_succ"
            arms = {e: keep, 1 - e: "skip"}
            branches.append(
                f"    {2 * e + b} -> // e={e}, b={b}\n"
                f"      case M_B[B] of\n"
                f"        0 -> {arms[0]};\n"
                f"        1 -> {arms[1]}\n"
                f"      end"
            )
    body = ";\n".join(branches)
    return f"""// simplified BB84, key length m={m}, counter truncated to d={d} levels
var k : int[{d}];
var A : qubits[2];
var B : bool;
var Q : qubits[{m}];
define M_m := builtin M_geq({m}, {d});
define M_A := builtin M_basis(4);
define M_B := builtin M_basis(2);
define U_P0 := builtin U_P(0, {d}, {m});
define U_P1 := builtin U_P(1, {d}, {m});
define U_succ := builtin U_succ({d});

// initialize counter
k := |0>;
// while not reached m bits
while M_m[k] = 1 do
  // flip Alice's and Bob's coins
  A := |++>;
  B := |+>;
  // measure Alice's coins, then Bob's coin
  case M_A[A] of
{body}
  end
od
"""


@dataclass(frozen=True)
class BB84Instance:
    m: int
    d: int
    program: ElaboratedProgram = field(repr=False)

    @property
    def loop(self) -> While:
        return next(s for s in flatten(self.program.program) if isinstance(s, While))

    @property
    def loop_program(self) -> ElaboratedProgram:
        return self.program.with_program(self.loop)


def build(m: int, d: int) -> BB84Instance:
    return BB84Instance(m, d, load(source(m, d)))


def per_iteration_cost(cost: CostModel) -> float:
    """Expected cost of one loop body run, excluding the guard measurement."""
    return (cost.init("|++>") + cost.init("|+>") + cost.measurement(ALICE) + cost.measurement(BOB)
            + 0.5 * (0.5 * cost.unitary(SET0) + 0.5 * cost.unitary(SET1) + cost.unitary(SUCC))
            + 0.5 * cost.skip_cost)


def iteration_cost(cost: CostModel) -> float:
    """Per-iteration cost including the guard measurement."""
    return cost.measurement(GUARD) + per_iteration_cost(cost)


def appendix_invariant(inst: BB84Instance, cost: CostModel = UNIT) -> RuntimeExpr:
    """``T⟨M_m⟩ + 2(T⟨M_m⟩ + T*)·Σ_{h=0}^{m} (m − h)·tr(|h⟩⟨h|^k ρ)``."""
    guard = cost.measurement(GUARD)
    coeff = 2 * (guard + per_iteration_cost(cost))
    layout = inst.program.layout
    terms = tuple(projector_term(layout, "k", h, coeff * (inst.m - h)) for h in range(inst.m + 1))
    return RuntimeExpr(guard, terms)


def closed_form(m: int, cost: CostModel = UNIT) -> float:
    return cost.init("|0>") + cost.measurement(GUARD) + 2 * m * iteration_cost(cost)


def random_cost_model(rng: np.random.Generator, denominator: int = 8) -> CostModel:
    """Non-negative rational costs ``n / denominator`` for every BB84 label."""
    def draw():
        return int(rng.integers(0, 4 * denominator + 1)) / denominator
    return CostModel(
        {"|0>": draw(), "|++>": draw(), "|+>": draw()},
        {SET0: draw(), SET1: draw(), SUCC: draw()},
        {GUARD: draw(), ALICE: draw(), BOB: draw()},
        skip_cost=draw(),
    )


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    expected: float
    detail: str = ""


@dataclass(frozen=True)
class VerifyReport:
    m: int
    d: int
    closed_form: float
    checks: tuple[Check, ...]
    timings: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def verify(inst: BB84Instance, cost: CostModel = UNIT, opts: ErtOptions = ErtOptions(),
           trials: int = 100_000, seed: int = 42, rho: PartialDensityMatrix | None = None) -> VerifyReport:
    """Invariant check, both evaluators against the closed form, and a Monte Carlo estimate."""
    expected = closed_form(inst.m, cost)
    checks, timings = [], {}
    rho = rho or PartialDensityMatrix.basis(inst.program.layout)

    t0 = time.perf_counter()
    verdict = check_invariant(inst.program, inst.loop, None, appendix_invariant(inst, cost), "exact", cost, opts)
    timings["invariant"] = time.perf_counter() - t0
    checks.append(Check("invariant", verdict.status == VERIFIED and abs(verdict.margin) < 1e-8,
                        verdict.margin, 0.0, f"{verdict.status}: {verdict.detail}"))

    t0 = time.perf_counter()
    rep = ert_of_program(inst.program, rho, cost, opts)
    timings["evaluators"] = time.perf_counter() - t0
    checks.append(Check("backward", rep.backward.converged and abs(rep.backward.value - expected) < 1e-6,
                        rep.backward.value, expected))
    checks.append(Check("forward", rep.forward.converged and abs(rep.forward.value - expected) < 1e-6,
                        rep.forward.value, expected))

    if trials > 0:
        t0 = time.perf_counter()
        est = estimate(inst.program, rho, TrajectoryConfig(trials=trials, seed=seed), cost)
        timings["simulation"] = time.perf_counter() - t0
        ok = abs(est.mean - expected) <= 3 * est.std_error if est.std_error > 0 else abs(est.mean - expected) < 1e-9
        checks.append(Check("simulation", ok and est.truncated_trials == 0, est.mean, expected,
                            f"std_error {est.std_error:.4g} over {est.trials} trials"))
    return VerifyReport(inst.m, inst.d, expected, tuple(checks), timings)
