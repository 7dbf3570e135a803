"""Upper-bound certificates for loops: check ``Φ(I) ⪯ I``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..frontend.elaborate import ElaboratedProgram
from ..frontend.syntax import While, contains_loop
from ..operators import (PartialDensityMatrix, StateSpaceLayout, conjugate, min_eigenpair,
                         random_density_matrix, random_pure_vector)
from .cost import UNIT, CostModel
from .evaluators import ZERO_PROB, ErtOptions, LoopInBody, _as_affine, _Backward, _Given, char_fun_apply_form

VERIFIED, REFUTED, UNKNOWN = "verified", "refuted", "unknown"


@dataclass(frozen=True)
class InvariantVerdict:
    status: str
    margin: float
    witness: PartialDensityMatrix | None = None
    mode: str = "exact"
    detail: str = ""


def state_battery(layout: StateSpaceLayout, seed: int = 0, n_mixed: int = 64, n_pure: int = 64) -> list[np.ndarray]:
    """All product-basis states, then seeded random mixed and random pure states."""
    d = layout.total_dim
    states = []
    for i in range(d):
        s = np.zeros((d, d), dtype=complex)
        s[i, i] = 1
        states.append(s)
    rng = np.random.default_rng(seed)
    for _ in range(n_mixed):
        states.append(random_density_matrix(d, rng))
    for _ in range(n_pure):
        v = random_pure_vector(d, rng)
        states.append(np.outer(v, v.conj()))
    return states


def check_invariant(prog: ElaboratedProgram, loop: While, t, inv, mode: str = "exact",
                    cost: CostModel = UNIT, opts: ErtOptions = ErtOptions(), tol: float = 1e-9,
                    battery: list[np.ndarray] | None = None, seed: int = 0) -> InvariantVerdict:
    """Decide whether ``inv`` is a pre-fixpoint of the loop's characteristic function.

    ``exact`` mode writes ``I − Φ(I)`` as ``Δc + tr(ΔA ρ)`` and is complete
    over all partial density matrices: the minimum of that expression is
    ``Δc + min(0, λ_min(ΔA))``.  ``sample`` mode evaluates both sides on a
    state battery and can only refute.
    """
    layout = prog.layout
    if mode == "exact":
        if contains_loop(loop.body):
            raise LoopInBody("exact invariant checking needs a loop-free body; use sample mode")
        inv_a = _as_affine(inv, layout).hermitian()
        phi = char_fun_apply_form(prog, loop, t, inv_a, cost)
        diff = (inv_a - phi).hermitian()
        lam, vec = min_eigenpair(diff.matrix)
        margin = diff.constant + min(0.0, lam)
        if diff.constant >= -tol and diff.constant + lam >= -tol:
            return InvariantVerdict(VERIFIED, margin, None, mode,
                                    f"constant gap {diff.constant:.3g}, minimum eigenvalue {lam:.3g}")
        if diff.constant + lam < -tol:
            witness = np.outer(vec, vec.conj())
        else:
            witness = np.zeros_like(diff.matrix)
        return InvariantVerdict(REFUTED, margin, PartialDensityMatrix(witness, layout), mode,
                                f"constant gap {diff.constant:.3g}, minimum eigenvalue {lam:.3g}")
    if mode != "sample":
        raise ValueError(f"unknown mode {mode!r}")

    t_a = _as_affine(t, layout)
    inv_a = _as_affine(inv, layout)
    ev = _Backward(prog, cost, opts)
    mset = prog.measurement(loop.label)
    guard_cost = cost.measurement(loop.label)
    worst, witness = np.inf, None
    for rho in battery if battery is not None else state_battery(layout, seed):
        val = guard_cost
        cont = conjugate(layout, mset.operator(1), loop.targets, rho)
        p1 = float(np.trace(cont).real)
        if p1 > ZERO_PROB:
            val += p1 * ev.value(loop.body, _Given(inv_a), cont / p1)
        stop = conjugate(layout, mset.operator(0), loop.targets, rho)
        p0 = float(np.trace(stop).real)
        if p0 > ZERO_PROB:
            val += p0 * t_a(stop / p0)
        gap = inv_a(rho) - val
        if gap < worst:
            worst, witness = gap, rho
    if worst < -tol:
        return InvariantVerdict(REFUTED, float(worst), PartialDensityMatrix(witness, layout), mode,
                                "a battery state violates Φ(I) ⪯ I")
    return InvariantVerdict(UNKNOWN, float(worst), None, mode, "no violation found on the state battery")
