"""Random qGCL programs for property tests.

Programs are built straight into ``ElaboratedProgram`` values so the
generators do not depend on the parser.  Loops always follow the shape
``while G[q] = 1 do q := |0>; [q] *= U od`` with ``|⟨1|U|0⟩|² < 1``, which
makes them terminate geometrically.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from qert.frontend.elaborate import ElaboratedProgram
from qert.frontend.syntax import Case, Init, Seq, Skip, UnitaryApp, While, flatten, seq
from qert.operators import (MeasurementSet, PartialDensityMatrix, StateSpaceLayout, UnitaryOp, haar_unitary,
                            random_density_matrix, random_measurement)
from qert.semantics import ForwardRunner, SemanticsOptions

CORPUS = Path(__file__).resolve().parents[1] / "src" / "qert" / "corpus"
GOLDEN = Path(__file__).resolve().parent / "golden"


class _Gen:
    def __init__(self, rng: np.random.Generator, layout: StateSpaceLayout):
        self.rng = rng
        self.layout = layout
        self.ops: dict = {}

    def targets(self, k: int):
        names = list(self.layout.names)
        idx = self.rng.choice(len(names), size=k, replace=False)
        return tuple(names[i] for i in idx)

    def unitary(self):
        ts = self.targets(int(self.rng.integers(1, min(2, len(self.layout.names)) + 1)))
        label = f"U{len(self.ops)}"
        self.ops[label] = UnitaryOp(label, haar_unitary(self.layout.subspace_dim(ts), self.rng))
        return UnitaryApp(label, ts)

    def measurement(self, n_outcomes: int, ts):
        label = f"M{len(self.ops)}"
        self.ops[label] = random_measurement(self.layout.subspace_dim(ts), n_outcomes, self.rng, label)
        return label

    def stmt(self, depth: int):
        kinds = ["skip", "init", "unitary", "unitary"] + (["case"] if depth > 0 else [])
        kind = kinds[int(self.rng.integers(len(kinds)))]
        if kind == "skip":
            return Skip()
        if kind == "init":
            q = self.targets(1)[0]
            return Init(q, str(int(self.rng.integers(self.layout.dim(q)))))
        if kind == "unitary":
            return self.unitary()
        ts = self.targets(1)
        n = int(self.rng.integers(2, 4))
        label = self.measurement(n, ts)
        return Case(label, ts, tuple((m, self.block(depth - 1)) for m in range(n)))

    def block(self, depth: int):
        n = int(self.rng.integers(1, 4))
        return seq(*[self.stmt(depth) for _ in range(n)])

    def loop(self):
        qubits = [n for n in self.layout.names if self.layout.dim(n) == 2]
        q = qubits[int(self.rng.integers(len(qubits)))]
        u = haar_unitary(2, self.rng)
        while abs(u[1, 0]) ** 2 > 0.9:
            u = haar_unitary(2, self.rng)
        label = f"L{len(self.ops)}"
        self.ops[label] = UnitaryOp(label, u)
        guard = f"G{len(self.ops)}"
        basis = np.eye(2)
        self.ops[guard] = MeasurementSet(guard, ((0, np.outer(basis[0], basis[0])),
                                                 (1, np.outer(basis[1], basis[1]))))
        body = Seq(Init(q, "0"), UnitaryApp(label, (q,)))
        return While(guard, (q,), body)


def random_layout(rng: np.random.Generator, max_dim: int = 16) -> StateSpaceLayout:
    while True:
        n = int(rng.integers(1, 4))
        dims = [2] + [int(rng.choice([2, 3])) for _ in range(n - 1)]
        if int(np.prod(dims)) <= max_dim:
            return StateSpaceLayout(tuple((f"v{i}", d) for i, d in enumerate(dims)))


def random_program(rng: np.random.Generator, loops: bool = False, max_dim: int = 16) -> ElaboratedProgram:
    """A random program; with ``loops`` it contains one or two geometric loops."""
    layout = random_layout(rng, max_dim)
    g = _Gen(rng, layout)
    parts = [g.block(2)]
    if loops:
        for _ in range(int(rng.integers(1, 3))):
            parts.append(g.loop())
            parts.append(g.block(1))
    return ElaboratedProgram(seq(*parts), layout, g.ops)


def random_state(rng: np.random.Generator, layout: StateSpaceLayout, trace: float = 1.0) -> np.ndarray:
    return random_density_matrix(layout.total_dim, rng, trace=trace)


class _CheckingRunner(ForwardRunner):
    """Forward runner that validates every intermediate state it produces."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.problems: list[str] = []

    def run(self, p, rho):
        out = super().run(p, rho)
        bad = PartialDensityMatrix(out, self.layout).violations()
        if bad:
            self.problems.append(f"{type(p).__name__}: {bad}")
        return out


def semantics_property_failures(n_pairs: int = 500, seed: int = 2024) -> list[str]:
    """Trace non-increase, PSD preservation and linearity on random (program, state) pairs."""
    rng = np.random.default_rng(seed)
    # a mass threshold nothing reaches: every loop runs exactly max_iterations times,
    # so the iteration counts agree across the three evaluations
    opts = SemanticsOptions(epsilon_mass=1e-300, max_iterations=40)
    failures = []
    for i in range(n_pairs):
        prog = random_program(rng, loops=bool(i % 2))
        lay = prog.layout
        r1 = random_state(rng, lay, rng.uniform(0.1, 1.0))
        r2 = random_state(rng, lay, rng.uniform(0.1, 1.0))
        alpha = rng.uniform(0, 1)
        beta = rng.uniform(0, 1 - alpha)
        outs = []
        for rho in (r1, r2, alpha * r1 + beta * r2):
            runner = _CheckingRunner(prog, opts)
            out = runner.run(prog.program, rho)
            outs.append(out)
            if np.trace(out).real > np.trace(rho).real + 1e-9:
                failures.append(f"pair {i}: trace grew from {np.trace(rho).real} to {np.trace(out).real}")
            failures.extend(f"pair {i}: {p}" for p in runner.problems)
        gap = np.max(np.abs(outs[2] - (alpha * outs[0] + beta * outs[1])))
        if gap > 1e-9:
            failures.append(f"pair {i}: linearity gap {gap:.3g}")
    return failures


def concordance_programs(seed: int = 77, n_loop_free: int = 12, n_loopy: int = 12):
    """Random loop-free and geometric-loop programs plus the converging corpus files."""
    from qert.frontend import load
    rng = np.random.default_rng(seed)
    progs = [("loop-free", random_program(rng)) for _ in range(n_loop_free)]
    progs += [("loop", random_program(rng, loops=True)) for _ in range(n_loopy)]
    for name in ("skip", "geometric", "teleport", "coin_case", "bb84_m1_d3"):
        prog = load((CORPUS / f"{name}.qgcl").read_text())
        progs.append(("loop" if name in ("geometric", "bb84_m1_d3") else "loop-free", prog))
    return progs


def concordance(seed: int = 77, n_states: int = 200):
    """Largest |backward − forward| over all programs and |affine − backward| over loop-free ones."""
    from qert.ert import ert_affine_form, ert_backward, ert_forward
    rng = np.random.default_rng(seed + 1)
    progs = concordance_programs(seed)
    bf, ab, unconverged = 0.0, 0.0, []
    for i, (kind, prog) in enumerate(progs):
        rho = random_state(rng, prog.layout)
        b = ert_backward(prog, None, rho)
        f = ert_forward(prog, rho)
        if not (b.converged and f.converged):
            unconverged.append(i)
        bf = max(bf, abs(b.value - f.value))
        if kind == "loop-free":
            form = ert_affine_form(prog)
            for _ in range(n_states):
                state = random_state(rng, prog.layout, rng.uniform(0.0, 1.0))
                ab = max(ab, abs(form(state) - ert_backward(prog, None, state).value))
    return len(progs), bf, ab, unconverged


def soundness_cases(seed: int = 99, n_random: int = 6):
    """(name, loop program, continuation, candidate invariant, cost) tuples for Park-rule spot checks."""
    from qert import bb84
    from qert.ert import UNIT, Affine, ErtOptions, RuntimeExpr
    from qert.ert.evaluators import Heisenberg
    from qert.frontend import load
    from qert.operators import Observable

    cases = []
    geo = load((CORPUS / "geometric.qgcl").read_text())
    loop = next(s for s in flatten(geo.program) if isinstance(s, While))
    fixed = RuntimeExpr(1.0, ((6.0, Observable(np.diag([0.0, 1.0]), ("q",))),))
    cases.append(("geometric fixed point", geo.with_program(loop), None, fixed, UNIT))
    cases.append(("geometric fixed point + 1", geo.with_program(loop), None,
                  RuntimeExpr(2.0, fixed.terms), UNIT))
    cases.append(("geometric zero", geo.with_program(loop), None, RuntimeExpr(), UNIT))

    inst = bb84.build(1, 3)
    rng = np.random.default_rng(seed)
    for j, cost in enumerate([UNIT] + [bb84.random_cost_model(rng) for _ in range(2)]):
        cases.append((f"bb84 m=1 invariant #{j}", inst.loop_program, None, bb84.appendix_invariant(inst, cost), cost))

    for i in range(n_random):
        prog = random_program(rng, loops=True)
        loop = next(s for s in flatten(prog.program) if isinstance(s, While))
        lp = prog.with_program(loop)
        d = prog.layout.total_dim
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        t = Affine(float(rng.uniform(0, 2)), g @ g.conj().T / d)
        lfp = Heisenberg(lp, UNIT, ErtOptions()).loop(loop, t)
        for name, cand in (("lfp + 1e-6", Affine(lfp.constant + 1e-6, lfp.matrix)),
                           ("lfp + 0.5", Affine(lfp.constant + 0.5, lfp.matrix)),
                           ("0.9 lfp", lfp.scale(0.9)),
                           ("lfp + 2·proj", Affine(lfp.constant, lfp.matrix + 2 * np.eye(d)))):
            cases.append((f"random loop {i}: {name}", lp, t, cand.to_expr(), UNIT))
    return cases


def soundness_violations(seed: int = 99, n_random: int = 6):
    """Check every verified candidate against ert_backward on the full state battery."""
    from qert.ert import VERIFIED, check_invariant, ert_backward_many, state_battery
    from qert.ert.evaluators import _as_affine
    verified, bad = [], []
    for name, lp, t, inv, cost in soundness_cases(seed, n_random):
        verdict = check_invariant(lp, lp.program, t, inv, "exact", cost)
        if verdict.status != VERIFIED:
            continue
        verified.append(name)
        inv_a = _as_affine(inv, lp.layout)
        battery = state_battery(lp.layout, seed=seed)
        for rho, res in zip(battery, ert_backward_many(lp, t, battery, cost)):
            if res.value > inv_a(rho) + 1e-6:
                bad.append(f"{name}: ert {res.value} > I {inv_a(rho)}")
                break
    return verified, bad
