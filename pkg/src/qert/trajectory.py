"""Monte Carlo execution of qGCL programs.

Trials run as a batch of pure states: each measurement draws one outcome
per trial from the Born probabilities and collapses that trial's vector.
Every trial owns a random stream derived from ``(seed, trial)``, so results
do not depend on how trials are grouped.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .ert.cost import UNIT, CostModel
from .frontend.elaborate import ElaboratedProgram
from .frontend.syntax import Case, Init, Program, Seq, Skip, UnitaryApp, While
from .operators import PartialDensityMatrix, apply_batch, basis_action

_BLOCK = 32
_CHUNK = 1024


@dataclass(frozen=True)
class TrajectoryConfig:
    trials: int = 10_000
    seed: int = 0
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class RuntimeEstimate:
    mean: float
    std_error: float
    trials: int
    truncated_trials: int
    histogram: tuple[tuple[float, int], ...]

    def histogram_csv(self) -> str:
        return "cost,count\n" + "".join(f"{c!r},{n}\n" for c, n in self.histogram)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


class _TrialStreams:
    """Buffered uniforms, one independent stream per trial."""

    def __init__(self, seed: int, n: int, start: int = 0):
        self.seed = seed
        self.start = start
        self.buf = np.empty((n, _BLOCK))
        for i in range(n):
            self.buf[i] = trial_rng(seed, start + i).random(_BLOCK)
        self.ptr = np.zeros(n, dtype=np.int64)
        self.block = np.zeros(n, dtype=np.int64)

    def draw(self, idx: np.ndarray) -> np.ndarray:
        for i in idx[self.ptr[idx] >= _BLOCK]:
            self.block[i] += 1
            b = self.block[i]
            self.buf[i] = trial_rng(self.seed, self.start + int(i)).random(_BLOCK * (b + 1))[_BLOCK * b:]
            self.ptr[i] = 0
        u = self.buf[idx, self.ptr[idx]]
        self.ptr[idx] += 1
        return u


class _GeneratorStream:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def draw(self, idx: np.ndarray) -> np.ndarray:
        return self.rng.random(len(idx))


def _pick(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise categorical draw: ``probs`` is (n, k), ``u`` uniform (n,)."""
    cum = np.cumsum(probs, axis=1)
    cum = cum / cum[:, -1:]
    return np.minimum((cum <= u[:, None]).sum(axis=1), probs.shape[1] - 1)


class _Executor:
    def __init__(self, prog: ElaboratedProgram, cost: CostModel, psi: np.ndarray, streams, max_steps: int):
        self.prog = prog
        self.layout = prog.layout
        self.cost_model = cost
        self.psi = psi  # (n, D)
        n = psi.shape[0]
        self.cost = np.zeros(n)
        self.steps = np.zeros(n, dtype=np.int64)
        self.truncated = np.zeros(n, dtype=bool)
        self.streams = streams
        self.max_steps = max_steps
        self.first_outcomes: dict[str, np.ndarray] = {}
        self._actions: dict = {}

    def _action(self, op: np.ndarray, targets):
        key = (id(op), tuple(targets))
        if key not in self._actions:
            act = basis_action(self.layout, op, targets)
            if act is not None:
                perm, phase = act
                inv = np.empty_like(perm)
                inv[perm] = np.arange(len(perm))
                act = (perm, phase, inv, phase[inv])
            self._actions[key] = act
        return self._actions[key]

    def _apply(self, op: np.ndarray, targets, rows: np.ndarray) -> np.ndarray:
        act = self._action(op, targets)
        if act is None:
            return apply_batch(self.layout, op, targets, rows)
        inv, phase = act[2], act[3]
        return np.take(rows, inv, axis=1) * phase

    def _charge(self, idx, amount):
        self.cost[idx] += amount
        self.steps[idx] += 1

    def _measure(self, label: str, targets, idx: np.ndarray, ids=None) -> np.ndarray:
        mset = self.prog.measurement(label)
        ids = list(mset.ids) if ids is None else ids
        rows = self.psi[idx]
        ops = [mset.operator(m) for m in ids]
        acts = [self._action(op, targets) for op in ops]
        if all(a is not None for a in acts):
            weight = np.abs(rows.real) ** 2 + np.abs(rows.imag) ** 2
            probs = np.stack([weight @ (np.abs(a[1]) ** 2) for a in acts], axis=1)
            posts = None
        else:
            posts = [self._apply(op, targets, rows) for op in ops]
            probs = np.stack([np.einsum("ij,ij->i", p.conj(), p).real for p in posts], axis=1)
        choice = _pick(probs, self.streams.draw(idx))
        new = np.empty_like(rows)
        for j in range(len(ids)):
            sel = choice == j
            if sel.any():
                post = posts[j][sel] if posts is not None else self._apply(ops[j], targets, rows[sel])
                new[sel] = post / np.sqrt(probs[sel, j])[:, None]
        self.psi[idx] = new
        self._charge(idx, self.cost_model.measurement(label))
        outcomes = np.asarray(ids)[choice]
        self.first_outcomes.setdefault(label, np.full(len(self.psi), -1))
        rec = self.first_outcomes[label]
        fresh = rec[idx] == -1
        rec[idx[fresh]] = outcomes[fresh]
        return outcomes

    def run(self, p: Program, idx: np.ndarray) -> None:
        if len(idx) == 0:
            return
        if isinstance(p, Skip):
            self._charge(idx, self.cost_model.skip_cost)
        elif isinstance(p, UnitaryApp):
            u = self.prog.unitary(p.label).matrix
            self.psi[idx] = self._apply(u, p.targets, self.psi[idx])
            self._charge(idx, self.cost_model.unitary(p.label))
        elif isinstance(p, Init):
            self._init(p, idx)
        elif isinstance(p, Seq):
            self.run(p.first, idx)
            self.run(p.second, idx)
        elif isinstance(p, Case):
            outcomes = self._measure(p.label, p.targets, idx)
            for m, body in p.branches:
                self.run(body, idx[outcomes == m])
        elif isinstance(p, While):
            alive = idx
            while len(alive):
                over = self.steps[alive] >= self.max_steps
                if over.any():
                    self.truncated[alive[over]] = True
                    alive = alive[~over]
                    if not len(alive):
                        break
                outcomes = self._measure(p.label, p.targets, alive, ids=[0, 1])
                alive = alive[outcomes == 1]
                self.run(p.body, alive)
        else:
            raise TypeError(f"not a program node: {p!r}")

    def _init(self, p: Init, idx: np.ndarray) -> None:
        # reset = measure the variable in its basis, then overwrite it with the ket
        ax = self.layout.index(p.var)
        dims = self.layout.dims
        d = dims[ax]
        t = np.moveaxis(self.psi[idx].reshape(len(idx), *dims), ax + 1, -1)
        probs = np.sum(np.abs(t.reshape(len(idx), -1, d)) ** 2, axis=1)
        choice = _pick(probs, self.streams.draw(idx))
        rest = t.reshape(len(idx), -1, d)[np.arange(len(idx)), :, choice]
        rest = rest / np.linalg.norm(rest, axis=1, keepdims=True)
        vec = self.prog.init_vector(p)
        out = rest[:, :, None] * vec[None, None, :]
        out = np.moveaxis(out.reshape(len(idx), *[x for i, x in enumerate(dims) if i != ax], d), -1, ax + 1)
        self.psi[idx] = out.reshape(len(idx), -1)
        self._charge(idx, self.cost_model.init(p.label))


def _initial_vectors(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Spectral sampling: eigenvector ``i`` with probability proportional to its eigenvalue."""
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    w = np.clip(w, 0.0, None)
    choice = _pick(np.broadcast_to(w, (len(u), len(w))), u)
    return v[:, choice].T.copy()


def _state_matrix(prog: ElaboratedProgram, rho) -> np.ndarray:
    if isinstance(rho, PartialDensityMatrix):
        return np.asarray(rho.matrix)
    if rho is None:
        return np.asarray(PartialDensityMatrix.basis(prog.layout).matrix)
    return np.asarray(rho, dtype=complex)


def sample_run(prog: ElaboratedProgram, rho, rng: np.random.Generator, cost: CostModel = UNIT,
               max_steps: int = 1_000_000):
    """One trajectory: ``(cost, final state, steps, truncated)``."""
    streams = _GeneratorStream(rng)
    idx = np.arange(1)
    psi = _initial_vectors(_state_matrix(prog, rho), streams.draw(idx))
    ex = _Executor(prog, cost, psi, streams, max_steps)
    ex.run(prog.program, idx)
    final = PartialDensityMatrix.from_vector(prog.layout, ex.psi[0])
    return float(ex.cost[0]), final, int(ex.steps[0]), bool(ex.truncated[0])


@dataclass(frozen=True)
class Trials:
    """Per-trial outcome of a batch simulation."""
    cost: np.ndarray
    steps: np.ndarray
    truncated: np.ndarray
    first_outcomes: dict


def simulate(prog: ElaboratedProgram, rho, config: TrajectoryConfig, cost: CostModel = UNIT,
             chunk: int = _CHUNK) -> Trials:
    """Run all trials, ``chunk`` at a time (the grouping does not affect results)."""
    state = _state_matrix(prog, rho)
    parts = []
    for start in range(0, config.trials, chunk):
        n = min(chunk, config.trials - start)
        streams = _TrialStreams(config.seed, n, start)
        idx = np.arange(n)
        psi = _initial_vectors(state, streams.draw(idx))
        ex = _Executor(prog, cost, psi, streams, config.max_steps)
        ex.run(prog.program, idx)
        parts.append(ex)
    labels = sorted({k for ex in parts for k in ex.first_outcomes})
    first = {k: np.concatenate([ex.first_outcomes.get(k, np.full(len(ex.cost), -1)) for ex in parts])
             for k in labels}
    return Trials(np.concatenate([ex.cost for ex in parts]), np.concatenate([ex.steps for ex in parts]),
                  np.concatenate([ex.truncated for ex in parts]), first)


def estimate(prog: ElaboratedProgram, rho, config: TrajectoryConfig = TrajectoryConfig(),
             cost: CostModel = UNIT) -> RuntimeEstimate:
    """Mean runtime over ``config.trials`` independent trajectories."""
    ex = simulate(prog, rho, config, cost)
    return summarize(ex.cost, ex.truncated)


def summarize(costs: np.ndarray, truncated: np.ndarray) -> RuntimeEstimate:
    n = len(costs)
    mean = math.fsum(costs) / n
    if n > 1:
        var = math.fsum((c - mean) ** 2 for c in costs) / (n - 1)
        se = math.sqrt(var / n)
    else:
        se = 0.0
    hist = Counter(round(float(c), 9) for c in costs)
    return RuntimeEstimate(mean, se, n, int(np.count_nonzero(truncated)), tuple(sorted(hist.items())))
