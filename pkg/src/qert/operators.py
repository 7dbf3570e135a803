"""Finite-dimensional quantum states and operators.

Everything here works on dense complex matrices over a tensor-product
space whose factor order is fixed by a :class:`StateSpaceLayout`.  Operators
acting on a subset of the variables are applied by contracting the relevant
tensor axes, so the full ``A ⊗ I`` extension is only materialised when it is
explicitly asked for (:func:`extend_to_space`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class OperatorError(ValueError):
    """Raised on malformed operators, states or variable references."""


@dataclass(frozen=True)
class Tolerances:
    herm: float = 1e-8
    psd: float = 1e-8
    trace: float = 1e-8
    norm: float = 1e-8


DEFAULT_TOL = Tolerances()


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateSpaceLayout:
    """Ordered tensor factors ``(name, dim)``; order never changes."""

    variables: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [n for n, _ in self.variables]
        if len(set(names)) != len(names):
            raise OperatorError(f"duplicate variable names in layout: {names}")
        for name, dim in self.variables:
            if int(dim) < 2:
                raise OperatorError(f"variable {name!r} needs dimension >= 2, got {dim}")
        object.__setattr__(self, "variables", tuple((str(n), int(d)) for n, d in self.variables))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.variables)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.variables)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.variables):
            if n == name:
                return i
        raise OperatorError(f"unknown variable {name!r}")

    def dim(self, name: str) -> int:
        return self.variables[self.index(name)][1]

    def axes(self, targets: Sequence[str]) -> list[int]:
        axes = [self.index(t) for t in targets]
        if len(set(axes)) != len(axes):
            raise OperatorError(f"repeated target variable in {list(targets)}")
        return axes

    def subspace_dim(self, targets: Sequence[str]) -> int:
        return math.prod(self.dim(t) for t in targets)

    def basis_index(self, values: dict[str, int] | Sequence[int]) -> int:
        """Flat index of the product basis vector with the given per-variable values."""
        if isinstance(values, dict):
            values = [values.get(n, 0) for n in self.names]
        return int(np.ravel_multi_index(tuple(values), self.dims))


# -- low-level contractions -------------------------------------------------

def _check_operator(layout: StateSpaceLayout, op: np.ndarray, targets: Sequence[str]) -> list[int]:
    axes = layout.axes(targets)
    sub = layout.subspace_dim(targets)
    if op.ndim != 2 or op.shape != (sub, sub):
        raise OperatorError(
            f"operator of shape {op.shape} does not match targets {list(targets)} (dimension {sub})"
        )
    return axes


def apply_left(layout: StateSpaceLayout, op: np.ndarray, targets: Sequence[str], a: np.ndarray) -> np.ndarray:
    """Return ``ext(op) @ a`` where ``a`` has ``total_dim`` rows."""
    op = np.asarray(op)
    axes = _check_operator(layout, op, targets)
    dims = layout.dims
    cols = a.shape[1] if a.ndim == 2 else None
    t = a.reshape(*dims, -1)
    k = len(axes)
    sub_dims = [dims[ax] for ax in axes]
    t = np.tensordot(op.reshape(sub_dims * 2), t, axes=(list(range(k, 2 * k)), axes))
    t = np.moveaxis(t, list(range(k)), axes)
    if cols is None:
        return t.reshape(-1)
    return t.reshape(layout.total_dim, cols)


def apply_batch(layout: StateSpaceLayout, op: np.ndarray, targets: Sequence[str], psi: np.ndarray) -> np.ndarray:
    """Apply ``ext(op)`` to every row of ``psi`` (shape ``(n, total_dim)``)."""
    op = np.asarray(op)
    axes = _check_operator(layout, op, targets)
    dims = layout.dims
    k = len(axes)
    t = psi.reshape(psi.shape[0], *dims)
    sub_dims = [dims[ax] for ax in axes]
    t = np.tensordot(t, op.reshape(sub_dims * 2), axes=([ax + 1 for ax in axes], list(range(k, 2 * k))))
    t = np.moveaxis(t, list(range(t.ndim - k, t.ndim)), [ax + 1 for ax in axes])
    return t.reshape(psi.shape[0], -1)


def basis_action(layout: StateSpaceLayout, op: np.ndarray, targets: Sequence[str], tol: float = 1e-14):
    """``(perm, phase)`` with ``ext(op)|i⟩ = phase[i]·|perm[i]⟩`` when ``op`` maps basis
    states to multiples of distinct basis states; ``None`` otherwise."""
    op = np.asarray(op)
    axes = _check_operator(layout, op, targets)
    nz = np.abs(op) > tol
    if (nz.sum(axis=0) > 1).any():
        return None
    rows = np.argmax(nz, axis=0)
    used = rows[nz.any(axis=0)]
    if len(set(used.tolist())) != len(used):
        return None
    # zero columns go to the rows nobody else uses, with zero phase
    free = iter(sorted(set(range(op.shape[0])) - set(used.tolist())))
    small_perm = np.array([r if nz[:, j].any() else next(free) for j, r in enumerate(rows)])
    small_phase = op[small_perm, np.arange(op.shape[1])]
    dims = layout.dims
    sub_dims = [dims[ax] for ax in axes]
    coords = list(np.unravel_index(np.arange(layout.total_dim), dims))
    j = np.ravel_multi_index([coords[ax] for ax in axes], sub_dims)
    new = np.unravel_index(small_perm[j], sub_dims)
    for ax, c in zip(axes, new):
        coords[ax] = c
    return np.ravel_multi_index(coords, dims), small_phase[j]


def conjugate(layout: StateSpaceLayout, op: np.ndarray, targets: Sequence[str], a: np.ndarray) -> np.ndarray:
    """Return ``ext(op) @ a @ ext(op)†``."""
    op = np.asarray(op)
    axes = _check_operator(layout, op, targets)
    dims = layout.dims
    n, k = len(dims), len(axes)
    sub = op.reshape([dims[ax] for ax in axes] * 2)
    t = np.asarray(a).reshape(dims + dims)
    t = np.tensordot(sub, t, axes=(list(range(k, 2 * k)), axes))
    t = np.moveaxis(t, list(range(k)), axes)
    col_axes = [n + ax for ax in axes]
    t = np.tensordot(t, sub.conj(), axes=(col_axes, list(range(k, 2 * k))))
    t = np.moveaxis(t, list(range(2 * n - k, 2 * n)), col_axes)
    return t.reshape(a.shape)


def reset(layout: StateSpaceLayout, q: str, vec, a: np.ndarray) -> np.ndarray:
    """``Σ_i (|ψ⟩⟨i|)^q a (|i⟩⟨ψ|)^q``, i.e. ``|ψ⟩⟨ψ|`` on ``q`` tensored with ``tr_q a``."""
    ax = layout.index(q)
    dims = layout.dims
    n = len(dims)
    vec = np.asarray(vec, dtype=complex)
    t = np.trace(np.asarray(a).reshape(dims + dims), axis1=ax, axis2=n + ax)
    t = np.multiply.outer(np.multiply.outer(t, vec), vec.conj())
    # t axes: rows without q, cols without q, q_row, q_col
    t = np.moveaxis(t, [2 * n - 2, 2 * n - 1], [ax, n + ax])
    return t.reshape(a.shape)


def reset_adjoint(layout: StateSpaceLayout, q: str, vec, a: np.ndarray) -> np.ndarray:
    """Heisenberg dual of :func:`reset`: ``I_q ⊗ ⟨ψ|a|ψ⟩_q``."""
    ax = layout.index(q)
    dims = layout.dims
    n = len(dims)
    vec = np.asarray(vec, dtype=complex)
    t = np.asarray(a).reshape(dims + dims)
    t = np.tensordot(vec.conj(), t, axes=([0], [ax]))
    t = np.tensordot(t, vec, axes=([n - 1 + ax], [0]))
    t = np.multiply.outer(t, np.eye(dims[ax]))
    t = np.moveaxis(t, [2 * n - 2, 2 * n - 1], [ax, n + ax])
    return t.reshape(a.shape)


def extend_to_space(op, targets: Sequence[str], layout: StateSpaceLayout) -> np.ndarray:
    """Canonical extension of ``op`` (acting on ``targets``) to the whole layout."""
    op = np.asarray(op, dtype=complex)
    return apply_left(layout, op, targets, np.eye(layout.total_dim, dtype=complex))


def partial_trace(layout: StateSpaceLayout, rho: np.ndarray, traced: Sequence[str]) -> np.ndarray:
    """Trace out ``traced``; the remaining factors keep layout order."""
    axes = layout.axes(traced)
    dims = layout.dims
    t = np.asarray(rho).reshape(dims + dims)
    for ax in sorted(axes, reverse=True):
        t = np.trace(t, axis1=ax, axis2=ax + t.ndim // 2)
    keep = [d for i, d in enumerate(dims) if i not in axes]
    size = math.prod(keep) if keep else 1
    return t.reshape(size, size)


# -- value types --------------------------------------------------------------

@dataclass(frozen=True)
class UnitaryOp:
    label: str
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def unitarity_error(self) -> float:
        u = self.matrix
        return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))) if u.size else 0.0

    def validate(self, tol: Tolerances = DEFAULT_TOL) -> "UnitaryOp":
        u = self.matrix
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise OperatorError(f"unitary {self.label!r} is not square: shape {u.shape}")
        err = self.unitarity_error()
        if err >= tol.norm:
            raise OperatorError(f"operator {self.label!r} is not unitary (|U†U - I|max = {err:.3g})")
        return self


@dataclass(frozen=True)
class MeasurementSet:
    """Measurement operators indexed by integer outcome ids, in declaration order."""

    label: str
    outcomes: tuple[tuple[int, np.ndarray], ...] = field(repr=False)

    def __post_init__(self):
        items = tuple((int(m), _frozen(mat)) for m, mat in self.outcomes)
        ids = [m for m, _ in items]
        if len(set(ids)) != len(ids):
            raise OperatorError(f"measurement {self.label!r} repeats an outcome id")
        if not items:
            raise OperatorError(f"measurement {self.label!r} has no outcomes")
        object.__setattr__(self, "outcomes", items)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(m for m, _ in self.outcomes)

    @property
    def dim(self) -> int:
        return self.outcomes[0][1].shape[0]

    def operator(self, m: int) -> np.ndarray:
        for mid, mat in self.outcomes:
            if mid == m:
                return mat
        raise OperatorError(f"measurement {self.label!r} has no outcome {m}")

    def normalization_error(self) -> float:
        total = sum(mat.conj().T @ mat for _, mat in self.outcomes)
        return float(np.max(np.abs(total - np.eye(self.dim))))

    def validate(self, tol: Tolerances = DEFAULT_TOL) -> "MeasurementSet":
        shapes = {mat.shape for _, mat in self.outcomes}
        if len(shapes) != 1 or any(len(s) != 2 or s[0] != s[1] for s in shapes):
            raise OperatorError(f"measurement {self.label!r} has inconsistent operator shapes {sorted(shapes)}")
        err = self.normalization_error()
        if err >= tol.norm:
            raise OperatorError(
                f"measurement {self.label!r} violates the normalization condition (|ΣM†M - I|max = {err:.3g})"
            )
        return self


@dataclass(frozen=True)
class Observable:
    """Hermitian matrix, either on the whole layout (``vars=None``) or on a subset."""

    matrix: np.ndarray = field(repr=False)
    vars: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        if self.vars is not None:
            object.__setattr__(self, "vars", tuple(self.vars))

    def validate(self, tol: Tolerances = DEFAULT_TOL) -> "Observable":
        a = self.matrix
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise OperatorError(f"observable is not square: shape {a.shape}")
        if np.max(np.abs(a - a.conj().T), initial=0.0) >= tol.herm:
            raise OperatorError("observable is not Hermitian")
        return self

    def full(self, layout: StateSpaceLayout) -> np.ndarray:
        if self.vars is None:
            if self.matrix.shape != (layout.total_dim,) * 2:
                raise OperatorError(
                    f"observable of shape {self.matrix.shape} does not match layout dimension {layout.total_dim}"
                )
            return np.asarray(self.matrix)
        return extend_to_space(self.matrix, self.vars, layout)


@dataclass(frozen=True)
class PartialDensityMatrix:
    matrix: np.ndarray = field(repr=False)
    layout: StateSpaceLayout

    def __post_init__(self):
        m = _frozen(self.matrix)
        d = self.layout.total_dim
        if m.shape != (d, d):
            raise OperatorError(f"state of shape {m.shape} does not match layout dimension {d}")
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def violations(self, tol: Tolerances = DEFAULT_TOL) -> list[str]:
        m = self.matrix
        out = []
        herm = float(np.max(np.abs(m - m.conj().T), initial=0.0))
        if herm >= tol.herm:
            out.append(f"not Hermitian (|ρ - ρ†|max = {herm:.3g})")
        lam = float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0])
        if lam < -tol.psd:
            out.append(f"negative eigenvalue {lam:.3g}")
        tr = np.trace(m)
        if tr.real < -tol.trace or tr.real > 1 + tol.trace or abs(tr.imag) >= tol.herm:
            out.append(f"trace {tr:.6g} outside [0, 1]")
        return out

    def validate(self, tol: Tolerances = DEFAULT_TOL) -> "PartialDensityMatrix":
        bad = self.violations(tol)
        if bad:
            raise OperatorError("invalid partial density matrix: " + "; ".join(bad))
        return self

    def with_matrix(self, matrix: np.ndarray) -> "PartialDensityMatrix":
        return PartialDensityMatrix(matrix, self.layout)

    @classmethod
    def basis(cls, layout: StateSpaceLayout, values: dict[str, int] | Sequence[int] | None = None):
        """|v⟩⟨v| for a product basis vector; all-zero by default."""
        idx = layout.basis_index(values or {})
        m = np.zeros((layout.total_dim,) * 2, dtype=complex)
        m[idx, idx] = 1.0
        return cls(m, layout)

    @classmethod
    def from_vector(cls, layout: StateSpaceLayout, vec) -> "PartialDensityMatrix":
        v = np.asarray(vec, dtype=complex).reshape(-1)
        return cls(np.outer(v, v.conj()), layout)


# -- postulate-level operations ---------------------------------------------

def measure_prob(rho: PartialDensityMatrix, mset: MeasurementSet, m: int, targets: Sequence[str]) -> float:
    """Probability ``tr(M_m† M_m ρ)`` of outcome ``m``."""
    k = mset.operator(m)
    return float(np.real(np.trace(conjugate(rho.layout, k, targets, np.asarray(rho.matrix)))))


def measure_post_unnormalized(rho: PartialDensityMatrix, mset: MeasurementSet, m: int,
                              targets: Sequence[str]) -> PartialDensityMatrix:
    """``M_m ρ M_m†``; the zero matrix when the outcome is impossible."""
    k = mset.operator(m)
    return rho.with_matrix(conjugate(rho.layout, k, targets, np.asarray(rho.matrix)))


def apply_unitary(rho: PartialDensityMatrix, op: UnitaryOp, targets: Sequence[str]) -> PartialDensityMatrix:
    return rho.with_matrix(conjugate(rho.layout, op.matrix, targets, np.asarray(rho.matrix)))


def basis_vector(dim: int, b: int) -> np.ndarray:
    if not 0 <= b < dim:
        raise OperatorError(f"basis index {b} out of range for dimension {dim}")
    v = np.zeros(dim, dtype=complex)
    v[b] = 1.0
    return v


def prepare_kraus(dim: int, vec: np.ndarray) -> list[np.ndarray]:
    """Kraus operators ``|ψ⟩⟨i|`` of the reset-to-ψ channel."""
    vec = np.asarray(vec, dtype=complex).reshape(dim, 1)
    return [vec @ basis_vector(dim, i).reshape(1, dim) for i in range(dim)]


def apply_channel(layout: StateSpaceLayout, kraus: Iterable[np.ndarray], targets: Sequence[str],
                  a: np.ndarray) -> np.ndarray:
    return sum(conjugate(layout, k, targets, a) for k in kraus)


def apply_channel_adjoint(layout: StateSpaceLayout, kraus: Iterable[np.ndarray], targets: Sequence[str],
                          a: np.ndarray) -> np.ndarray:
    return sum(conjugate(layout, k.conj().T, targets, a) for k in kraus)


def prepare_variable(rho: PartialDensityMatrix, q: str, vec) -> PartialDensityMatrix:
    return rho.with_matrix(reset(rho.layout, q, vec, np.asarray(rho.matrix)))


def init_variable(rho: PartialDensityMatrix, q: str, b: int) -> PartialDensityMatrix:
    """``Σ_i (|b⟩⟨i|)^q ρ (|i⟩⟨b|)^q``."""
    return prepare_variable(rho, q, basis_vector(rho.layout.dim(q), b))


def min_eigenvalue(a, tol: Tolerances = DEFAULT_TOL) -> float:
    if isinstance(a, Observable):
        a = a.matrix
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise OperatorError(f"expected a square matrix, got shape {a.shape}")
    if np.max(np.abs(a - a.conj().T), initial=0.0) >= tol.herm:
        raise OperatorError("min_eigenvalue needs a Hermitian matrix")
    return float(np.linalg.eigvalsh((a + a.conj().T) / 2)[0])


def min_eigenpair(a: np.ndarray) -> tuple[float, np.ndarray]:
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    return float(w[0]), v[:, 0]


# -- random states and operators (tests, state batteries) ------------------

def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_pure_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None,
                          trace: float = 1.0) -> np.ndarray:
    rank = rank or dim
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return trace * rho / np.trace(rho).real


def random_measurement(dim: int, n_outcomes: int, rng: np.random.Generator, label: str = "M") -> MeasurementSet:
    """Random measurement set from the blocks of a Haar isometry."""
    u = haar_unitary(dim * n_outcomes, rng)[:, :dim]
    ops = tuple((m, u[m * dim:(m + 1) * dim, :]) for m in range(n_outcomes))
    return MeasurementSet(label, ops)
