"""Builtin operator library.

Parameterless entries (``H``, ``X``, ``M_std`` ...) may be used directly as
labels in statements; parameterised ones must be bound with
``define NAME := builtin M_geq(2, 4);``.
"""

from __future__ import annotations

import math
from functools import reduce

import numpy as np

from ..operators import MeasurementSet, OperatorError, UnitaryOp


class UnknownBuiltin(OperatorError):
    pass


def hadamard_n(n: int) -> np.ndarray:
    h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    return reduce(np.kron, [h] * n, np.eye(1, dtype=complex))


def projectors(dim: int) -> list[np.ndarray]:
    out = []
    for i in range(dim):
        p = np.zeros((dim, dim), dtype=complex)
        p[i, i] = 1
        out.append(p)
    return out


def threshold_measurement(m: int, d: int, label: str = "M_geq") -> MeasurementSet:
    """Outcome 0: counter has reached ``m`` (``Σ_{i>=m} |i><i|``); outcome 1: below ``m``."""
    if not 0 <= m <= d:
        raise OperatorError(f"threshold {m} outside [0, {d}]")
    geq = np.diag([1.0 if i >= m else 0.0 for i in range(d)]).astype(complex)
    return MeasurementSet(label, ((0, geq), (1, np.eye(d) - geq)))


def increment(d: int, label: str = "U_succ") -> UnitaryOp:
    """Cyclic shift ``|i> -> |i+1 mod d>``."""
    u = np.zeros((d, d), dtype=complex)
    for i in range(d):
        u[(i + 1) % d, i] = 1
    return UnitaryOp(label, u)


def bit_setter(b: int, d: int, m: int, label: str | None = None) -> UnitaryOp:
    """Controlled bit flip on a counter ``k`` (dim ``d``) and an ``m``-qubit register ``Q``.

    For ``k = |h>`` with ``h < m`` and ``b = 1`` the ``h``-th qubit of ``Q``
    (qubit 0 is the most significant) is flipped, which writes ``b`` into a
    cleared register; ``b = 0`` and ``h >= m`` act as the identity.
    """
    if b not in (0, 1):
        raise OperatorError(f"bit value must be 0 or 1, got {b}")
    if not 1 <= m < d:
        raise OperatorError(f"need 1 <= m < d, got m={m}, d={d}")
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    blocks = []
    for h in range(d):
        if b == 1 and h < m:
            facs = [x if j == h else np.eye(2) for j in range(m)]
            blocks.append(reduce(np.kron, facs))
        else:
            blocks.append(np.eye(2 ** m, dtype=complex))
    u = np.zeros((d * 2 ** m,) * 2, dtype=complex)
    q = 2 ** m
    for h, blk in enumerate(blocks):
        u[h * q:(h + 1) * q, h * q:(h + 1) * q] = blk
    return UnitaryOp(label or f"U_P{b}", u)


def _fixed(name, params, arity):
    if len(params) != arity:
        raise OperatorError(f"builtin {name} takes {arity} parameter(s), got {len(params)}")


def builtin(name: str, *params: int):
    """Look up a builtin operator; the result's label is ``name``."""
    p = tuple(int(x) for x in params)
    if name in ("H", "X", "Y", "Z"):
        _fixed(name, p, 0)
        mats = {
            "H": hadamard_n(1),
            "X": np.array([[0, 1], [1, 0]]),
            "Y": np.array([[0, -1j], [1j, 0]]),
            "Z": np.array([[1, 0], [0, -1]]),
        }
        return UnitaryOp(name, mats[name])
    if name == "I":
        d = p[0] if p else 2
        return UnitaryOp(name, np.eye(d))
    if name == "H_n":
        _fixed(name, p, 1)
        return UnitaryOp(name, hadamard_n(p[0]))
    if name == "M_std":
        _fixed(name, p, 0)
        return MeasurementSet(name, tuple(enumerate(projectors(2))))
    if name == "M_basis":
        _fixed(name, p, 1)
        return MeasurementSet(name, tuple(enumerate(projectors(p[0]))))
    if name == "M_triv":
        d = p[0] if p else 2
        return MeasurementSet(name, ((0, np.zeros((d, d))), (1, np.eye(d))))
    if name == "M_geq":
        _fixed(name, p, 2)
        return threshold_measurement(p[0], p[1], name)
    if name == "U_succ":
        _fixed(name, p, 1)
        return increment(p[0], name)
    if name == "U_P":
        _fixed(name, p, 3)
        return bit_setter(p[0], p[1], p[2], name)
    raise UnknownBuiltin(f"unknown builtin {name!r}")


PARAMETERLESS = ("H", "X", "Y", "Z", "I", "M_std", "M_triv")
