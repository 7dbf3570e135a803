"""Affine runtime functions ``t(ρ) = c₀ + Σ_j c_j tr(A_j ρ)``."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..operators import Observable, OperatorError, PartialDensityMatrix, StateSpaceLayout


@dataclass(frozen=True)
class Affine:
    """Collapsed form on a fixed layout: constant plus one full-space Hermitian matrix."""

    constant: float
    matrix: np.ndarray = field(repr=False)

    def __call__(self, rho) -> float:
        if isinstance(rho, PartialDensityMatrix):
            rho = rho.matrix
        # tr(Aρ) without forming the product
        return self.constant + float(np.real(np.sum(self.matrix * np.asarray(rho).T)))

    def __sub__(self, other: "Affine") -> "Affine":
        return Affine(self.constant - other.constant, self.matrix - other.matrix)

    def __add__(self, other: "Affine") -> "Affine":
        return Affine(self.constant + other.constant, self.matrix + other.matrix)

    def scale(self, k: float) -> "Affine":
        return Affine(self.constant * k, self.matrix * k)

    def hermitian(self) -> "Affine":
        return Affine(self.constant, (self.matrix + self.matrix.conj().T) / 2)

    @classmethod
    def zero(cls, dim: int) -> "Affine":
        return cls(0.0, np.zeros((dim, dim), dtype=complex))

    def max_abs_diff(self, other: "Affine") -> float:
        return max(abs(self.constant - other.constant), float(np.max(np.abs(self.matrix - other.matrix))))

    def to_expr(self) -> "RuntimeExpr":
        return RuntimeExpr(self.constant, ((1.0, Observable(self.hermitian().matrix)),))


@dataclass(frozen=True)
class RuntimeExpr:
    constant: float = 0.0
    terms: tuple[tuple[float, Observable], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "terms", tuple((float(c), o) for c, o in self.terms))

    def affine(self, layout: StateSpaceLayout) -> Affine:
        d = layout.total_dim
        a = np.zeros((d, d), dtype=complex)
        for c, obs in self.terms:
            a = a + c * obs.full(layout)
        return Affine(self.constant, a)

    def evaluate(self, rho: PartialDensityMatrix) -> float:
        return self.affine(rho.layout)(rho)

    def validate(self, layout: StateSpaceLayout) -> "RuntimeExpr":
        for _, obs in self.terms:
            obs.validate()
            obs.full(layout)
        return self

    # -- JSON: {constant, terms: [{coeff, observable: {vars, matrix}}]}
    def to_json(self) -> dict:
        terms = []
        for c, obs in self.terms:
            terms.append({
                "coeff": c,
                "observable": {
                    "vars": None if obs.vars is None else list(obs.vars),
                    "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in obs.matrix],
                },
            })
        return {"constant": self.constant, "terms": terms}

    @classmethod
    def from_json(cls, data: dict) -> "RuntimeExpr":
        terms = []
        for t in data.get("terms", []):
            obs = t["observable"]
            mat = np.array([[complex(re_, im) for re_, im in row] for row in obs["matrix"]], dtype=complex)
            vars_ = obs.get("vars")
            terms.append((float(t["coeff"]), Observable(mat, None if vars_ is None else tuple(vars_))))
        return cls(float(data.get("constant", 0.0)), tuple(terms))

    @classmethod
    def load(cls, path) -> "RuntimeExpr":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


ZERO = RuntimeExpr()


def projector_term(layout: StateSpaceLayout, var: str, h: int, coeff: float) -> tuple[float, Observable]:
    """``coeff · tr(|h⟩⟨h|^var ρ)``."""
    d = layout.dim(var)
    if not 0 <= h < d:
        raise OperatorError(f"basis index {h} out of range for {var!r}")
    p = np.zeros((d, d), dtype=complex)
    p[h, h] = 1
    return coeff, Observable(p, (var,))

