"""Runtime cost models: how many time units each primitive step takes."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping


class MissingCost(KeyError):
    def __str__(self):
        return self.args[0]


def _check(name: str, value) -> float:
    v = float(value)
    if not math.isfinite(v) or v < 0:
        raise ValueError(f"cost {name!r} must be finite and non-negative, got {value!r}")
    return v


@dataclass(frozen=True)
class CostModel:
    """Per-label time costs.  Lookups fall back to ``default_cost`` when it is set."""

    init_costs: Mapping[str, float] = field(default_factory=dict)
    unitary_costs: Mapping[str, float] = field(default_factory=dict)
    measurement_costs: Mapping[str, float] = field(default_factory=dict)
    skip_cost: float = 1.0
    default_cost: float | None = None

    def __post_init__(self):
        for attr in ("init_costs", "unitary_costs", "measurement_costs"):
            table = {str(k): _check(k, v) for k, v in dict(getattr(self, attr)).items()}
            object.__setattr__(self, attr, MappingProxyType(table))
        object.__setattr__(self, "skip_cost", _check("skip", self.skip_cost))
        if self.default_cost is not None:
            object.__setattr__(self, "default_cost", _check("default", self.default_cost))

    @classmethod
    def uniform(cls, cost: float = 1.0, skip: float | None = None) -> "CostModel":
        """Every label costs ``cost``; ``skip`` defaults to the same value."""
        return cls(skip_cost=cost if skip is None else skip, default_cost=cost)

    def _lookup(self, table: Mapping[str, float], kind: str, label: str) -> float:
        if label in table:
            return table[label]
        if self.default_cost is not None:
            return self.default_cost
        raise MissingCost(f"no {kind} cost for label {label!r} and no default cost")

    def init(self, label: str) -> float:
        return self._lookup(self.init_costs, "init", label)

    def unitary(self, label: str) -> float:
        return self._lookup(self.unitary_costs, "unitary", label)

    def measurement(self, label: str) -> float:
        return self._lookup(self.measurement_costs, "measurement", label)

    def charge(self, kind: str, label: str) -> float:
        if kind == "skip":
            return self.skip_cost
        return {"init": self.init, "unitary": self.unitary, "measurement": self.measurement}[kind](label)

    def scaled(self, factor: float) -> "CostModel":
        return CostModel(
            {k: v * factor for k, v in self.init_costs.items()},
            {k: v * factor for k, v in self.unitary_costs.items()},
            {k: v * factor for k, v in self.measurement_costs.items()},
            self.skip_cost * factor,
            None if self.default_cost is None else self.default_cost * factor,
        )

    # -- JSON
    def to_json(self) -> dict:
        return {
            "skip": self.skip_cost,
            "init": dict(sorted(self.init_costs.items())),
            "unitary": dict(sorted(self.unitary_costs.items())),
            "measurement": dict(sorted(self.measurement_costs.items())),
            "default": self.default_cost,
        }

    @classmethod
    def from_json(cls, data: dict) -> "CostModel":
        unknown = set(data) - {"skip", "init", "unitary", "measurement", "default"}
        if unknown:
            raise ValueError(f"unknown cost-model keys: {sorted(unknown)}")
        return cls(
            data.get("init", {}),
            data.get("unitary", {}),
            data.get("measurement", {}),
            data.get("skip", 1.0),
            data.get("default"),
        )

    @classmethod
    def load(cls, path) -> "CostModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def digest(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


UNIT = CostModel.uniform(1.0)
