from .cost import UNIT, CostModel, MissingCost
from .evaluators import (BackwardResult, ErtOptions, ErtReport, ForwardResult, LoopInBody, LoopReport,
                         char_fun_apply, char_fun_apply_form, ert_affine, ert_affine_form, ert_backward,
                         ert_backward_many,
                         ert_forward, ert_of_program)
from .expr import ZERO, Affine, RuntimeExpr, projector_term
from .invariant import REFUTED, UNKNOWN, VERIFIED, InvariantVerdict, check_invariant, state_battery

__all__ = [
    "UNIT", "CostModel", "MissingCost", "BackwardResult", "ErtOptions", "ErtReport", "ForwardResult",
    "LoopInBody", "LoopReport", "char_fun_apply", "char_fun_apply_form", "ert_affine", "ert_affine_form",
    "ert_backward", "ert_backward_many", "ert_forward", "ert_of_program", "ZERO", "Affine", "RuntimeExpr", "projector_term",
    "REFUTED", "UNKNOWN", "VERIFIED", "InvariantVerdict", "check_invariant", "state_battery",
]
