from .builtins import builtin
from .elaborate import ElaboratedProgram, elaborate, load, load_file
from .parser import parse, parse_program, tokenize
from .syntax import (Case, Diagnostic, ElaborationError, Init, OpDef, Program, QgclError,
                     QgclSyntaxError, Seq, Skip, SourceFile, UnitaryApp, VarDecl, While, pretty, seq)

__all__ = [
    "builtin", "ElaboratedProgram", "elaborate", "load", "load_file", "parse", "parse_program",
    "tokenize", "Case", "Diagnostic", "ElaborationError", "Init", "OpDef", "Program", "QgclError",
    "QgclSyntaxError", "Seq", "Skip", "SourceFile", "UnitaryApp", "VarDecl", "While", "pretty", "seq",
]
