"""Expected-runtime analysis for quantum while-programs."""

__version__ = "0.1.0"
