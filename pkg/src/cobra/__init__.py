"""Modelling, symmetry reduction and strategy synthesis for deductive games."""

from .formula import (FALSE, TRUE, Formula, Variable, and_, canonicalize,
                      conj, disj, evaluate, exactly, not_, or_, param_,
                      pretty, var_)

__all__ = [
    "Formula", "Variable", "TRUE", "FALSE",
    "var_", "param_", "not_", "and_", "or_", "exactly", "conj", "disj",
    "canonicalize", "evaluate", "pretty",
]

__version__ = "0.1.0"
