"""geomhj: Hamiltonian dynamics and Hamilton-Jacobi sections on
symplectic, cosymplectic, conformal, locally conformal symplectic,
contact and nonholonomic phase spaces.

The subpackages layer up: ``expr`` (exact scalar expressions) ->
``exterior`` (forms, fields, derivations) -> ``structures`` (the geometric
structures and their validators) -> ``brackets`` (induced brackets and
identity audits) -> ``dynamics`` (vector fields, integrator, diagnostics)
-> ``nonholonomic`` (constraints and projections) -> ``hj`` (section
residuals and relatedness checks) -> ``cli``.
"""

from .expr import (
    Chart, Expression, parse, diff, evaluate, substitute, canonical,
    is_zero, equivalent, to_str, free_symbols, compile_expr,
    ExprError, ParseError, UndeclaredSymbolError, UnboundSymbolError,
    DomainError,
)

__version__ = "0.1.0"

__all__ = [
    "Chart", "Expression", "parse", "diff", "evaluate", "substitute",
    "canonical", "is_zero", "equivalent", "to_str", "free_symbols",
    "compile_expr", "ExprError", "ParseError", "UndeclaredSymbolError",
    "UnboundSymbolError", "DomainError", "__version__",
]
