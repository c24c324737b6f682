"""Exception hierarchy shared across the package.

Two broad families matter for the CLI exit codes: usage/data errors
(bad files, bad dimensions, bad flags) and numerical failures
(non-convergence, divergence, infeasible constraints).
"""

from __future__ import annotations


class SpecoarseError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SpecoarseError, ValueError):
    """Operand shapes are incompatible."""


class FormatError(SpecoarseError, ValueError):
    """A file could not be parsed or violates its format contract."""


class MeshError(SpecoarseError, ValueError):
    """A triangle mesh violates a structural invariant."""


class DegenerateFaceError(MeshError):
    """A face has (numerically) zero area."""

    def __init__(self, face_index: int, message: str | None = None):
        self.face_index = face_index
        super().__init__(message or f"face {face_index} is degenerate (zero area)")


class UnitsError(SpecoarseError, ValueError):
    """Unit exponents make a formula undefined and no override was given."""


class ClusteringError(SpecoarseError, ValueError):
    """The clustering request is unsatisfiable (e.g. fewer roots than components)."""


class NumericalError(SpecoarseError):
    """A numerical procedure failed (exit code 1 in the CLI)."""


class EigenSolveError(NumericalError):
    """The eigensolver did not converge within its iteration cap."""


class DivergenceError(NumericalError):
    """The optimizer produced a non-finite objective."""


class InfeasibleConstraintError(NumericalError):
    """The null-space equality constraint cannot be satisfied.

    Carries the interpolation-matrix row whose sparsity support misses
    every nonzero of the constraint vector.
    """

    def __init__(self, row: int, message: str | None = None):
        self.row = row
        super().__init__(
            message
            or f"row {row}: sparsity support misses every nonzero of the "
            "restricted null-space basis; constraint infeasible"
        )


class SupportViolationError(NumericalError):
    """A sparse product produced significant entries outside its allowed pattern."""
