"""
Exception hierarchy for the quantum formula toolkit.

Every error carries the CLI exit code it maps to, so the command line
front-end can translate failures without inspecting messages:

- 2: the input could not be parsed
- 3: evaluation or linear algebra failed
- 4: a transformation (dequantization, classification) failed
- 5: the command line was used incorrectly
"""

from typing import Optional, Sequence


class QFormulaError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


# Parse errors

class ParseError(QFormulaError):
    """A JSON document does not match the IR schema."""

    exit_code = 2

    def __init__(self, message: str, path: Sequence = ()):
        self.path = tuple(path)
        location = "/" + "/".join(str(p) for p in self.path)
        super().__init__(f"{message} (at {location})")


class NotCPTPError(QFormulaError):
    """Kraus operators do not sum to the identity."""

    exit_code = 2


# Evaluation errors

class EvaluationError(QFormulaError):
    exit_code = 3


class UnassignedVariableError(EvaluationError):
    def __init__(self, var: int):
        self.var = var
        super().__init__(f"variable x{var} has no value in the assignment")


class TooManyVariablesError(EvaluationError):
    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"{count} variables exceed the enumeration limit of {limit}")


class DimensionMismatchError(EvaluationError, ValueError):
    pass


class NotPureError(EvaluationError):
    pass


class NotOrthogonalError(EvaluationError):
    pass


class NotUnitaryError(EvaluationError):
    pass


# Transformation errors

class TransformationError(QFormulaError):
    exit_code = 4


class NotReadOnceError(TransformationError):
    def __init__(self, repeated: Sequence[int]):
        self.repeated = tuple(repeated)
        names = ", ".join(f"x{v}" for v in self.repeated)
        super().__init__(f"NotReadOnce: variables read more than once: {names}")


class NonClassicalFormulaOutputError(TransformationError):
    pass


class StructureViolationError(TransformationError):
    """A dependent wire does not carry exactly two pure orthogonal states."""

    def __init__(self, message: str, wire: Optional[int] = None, path: Sequence[int] = ()):
        self.wire = wire
        self.path = tuple(path)
        where = f" on wire {wire}" if wire is not None else ""
        super().__init__(f"StructureViolation{where} at node {list(self.path)}: {message}")


class SeparationViolatedError(TransformationError):
    def __init__(self, message: str, wire: Optional[int] = None, path: Sequence[int] = ()):
        self.wire = wire
        self.path = tuple(path)
        where = f" on wire {wire}" if wire is not None else ""
        super().__init__(f"SeparationViolated{where} at node {list(self.path)}: {message}")


class NotSeparableError(TransformationError):
    def __init__(self, components: int):
        self.components = components
        super().__init__(f"state set splits into {components} components, expected 2")


class NonClassicalOutputError(TransformationError):
    pass


class InternalConsistencyError(TransformationError):
    """A guaranteed identity failed; indicates a bug rather than bad input."""


# Usage errors

class UsageError(QFormulaError):
    exit_code = 5
