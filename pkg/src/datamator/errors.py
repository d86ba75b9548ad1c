"""Exception types shared across the engine."""

from __future__ import annotations


class DatamatorError(Exception):
    """Base class for every error raised by this package."""


# --- dataset loading ---------------------------------------------------------

class MalformedCsvError(DatamatorError):
    pass


class DuplicateColumnError(DatamatorError):
    pass


class AllNullError(DatamatorError):
    """A column has no non-null cells; the caller must assign a kind."""


# --- pipeline scripts --------------------------------------------------------

class QdmrScriptError(DatamatorError):
    """Base for script parsing failures; carries the 1-based source line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line
        self.reason = message


class QdmrSyntaxError(QdmrScriptError):
    pass


class ForwardReferenceError(QdmrScriptError):
    pass


class UnknownOperatorError(QdmrScriptError):
    pass


class ArityMismatchError(QdmrScriptError):
    pass


# --- execution ---------------------------------------------------------------

class EvalError(DatamatorError):
    pass


class VariantMismatchError(EvalError):
    pass


class NonNumericValueError(EvalError):
    pass


class EmptyInputError(EvalError):
    """Extremum or mean requested over an empty value set."""


class UnorderedComparisonError(EvalError):
    pass


class KindMismatchError(EvalError):
    pass


class ExecutionError(DatamatorError):
    """Wraps an EvalError with the 1-based pipeline step it occurred at."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


# --- decomposition and feedback ----------------------------------------------

class UnrecognizedQueryError(DatamatorError):
    """No query pattern matched; the caller should fall back to a script."""


class InvalidCorrectionError(DatamatorError):
    """A feedback correction failed validation and was rejected."""


# --- compilation -------------------------------------------------------------

class NoContinuousOrderError(DatamatorError):
    """No arrangement of the pipeline gives every step its predecessor's output."""

    def __init__(self, message: str, dependencies: dict[int, set[int]] | None = None):
        super().__init__(message)
        self.dependencies = dependencies or {}
