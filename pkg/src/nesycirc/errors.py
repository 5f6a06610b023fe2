"""Exception types shared across the package."""

from __future__ import annotations


class NesycircError(Exception):
    """Base class for all errors raised by this package."""


class DimacsError(NesycircError):
    """Malformed DIMACS input. Carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormulaError(NesycircError):
    """Malformed formula text or misuse of a formula AST."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"position {position}: {message}"
        super().__init__(message)


class CircuitError(NesycircError):
    """A circuit violates a structural requirement of the requested operation."""


class StructureError(NesycircError):
    """Unknown structure tag, or an operation the structure does not support."""


class IncompatibleStructures(StructureError):
    """No registered transformation between two structure tags."""

    def __init__(self, from_tag: str, to_tag: str):
        self.from_tag = from_tag
        self.to_tag = to_tag
        super().__init__(f"no transformation from structure {from_tag!r} to {to_tag!r}")


class CarrierError(NesycircError):
    """A value lies outside the carrier set of its declared structure."""


class CompositionError(NesycircError):
    """Module wiring failure: unknown symbols, duplicate producers, or cycles."""
