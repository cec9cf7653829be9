"""Exception hierarchy shared by every module.

Each error carries a ``details`` dict so the CLI can emit a single-line
machine-parseable record (``error=<Name> key=value ...``).
"""

from __future__ import annotations


class ProtoAdaptError(Exception):
    """Base class for all library errors."""

    def __init__(self, msg: str, **details):
        super().__init__(msg)
        self.details = details

    def record(self) -> str:
        parts = [f"error={type(self).__name__}"]
        for k, v in self.details.items():
            parts.append(f"{k}={v}")
        parts.append(f'msg="{self.args[0]}"')
        return " ".join(parts)


class DegenerateVector(ProtoAdaptError):
    """A vector with (near-)zero norm where a direction is required."""


class NumericalError(ProtoAdaptError):
    """Non-finite values where finite arithmetic is required."""


class ShapeError(ProtoAdaptError):
    """Operands with incompatible dimensions."""


class EmptyInput(ProtoAdaptError):
    """An operation received no data."""


class DomainError(ProtoAdaptError):
    """Scalar argument outside its valid domain."""


class MissingClass(ProtoAdaptError):
    """A class has no support samples."""


class UnsupportedKind(ProtoAdaptError):
    """Operation undefined for the given penalty kind."""


class InsufficientShots(ProtoAdaptError):
    """A class has fewer base samples than the requested shot count."""


class GeometryError(ProtoAdaptError):
    """Invalid synthetic-task geometry."""


class MagicMismatch(ProtoAdaptError):
    """Feature container does not start with the expected magic bytes."""


class SizeMismatch(ProtoAdaptError):
    """Feature container payload length disagrees with its header."""


class SidecarMismatch(ProtoAdaptError):
    """JSON sidecar disagrees with the binary payload."""


class ClassSpaceError(ProtoAdaptError):
    """Target task class space incompatible with the source."""
