"""Exception hierarchy shared across the pipeline."""


class DoolyError(Exception):
    """Base class for all errors raised by this package."""


class MixValueConflict(DoolyError):
    """Two different base labels were assigned to the same component value."""


class UnknownComponent(DoolyError):
    """A split was requested for a value absent from the mix component map."""


class ParseError(DoolyError):
    """A file could not be parsed as the documented format."""


class ValidationError(DoolyError):
    """A parsed document violates an invariant; carries the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ShapeMismatch(DoolyError):
    """Element counts disagree across a dimension-mapping operation."""


class MalformedTrace(DoolyError):
    """Trace events do not form a valid nesting forest."""


class RetraceFailed(DoolyError):
    """Two consecutive dummy batches both collided with registry values."""


class ContextUnavailable(DoolyError):
    """Execution context was requested for a module outside the stateful registry."""


class Unresolvable(DoolyError):
    """Bottom-up resolution failed even at the tree root (internal assertion)."""


class StoreUnavailable(DoolyError):
    """The latency database could not be reached."""


class DuplicateKey(DoolyError):
    """Re-insert of an existing measurement key with a different latency."""


class OraclePanic(DoolyError):
    """The analytical oracle failed; carries the offending sweep point."""


class InsufficientData(DoolyError):
    """A signature has too few measurements to fit a regression."""

    def __init__(self, signature_hash: str, have: int, need: int):
        super().__init__(
            f"signature {signature_hash[:12]}…: {have} measurements, need >= {need}"
        )
        self.signature_hash = signature_hash
        self.have = have
        self.need = need


class UnknownSignature(DoolyError):
    """A latency prediction was requested for an unfitted signature."""


class LengthMismatch(DoolyError):
    """Series of unequal length were compared."""


class ZeroTruth(DoolyError):
    """MAPE was requested against a series containing zero."""


class NonTermination(DoolyError):
    """The simulation event loop exceeded its iteration cap."""
