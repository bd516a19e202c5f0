"""Exception types shared across the engine."""


class TraceError(Exception):
    """Base class for all engine errors."""


class ContractError(TraceError):
    """A documented precondition was violated by the caller."""


# --- ontology ---------------------------------------------------------------

class OntologyError(TraceError):
    pass


class DuplicateTypeError(OntologyError):
    """Name already registered; carries the existing definition."""

    def __init__(self, name, existing):
        super().__init__(f"duplicate type name: {name!r} (existing: {existing})")
        self.name = name
        self.existing = existing


class UnknownTypeError(OntologyError):
    pass


class InvalidTypeNameError(OntologyError):
    pass


# --- graph store ------------------------------------------------------------

class StoreError(TraceError):
    pass


class StoreValidationError(StoreError):
    def __init__(self, subject, violations):
        super().__init__(f"validation failed for {subject}: {violations}")
        self.subject = subject
        self.violations = list(violations)


class UnknownNodeError(StoreError):
    pass


class DanglingEndpointError(StoreError):
    def __init__(self, missing_id):
        super().__init__(f"endpoint not in store: {missing_id}")
        self.missing_id = missing_id


class TypeMismatchError(StoreError):
    pass


class WatermarkError(StoreError):
    pass


class SnapshotError(StoreError):
    def __init__(self, message, path=None, line=None):
        loc = f" ({path}:{line})" if path is not None and line is not None else ""
        super().__init__(message + loc)
        self.path = path
        self.line = line


# --- ingestion --------------------------------------------------------------

class CrawlError(TraceError):
    pass


class PluginError(TraceError):
    pass


class RecordRejected(TraceError):
    """A raw record cannot be normalized; carries the reason."""

    def __init__(self, native_id, reason):
        super().__init__(f"record {native_id!r} rejected: {reason}")
        self.native_id = native_id
        self.reason = reason


# --- documents / oracle -----------------------------------------------------

class DocumentError(TraceError):
    pass


class OracleError(TraceError):
    pass


class OracleUnavailable(OracleError):
    """The text-intelligence backend did not answer; work is deferred."""


class ExtractionFormatError(OracleError):
    """Oracle output was wholly unparseable; carries the raw response."""

    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class SanitizeLoopError(TraceError):
    """Sanitize rules failed to reach a fixed point."""
