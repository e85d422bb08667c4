"""Exception hierarchy shared by every stage."""


class ArtifactError(Exception):
    pass


class DomainError(ArtifactError, ValueError):
    """Argument outside the operation's domain."""


class StructuralError(ArtifactError):
    """Malformed partition or file; raised before any rule check."""


class CapacityError(ArtifactError):
    """Exact computation refused because the instance is too large."""


class ContractViolation(ArtifactError):
    """A bad-event predicate read a variable outside its declared vbl."""


class InvariantBreach(ArtifactError):
    """An upstream guarantee the current operation relies on does not hold."""


class HallViolation(InvariantBreach):
    def __init__(self, msg, hall_set=(), neighborhood=()):
        super().__init__(msg)
        self.hall_set = tuple(hall_set)
        self.neighborhood = tuple(neighborhood)


class StageAbort(ArtifactError):
    """A stage could not complete; carries a diagnostic dict."""

    def __init__(self, stage, msg, diagnostics=None):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage
        self.diagnostics = diagnostics or {}


class InfeasibleParams(DomainError):
    pass
