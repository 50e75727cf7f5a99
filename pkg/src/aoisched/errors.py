class ValidationError(ValueError):
    """Bad user input: system description, pattern, or parameters."""


class InfeasiblePatternError(ValidationError):
    def __init__(self, missing):
        self.missing = list(missing)
        names = ", ".join(str(m) for m in self.missing)
        super().__init__(f"infeasible: source {names} absent")


class InternalInvariantError(RuntimeError):
    """An internal consistency check failed; this is a bug, not bad input."""
