"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument or parameter set breaks a documented precondition.

    Messages name the offending dimension or field so callers (and the CLI)
    can report exactly which constraint failed.
    """


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf from finite inputs."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        msg = f"non-finite values produced by op '{op}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
