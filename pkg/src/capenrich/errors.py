"""Shared exception types.

InputError covers malformed files and contract violations on user
input; the CLI maps it to exit code 2.  NumericError covers runtime
numeric failures such as training divergence; the CLI maps it to
exit code 3.
"""


class InputError(ValueError):
    """Malformed or contract-violating input (file, record, argument)."""


class NumericError(RuntimeError):
    """Numeric failure at runtime (NaN loss, non-finite kernel, ...)."""


class TrainDivergence(NumericError):
    """Training loss became non-finite.  Carries the epoch index."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged (non-finite loss) at epoch {epoch}")
