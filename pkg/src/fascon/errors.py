"""Exception types raised across the package."""


class FasError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FasError, ValueError):
    pass


class DegenerateConstraintError(FasError):
    """A constraint's weights sum to (nearly) zero and cannot be rescaled."""

    def __init__(self, expert, total):
        self.expert = expert
        self.total = total
        super().__init__(f"expert {expert}: weight sum {total!r} too close to zero to rescale")


class DivergenceError(FasError):
    """Training produced a non-finite value."""

    def __init__(self, update, what="energy"):
        self.update = update
        super().__init__(f"non-finite {what} at update {update}")


class CapacityError(FasError):
    pass


class PgmParseError(FasError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")
