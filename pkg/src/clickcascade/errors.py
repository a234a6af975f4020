"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Input violates an operation's precondition."""


class RecordError(InvalidInputError):
    """One or more input records are invalid.

    ``problems`` holds ``(row, message)`` pairs; ``row`` is the zero-based
    record index or, for files, the one-based line number.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"row {row}: {msg}" for row, msg in self.problems]
        super().__init__("; ".join(lines) if lines else "invalid records")
