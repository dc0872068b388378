"""Exception types shared across the package."""


class ValidusError(Exception):
    """Base class for all library errors."""


class BudgetExceeded(ValidusError):
    def __init__(self, count, cap):
        super().__init__(f"enumeration would produce {count} configurations (cap {cap})")
        self.count = count
        self.cap = cap


class TableMissingEntry(ValidusError):
    pass


class LambdaUndefined(ValidusError):
    """No common admissible value exists for some size n-t configuration."""

    def __init__(self, counterexample, message=None):
        super().__init__(message or f"similarity condition fails at {counterexample}")
        self.counterexample = counterexample


class InsufficientPartials(ValidusError):
    pass


class MixedDigests(ValidusError):
    pass


class DuplicateSigner(ValidusError):
    pass


class UnknownAdversary(ValidusError):
    pass


class SchemaError(ValidusError):
    """Malformed scenario, property, trace or CSV file."""
