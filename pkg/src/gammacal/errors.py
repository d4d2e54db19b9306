"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/config problems to 2, file
problems to 3 and numerical failures to 4.
"""


class InvalidInputError(ValueError):
    """Bad arguments or data that violate an operation's preconditions."""


class SchemaError(InvalidInputError):
    """A CSV file does not follow the x*/t/y/w* column convention."""


class NumericalError(ArithmeticError):
    """A fit or bound could not be computed to the required accuracy."""


class ConvergenceWarning(UserWarning):
    """Emitted when a solver falls back to a regularised or partial answer."""
