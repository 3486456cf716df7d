"""Exception types shared across the toolkit."""


class ParameterError(ValueError):
    """A parameter is outside its legal range."""


class ContractError(ValueError):
    """An input violates a structural precondition (shape, symmetry, kernel mismatch)."""


class NumericalError(RuntimeError):
    """A numerical routine failed: non-convergence, or a singular/indefinite system."""


class TrainingError(RuntimeError):
    """Training cannot proceed on the given data."""


class ConfigurationError(ValueError):
    """An experiment or cross-validation configuration is unusable."""


class DegenerateModelError(ValueError):
    """A model has no usable hyperplane (zero norm in the implicit space)."""


class RangeError(ValueError):
    """A query lies outside the sampled grid."""


class ParseError(ValueError):
    """A file could not be parsed.  Carries the offending position when known."""

    def __init__(self, message, *, offset=None, row=None):
        super().__init__(message)
        self.offset = offset
        self.row = row
