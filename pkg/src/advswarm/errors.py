"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so raising the right class
matters more than the message text.
"""


class AdvswarmError(Exception):
    """Base class for all package errors."""


class InputError(AdvswarmError):
    """Invalid argument: dimension mismatch, bad coordinates, infeasible spec."""


class DataError(AdvswarmError):
    """Malformed dataset file (bad magic, truncated payload, label mismatch)."""


class TrainingDivergedError(AdvswarmError):
    """Loss became non-finite during training."""


class OptimizerError(AdvswarmError):
    """The swarm optimizer hit a non-finite objective value."""


class NumericalError(AdvswarmError):
    """A numerical intermediate became non-finite."""
