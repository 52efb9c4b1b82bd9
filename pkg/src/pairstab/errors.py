"""Exception types raised across the package."""


class PairstabError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PairstabError, ValueError):
    """An argument is outside the domain an operation accepts."""


class InvalidParameterError(PairstabError, ValueError):
    """A model parameter is malformed (non-finite, wrong shape, not symmetric)."""


class PreconditionError(PairstabError, ValueError):
    """A theorem's regime precondition does not hold for the supplied inputs."""


class ConstructionError(PairstabError, ValueError):
    """A two-point construction produced an invalid distribution."""


class InsufficientSamplesError(PairstabError, RuntimeError):
    """Too few Monte-Carlo replicates survived a conditioning filter."""


class NumericalOverflowError(PairstabError, FloatingPointError):
    """An SGD trajectory produced a non-finite gradient or iterate.

    Attributes
    ----------
    step : int
        Step index ``t`` at which the overflow was detected.
    norm : float
        Norm of the iterate entering that step.
    """

    def __init__(self, step, norm):
        self.step = int(step)
        self.norm = float(norm)
        super().__init__(f"non-finite gradient at step t={self.step} (|w|={self.norm:.6g})")


class ConfigError(PairstabError, ValueError):
    """Experiment configuration failed validation.

    ``field`` names the offending key so the CLI can report it.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
