"""Pairwise SGD stability laboratory."""

from .core import *  # noqa: F401,F403
from .losses import *  # noqa: F401,F403
from .sgd import *  # noqa: F401,F403
from .stability import *  # noqa: F401,F403
from .bounds import *  # noqa: F401,F403
from .minimax import *  # noqa: F401,F403
from .risk import *  # noqa: F401,F403
from .errors import (  # noqa: F401
    ConfigError,
    ConstructionError,
    InsufficientSamplesError,
    InvalidArgumentError,
    InvalidParameterError,
    NumericalOverflowError,
    PairstabError,
    PreconditionError,
)
from . import core, losses, sgd, stability, bounds, minimax, risk, cli  # noqa: F401,E402

__version__ = "0.1.0"
