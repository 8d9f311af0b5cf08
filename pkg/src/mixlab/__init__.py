"""mixlab: numerical toolkit for mixing rates of suspension semiflows over Gibbs-Markov maps."""
from . import errors
from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
