import numpy as np


class InvalidParameterError(ValueError):
    """A physical or numerical parameter is outside its admissible range."""


class DegenerateSignalError(ValueError):
    """A steering vector (or every vector on a search grid) is identically zero."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """A scatter matrix that must be inverted is singular or has too few samples."""


class CalibrationError(ValueError):
    """Too few Monte-Carlo trials for the requested tail probability."""


class ConvergenceError(RuntimeError):
    """An iterative solver did not reach its tolerance."""


class ConfigError(ValueError):
    """Experiment configuration could not be parsed or failed validation."""
