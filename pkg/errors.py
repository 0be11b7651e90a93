"""
errors.py

Exceptions raised by the geometry kernel, the functionals and the lab.
Validation problems subclass ValueError, numerical failures RuntimeError.
"""


class WulffLabError(Exception):
    """Base class for every error raised by this project."""


class InputError(WulffLabError, ValueError):
    """Malformed geometry or config document."""


class ConfigError(WulffLabError, ValueError):
    """Experiment configuration that cannot be run."""


class UnboundedError(WulffLabError, ValueError):
    """Halfspaces do not bound a body."""


class DegenerateError(WulffLabError, ValueError):
    """Vertex set is not full-dimensional or a required facet is missing."""


class DimensionMismatch(WulffLabError, ValueError):
    pass


class ZeroVolume(WulffLabError, ValueError):
    pass


class IndexOutOfRange(WulffLabError, IndexError):
    pass


class ParallelityLost(WulffLabError, ValueError):
    """A perturbed facet vanished, so K^a is no longer parallel to K."""


class NotVolumeNormalized(WulffLabError, ValueError):
    pass


class NotSingleDirection(WulffLabError, ValueError):
    """Two perturbation vectors differ in more (or fewer) than one entry."""


class OptimizerFailure(WulffLabError, RuntimeError):
    pass


class QuadratureNoConvergence(WulffLabError, RuntimeError):
    pass


class NoConvergence(WulffLabError, RuntimeError):
    pass
