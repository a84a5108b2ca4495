"""
Exception hierarchy for the toy diffusion engine.
"""


class ToyDiffusionError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ToyDiffusionError, ValueError):
    """Invalid arguments, schedules, datasets or experiment configs."""


class UnreachableStateError(ToyDiffusionError, ValueError):
    """
    A posterior had a zero normalizer: x_t cannot be produced from x_0
    within the requested steps.
    """


class OffManifoldError(ToyDiffusionError, RuntimeError):
    """The noisy state is inconsistent with every template."""


class SamplingFailure(ToyDiffusionError, RuntimeError):
    """A sampling chain exhausted its restarts."""
