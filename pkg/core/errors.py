"""
Exception hierarchy shared by every core module.
Each class names the kind of problem, so callers (the CLI in particular)
can decide between a clean error message and a non-zero exit.
"""


class DPWFLError(Exception):
    """Base class for every error raised by this package."""


class DomainError(DPWFLError, ValueError):
    """A parameter lies outside the domain an operation is defined on."""


class DimensionMismatchError(DomainError):
    """Model state and loss model disagree on the parameter dimension."""


class ConfigError(DPWFLError, ValueError):
    """The experiment configuration is malformed or inconsistent."""


class QuadratureSupportError(DPWFLError):
    """The evaluation grid does not cover the densities' support."""


class CombinatorialExplosionError(DPWFLError):
    """Exhaustive enumeration would exceed the outcome cap."""
