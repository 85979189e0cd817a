"""Exception hierarchy shared across the toolkit.

The CLI maps each family onto a stable exit code, so new errors should
subclass one of these rather than raising bare built-ins.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(ToolkitError, ValueError):
    """An argument violates the documented precondition of an operation."""


class ValidationError(ToolkitError):
    """Input data (annotations, detections, images) failed validation.

    Attributes:
        offenders: identifiers of the offending items, when known.
    """

    def __init__(self, message, offenders=None):
        super().__init__(message)
        self.offenders = list(offenders or [])


class ParseError(ValidationError):
    """A structured input file could not be parsed."""


class ConfigError(ToolkitError):
    """A pipeline configuration is inconsistent with the run it drives."""


class CodecError(ToolkitError):
    """Image encoding or decoding failed."""


class MixerIneligible(ToolkitError):
    """A sample-combination augmentation found no eligible object or partner.

    Callers decide the fallback; the pipeline passes the sample through.
    """
