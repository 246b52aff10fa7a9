"""Exception types shared across the package."""


class LatentFMError(Exception):
    """Base class for all errors raised by latentfm."""


class ParseError(LatentFMError):
    """A ratings or artifact file could not be parsed.

    Carries the offending path and 1-based line number in the message.
    """

    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no


class ValidationError(LatentFMError):
    """Input data violated a declared contract (scale, id maps, dimensions)."""


class UnsupportedPolicyError(LatentFMError):
    """A split policy cannot be applied to the given dataset."""


class ConfigError(LatentFMError):
    """An experiment configuration is malformed or inconsistent."""


class TrainingDiverged(LatentFMError):
    """Model parameters became non-finite during training."""
