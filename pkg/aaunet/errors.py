# Exception hierarchy for the AAU-net engine.
#
# Every error derives from AAUNetError and from the builtin a caller would
# naturally catch, so ``except ValueError`` keeps working.

class AAUNetError(Exception):
    """
    Base class of all errors raised by aaunet.
    """
    pass

class ShapeError(AAUNetError, ValueError):
    """
    Raised when tensor shapes disagree.
    """
    def __init__(self, message, dimension=None, expected=None, actual=None):
        """
        Parameters
        ----------
        message : str
            Human readable description

        dimension : str
            Name of the offending dimension, e.g. "channels" or "height"

        expected : int or tuple
            Expected extent

        actual : int or tuple
            Observed extent
        """
        if dimension is not None:
            message = "{} (dimension {}: expected {}, got {})".format(message,
                    dimension, expected, actual)
        super().__init__(message)
        self.dimension = dimension
        self.expected = expected
        self.actual = actual

class NonFiniteError(AAUNetError, ArithmeticError):
    """
    Raised when NaN or Inf values appear where they must not.
    """
    def __init__(self, message, where=None):
        if where is not None:
            message = "{} [{}]".format(message, where)
        super().__init__(message)
        self.where = where

class ConfigError(AAUNetError, ValueError):
    """
    Raised for invalid configuration values.
    """
    pass

class CheckpointError(AAUNetError, IOError):
    """
    Base class for checkpoint decoding failures.
    """
    pass

class BadMagicError(CheckpointError):
    pass

class TruncatedPayloadError(CheckpointError):
    pass

class ConfigMismatchError(CheckpointError):
    pass

class ManifestError(AAUNetError, ValueError):
    """
    Raised for malformed or inconsistent manifests.
    """
    def __init__(self, message, path=None, line_number=None):
        if line_number is not None:
            message = "{}:{}: {}".format(path, line_number, message)
        elif path is not None:
            message = "{}: {}".format(path, message)
        super().__init__(message)
        self.path = path
        self.line_number = line_number

class ImageDecodeError(AAUNetError, IOError):
    pass

class DegenerateError(AAUNetError, ValueError):
    """
    Raised when a statistic is undefined for the given input.
    """
    pass

class MissingAttentionError(AAUNetError, LookupError):
    """
    Raised when inspecting an attention map the block variant does not compute.
    """
    pass
