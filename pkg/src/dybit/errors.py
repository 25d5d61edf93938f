"""Exception hierarchy shared by all dybit modules."""


class DyBitError(Exception):
    """Base class for every error raised by this package."""


class FormatError(DyBitError, ValueError):
    """A code or field set does not fit the requested DyBit format."""


class ModeError(DyBitError, ValueError):
    """Unsupported hardware precision mode or datapath width."""


class CapacityError(DyBitError):
    """No tiling of a layer fits the on-chip buffers."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class InfeasibleError(DyBitError):
    """A search constraint cannot be met even at the lowest precision."""

    def __init__(self, message, best_ratio):
        super().__init__(message)
        self.best_ratio = best_ratio


class SearchSpaceError(DyBitError):
    """Exhaustive enumeration was asked to cover too many assignments."""


class MissingTensorError(DyBitError, KeyError):
    """Weights or calibration activations are missing for a layer."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class SchemaError(DyBitError, ValueError):
    """A descriptor, manifest or config file does not match its schema."""


class DanglingReferenceError(DyBitError, KeyError):
    """A model layer references a blob id absent from the manifest."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DimensionMismatchError(DyBitError, ValueError):
    """A referenced tensor disagrees with the layer's GEMM dimensions."""


class TensorSizeError(DyBitError, ValueError):
    """A tensor blob's byte size disagrees with its manifest entry."""


class TensorValidationError(DyBitError, ValueError):
    """A tensor contains non-finite values."""
