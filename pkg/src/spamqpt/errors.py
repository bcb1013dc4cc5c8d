"""Exception types raised by spamqpt."""


class QPTError(Exception):
    """Base class for all spamqpt errors."""


class DimensionError(QPTError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class NonHermitianError(QPTError, ValueError):
    pass


class NonUnitaryError(QPTError, ValueError):
    pass


class ShapeMismatchError(QPTError, ValueError):
    """Data tables do not line up with the frame they are analyzed against."""


class FrameError(QPTError):
    """A frame matrix is rank-deficient or too ill-conditioned to invert.

    ``matrix_name`` names the offending matrix (e.g. ``"m0"`` or ``"s0"``).
    """

    def __init__(self, message, matrix_name=None):
        super().__init__(message)
        self.matrix_name = matrix_name


class DegenerateDataError(QPTError):
    """Calibration data does not support a rank-d^2 factorization."""


class MatrixPowerError(QPTError):
    """A fractional matrix power is undefined or numerically unsafe.

    ``eigenvalue`` is the eigenvalue that triggered the failure, if any.
    """

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class ConditioningError(MatrixPowerError):
    pass


class BranchCutError(MatrixPowerError):
    pass


class SpamCorrectionError(QPTError):
    """The estimated SPAM error is too large for gauge regularization."""


class NonPhysicalModelError(QPTError, ValueError):
    """A simulated model produced probabilities outside [0, 1]."""


class MissingShotsError(QPTError, ValueError):
    pass
