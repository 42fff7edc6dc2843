# error kinds raised by the library

# SPDX-License-Identifier: Apache-2.0


class BpdqError(Exception):
    pass


class ConfigError(BpdqError, ValueError):
    pass


class TensorIOError(BpdqError):
    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class FormatError(BpdqError):
    pass


class TruncatedError(FormatError):
    pass


class NonFiniteError(FormatError):
    pass


class NumericalError(BpdqError):
    pass


class SingularHessianError(NumericalError):
    pass


class SingularMatrixError(NumericalError):
    pass


class ShapeError(BpdqError, ValueError):
    pass


class OracleSizeError(BpdqError):
    pass


class PreconditionError(BpdqError, ValueError):
    pass
