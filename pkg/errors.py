# Exceptions raised by the registration engine; main.py maps them to exit codes


class RegistrationError(Exception):
    """Base class for every error the engine raises on purpose."""


class InvalidField(RegistrationError):
    """Non-finite values or malformed field arrays."""


class GridMismatch(RegistrationError):
    """Two fields that must share a grid do not."""


class MetricNotPositive(InvalidField):
    """A metric field is not positive-definite at some node."""


class NonDiffeomorphic(RegistrationError):
    """The deformation folded: det(Dphi) or det(h) fell below the floor."""


class DefectBoundExceeded(RegistrationError):
    """phi(psi(x)) drifted further from x than the configured bound."""


class LineSearchFailed(RegistrationError):
    """Backtracking shrank dt below dt_min without decreasing the energy."""


class ConfigError(RegistrationError):
    pass


class ImageFormatError(RegistrationError):
    pass
