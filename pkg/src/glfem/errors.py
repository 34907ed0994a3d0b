"""Exception hierarchy shared by all glfem modules."""


class GLFemError(Exception):
    """Base class for all library errors."""


class CapacityError(GLFemError):
    """Requested object would exceed the memory guard."""


class ConfigurationError(GLFemError):
    """Unsupported option (degree, quadrature order, preset, ...)."""


class InputError(GLFemError, ValueError):
    """Invalid input data (non-finite values, zero directions, ...)."""


class StructuralError(GLFemError):
    """Mismatched dimensions, spaces or mesh hierarchies."""


class NumericalError(GLFemError):
    """An iterative method failed to reach its tolerance.

    Attributes
    ----------
    residual : float or array, optional
        Best residual reached before giving up.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(NumericalError):
    """The nonlinear solver stopped at ``max_iter``; carries the last state."""

    def __init__(self, message, state=None, residual=None):
        super().__init__(message, residual=residual)
        self.state = state


class EscapeError(NumericalError):
    """A saddle escape step did not lower the energy."""


class AlignmentError(NumericalError):
    """Phase alignment failed because the overlap integral vanished."""
