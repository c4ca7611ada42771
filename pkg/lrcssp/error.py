
class LrcsspError(Exception):
    pass


class StructuralError(LrcsspError):
    """Shapes or indices do not agree
    """
    pass


class NonConvergenceError(LrcsspError):
    """Value iteration did not reach the requested residual
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ImproperPolicyError(LrcsspError):
    """Policy evaluation diverged or did not settle, the policy does not reach the goal
    """

    def __init__(self, message, residual=None, max_value=None):
        super().__init__(message)
        self.residual = residual
        self.max_value = max_value


class ProjectionError(LrcsspError):
    """The projection onto sub-stochastic matrices ran out of iterations
    """

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class ProtocolError(LrcsspError):
    """An adaptive context source returned something that is not a context
    """
    pass


class ConfigError(LrcsspError):
    """Raised when a config or generator spec is invalid
    """
    pass


class ArtifactError(LrcsspError):
    """A model file or run directory is missing or malformed
    """
    pass
