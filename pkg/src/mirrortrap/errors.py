"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, SolverError and its
subclasses -> 2, output I/O problems -> 3.
"""


class MirrortrapError(Exception):
    pass


class ConfigError(MirrortrapError):
    """Bad or inconsistent configuration input.

    Carries optional file/line context so CLI diagnostics can point at the
    offending YAML entry.
    """

    def __init__(self, message, filename=None, line=None):
        self.filename = filename
        self.line = line
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        if self.filename is not None and self.line is not None:
            return f"{self.filename}:{self.line}: {msg}"
        if self.filename is not None:
            return f"{self.filename}: {msg}"
        return msg


class GeometryError(ConfigError):
    """Invalid electrode layout (overlaps, degenerate rectangles, bad roles)."""


class MissingVoltageError(ConfigError):
    """A present electrode role has no voltage assignment."""


class SolverError(MirrortrapError):
    """Base for numerical failures (non-convergence, singularities)."""


class ConvergenceError(SolverError):
    """An iterative solver hit its iteration cap before meeting tolerance."""


class PhaseMismatchError(SolverError):
    """Null search requested for a drive whose phasor has no fixed zero."""


class SearchRegionError(SolverError):
    """A bounded minimizer ran out of its search region."""


class NotConfiningError(SolverError):
    """Potential curvature is not positive definite at the working point."""

    def __init__(self, message, axis=None, eigenvalue=None):
        self.axis = axis
        self.eigenvalue = eigenvalue
        super().__init__(message)


class QuadratureError(SolverError):
    """Numerical integration failed to reach tolerance; carries the residual."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class DegenerateParameterError(SolverError):
    """Least-squares Jacobian is singular along a named parameter direction."""

    def __init__(self, message, parameter=None):
        self.parameter = parameter
        super().__init__(message)


class TimestepError(SolverError):
    """Charging timestep too coarse: per-step displacement exceeded 1 nm."""
