"""Exception types raised across the package."""


class GraphonMFError(Exception):
    """Base class for all package errors."""


class IsolatedLabel(GraphonMFError):
    """A label has zero degree, so its smoothed measure is undefined."""


class IsolatedParticle(GraphonMFError):
    """A particle of the finite system has no neighbour (N_i = 0)."""


class ResolutionMismatch(GraphonMFError):
    pass


class DimensionMismatch(GraphonMFError):
    pass


class SupportTooLarge(GraphonMFError):
    pass


class InfeasiblePlan(GraphonMFError):
    pass


class SupportOutOfRange(GraphonMFError):
    pass


class ShapeMismatch(GraphonMFError):
    pass


class NonFiniteState(GraphonMFError):
    """Raised when an Euler step produces NaN or inf (usually dt too large)."""


class NoConvergence(GraphonMFError):
    def __init__(self, max_iter, residual, flow=None):
        super().__init__(f"Picard iteration did not converge in {max_iter} iterations "
                         f"(last residual {residual:.3e})")
        self.max_iter = max_iter
        self.residual = residual
        self.flow = flow


class CrossBlockPair(GraphonMFError):
    pass


class BoundaryCase(GraphonMFError):
    """The moment exponent hits a value excluded from the rate formula."""


class AssumptionFailure(GraphonMFError):
    def __init__(self, assumption, detail=""):
        msg = f"assumption {assumption} fails"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.assumption = assumption


class NonPositiveError(GraphonMFError):
    pass


class SchemaError(GraphonMFError):
    """Collected scenario validation errors; ``errors`` holds (line, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = []
        for line, msg in self.errors:
            lines.append(f"line {line}: {msg}" if line else msg)
        super().__init__("; ".join(lines))
