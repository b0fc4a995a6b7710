"""Exception types shared across the toolkit."""


class OutOfDomainError(ValueError):
    """An observation lies outside the mesh it should be interpolated from."""


class SingularDesignError(RuntimeError):
    """A spline design matrix is numerically singular for this mesh/order."""


class SingularNeighborhoodError(RuntimeError):
    """A local interpolation system is singular (degenerate neighborhood)."""


class FactorizationError(RuntimeError):
    """The quadratic-update normal matrix could not be factorized."""


class RankDeficiencyError(RuntimeError):
    """The interpolation matrix is rank-deficient on the penalty null space."""
