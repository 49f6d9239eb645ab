"""Exception types raised across the package."""


class ParameterError(ValueError):
    """Invalid argument: bad shape, out-of-range index or infeasible setting."""


class ErgodicityError(RuntimeError):
    """A Markov chain failed to mix or its stationary law could not be found."""


class DegenerateFeaturesError(ValueError):
    """The feature table is identically zero."""


class NoCertificateError(ValueError):
    """The policy operator has no Lipschitz certificate (it is discontinuous)."""


class NoFixedPointError(RuntimeError):
    """The mean-field fixed-point iteration diverged or ran out of iterations."""


class IndependenceError(RuntimeError):
    """A mean-field matrix was singular, so the features are not independent."""


class ContradictionError(RuntimeError):
    """A quantity that must be negative was not (e.g. w_l >= 0)."""


class FitError(ValueError):
    """A log-log rate fit was requested on unusable data."""


class BoundInapplicableWarning(UserWarning):
    """Theorem preconditions are violated; the bound is reported but not certified."""
