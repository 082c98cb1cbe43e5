"""Exception hierarchy for gjekit.

Every failure mode that callers are expected to branch on gets its own
class; anything else surfaces as a plain ValueError/RuntimeError.
"""


class GjekitError(Exception):
    """Base class for all toolkit errors."""


class DomainError(GjekitError):
    """A triple (x, xbar, z) is outside the admissible set of the
    generating function, or an iterate left its chart."""


class RangeError(GjekitError):
    """A scalar value u is outside the range of G(x, xbar, .)."""


class ConvergenceError(GjekitError):
    """An iterative solve exhausted its budget without meeting tolerance."""


class ConfigError(GjekitError):
    """Malformed construction parameters or run configuration."""


class EmptyEnvelopeError(GjekitError):
    """No envelope piece is admissible at the evaluation point."""


class NicenessError(GjekitError):
    """A scalar value left the declared nice interval where it was required
    to stay inside it."""


class HypothesisError(GjekitError):
    """A precondition of a pointwise estimate failed; carries the name of
    the violated clause."""

    def __init__(self, clause: str, detail: str = ""):
        self.clause = clause
        super().__init__(f"hypothesis violated: {clause}" + (f" ({detail})" if detail else ""))


class DegenerateError(GjekitError):
    """Input point cloud does not affinely span the ambient space."""


class InfeasibleError(GjekitError):
    """A required bisection bracket could not be established inside the
    admissible scalar range."""


class StallError(GjekitError):
    """The solver swept too many times without residual decrease."""


class MonotonicityError(GjekitError):
    """A quantity asserted to be monotone was observed to violate
    monotonicity beyond tolerance; carries a witness."""

    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)
