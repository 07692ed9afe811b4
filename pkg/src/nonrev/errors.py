"""Shared failure types.

``NumericalFailure`` marks conditions where a computation ran but the result
cannot be trusted (explosions, ambiguous kernels, unusable fits).  Input and
usage problems raise plain ``ValueError``; the CLI maps the two families to
distinct exit codes.
"""


class NumericalFailure(RuntimeError):
    """A numerical procedure failed in a detectable way."""


class ExplosionError(NumericalFailure):
    """Every simulated chain left the admissible region."""


class KernelMultiplicityError(NumericalFailure):
    """The discretized generator has an ambiguous (non-simple) kernel."""


class RateFitError(NumericalFailure):
    """Too little usable decay data to fit a convergence rate."""
