"""Exception and warning types shared across the package."""


class ConfigError(ValueError):
    """Raised for invalid run configurations (bad grids, bad flag values)."""


class NumericalError(RuntimeError):
    """Base class for numerical failures (singular factors, breakdowns)."""


class LocalSingularError(NumericalError):
    """A local Dirichlet matrix could not be factorized.

    Carries the subdomain index and the product H_i * k as a diagnostic:
    local coercivity is only guaranteed for H*k < sqrt(2), so a large value
    points at an under-resolved decomposition or a resonant subdomain.
    """

    def __init__(self, subdomain: int, hk: float):
        self.subdomain = subdomain
        self.hk = hk
        super().__init__(
            f"local matrix for subdomain {subdomain} is singular "
            f"(H_i*k = {hk:.4g}; coercive regime requires H*k < sqrt(2))"
        )


class CoarseSingularError(NumericalError):
    """The coarse operator is singular to working precision."""


class EigenBreakdownError(NumericalError):
    """A local generalized eigensolve failed; carries the subdomain index."""

    def __init__(self, subdomain: int, detail: str = ""):
        self.subdomain = subdomain
        msg = f"local eigenproblem on subdomain {subdomain} broke down"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class KrylovBreakdownError(NumericalError):
    """Arnoldi breakdown with a nonzero residual; carries the iteration."""

    def __init__(self, iteration: int, relres: float):
        self.iteration = iteration
        self.relres = relres
        super().__init__(
            f"Arnoldi breakdown at iteration {iteration} "
            f"with relative residual {relres:.3e}"
        )


class WeightNotSPDError(NumericalError):
    """The inner-product weight produced a negative quadratic form."""


class TooLargeError(NumericalError):
    """A dense diagnostic was requested above its size cap.

    Use the sampled estimation mode (randomized probes, lower bounds only)
    for instances beyond the dense cap.
    """


class ResonanceWarning(UserWarning):
    """Emitted when a stability estimate indicates a near-resonant wavenumber."""
