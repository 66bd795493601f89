"""Exception types raised across the package."""


class ImpulsymError(Exception):
    """Base class for all package errors."""


class OutOfDomain(ImpulsymError, ValueError):
    """A point lies outside the grid domain (beyond the quantization slack)."""


class DomainTooLarge(ImpulsymError):
    """Enumerating the grid would exceed the configured point cap."""


class NumericalBlowup(ImpulsymError, ArithmeticError):
    """An integrated state left the configured norm bound."""


class CaseExcluded(ImpulsymError, ValueError):
    """kappa_d >= 1 together with kappa_c <= 0: no weighting makes the ASF contract."""


class DwellViolated(ImpulsymError, ValueError):
    """The dwell inequality ln(kappa_d) - kappa_c*tau*l < 0 fails at l = p1 or l = p2."""


class FreeParamInfeasible(ImpulsymError, ValueError):
    """No admissible (epsilon, delta) makes the contraction factor drop below one."""


class EmptyDomain(ImpulsymError):
    """The safety fixed point converged to the empty set."""


class OutsideDomain(ImpulsymError, KeyError):
    """A state is not in the controller's winning domain."""


class RelationViolation(ImpulsymError, AssertionError):
    """A paired concrete/abstract run left the simulation relation."""


class ConfigError(ImpulsymError, ValueError):
    """Malformed or inconsistent run configuration."""
