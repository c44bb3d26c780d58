"""Exception types raised across the package."""


class JcrError(Exception):
    """Base class for all errors raised by jcrwave."""


class ScheduleTooLong(JcrError, ValueError):
    pass


class InfeasibleBudget(JcrError, ValueError):
    pass


class OverheadExceedsCpi(JcrError, ValueError):
    pass


class VelocityAliased(JcrError, ValueError):
    pass


class NotIdentifiable(JcrError):
    pass


class CrbDoesNotExist(JcrError):
    pass


class AllZeroGains(JcrError, ValueError):
    pass


class TooManyTargets(JcrError, ValueError):
    pass


class CoArrayTooSmall(JcrError, ValueError):
    pass


class DegenerateSpectrum(JcrError):
    pass


class NoFeasiblePoints(JcrError):
    pass


class ConstraintInfeasible(JcrError):
    pass


class ConfigError(JcrError, ValueError):
    pass
