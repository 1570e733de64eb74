"""Exception hierarchy shared by every module in the package."""


class QdkdError(Exception):
    """Base class for all package-specific errors."""


class InvalidBasisLabel(QdkdError):
    """A basis label does not exist for the mode kind it was used with."""


class ModeCollision(QdkdError):
    """Two modes in one composite system share a name."""


class UnknownMode(QdkdError):
    """An operation referenced a mode name the state does not contain,
    or one outside the caller's allowed set."""


class NotUnitary(QdkdError):
    """A matrix handed to a unitary constructor fails U^dag U = I."""


class NotObservable(QdkdError):
    """A matrix handed to an observable constructor is not Hermitian."""


class BadMixture(QdkdError):
    """Mixture weights are negative, do not sum to one, or the component
    states live on different mode layouts."""


class BadParam(QdkdError):
    """A protocol or attack parameter is outside its documented domain."""


class UndefinedLossBound(QdkdError):
    """The requested hiding bound has no defined value for the given
    detection rates."""
