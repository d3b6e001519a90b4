"""Exception types shared across sawlab."""


class SawlabError(Exception):
    """Base class for all sawlab errors."""


class BudgetExceeded(SawlabError):
    """Exhaustive work would exceed the configured enumeration budget."""


class CapExceeded(SawlabError):
    """A size cap on a closed-form computation was exceeded."""


class InvalidConfig(SawlabError):
    """A sampler or experiment configuration is inconsistent."""


class ParamError(SawlabError, ValueError):
    """Cone-geometry parameters violate their ordering constraints."""


class EmptyClass(SawlabError):
    """A line class is empty where a nonempty one is required."""


class EnsembleMismatch(SawlabError):
    """Ensemble members were built on different direction test sets."""


class InsufficientData(SawlabError):
    """Too few rows for a regression."""


class CorruptState(SawlabError):
    """A run directory is inconsistent with its manifest."""


class RunIOError(SawlabError):
    """A run directory is missing or unreadable."""
