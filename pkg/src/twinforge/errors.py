"""Exception types shared across twinforge modules."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad library spec, hyperparameters, or CLI config."""


class IllConditionedLibraryError(RuntimeError):
    """The active library block could not be factorized reliably.

    Carries the labels of the offending columns in ``labels``.
    """

    def __init__(self, message, labels=()):
        super().__init__(message)
        self.labels = list(labels)


class SimulationBlowUpError(RuntimeError):
    """State became non-finite (or absurdly large) during integration."""

    def __init__(self, message, t_last=None):
        super().__init__(message)
        self.t_last = t_last


class PredictionError(RuntimeError):
    """Prediction failed (integration blow-up or inconsistent twin)."""
