"""Semantic exception hierarchy shared by every module in the package.

All errors raised on purpose derive from :class:`LipexError`, so callers can
catch the whole family with one clause while tests pin the precise subclass.
"""


class LipexError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(LipexError, ValueError):
    """An argument violates a precondition (non-finite, empty, malformed)."""


class DimensionError(LipexError, ValueError):
    """Shapes, lengths, or class orderings do not line up."""


class DivergenceUndefinedError(LipexError, ValueError):
    """KL divergence requested where the support condition fails."""


class InvalidDatasetError(LipexError, ValueError):
    """A dataset cannot be used (empty, single-class, unparseable)."""


class DegenerateInstanceError(LipexError, ValueError):
    """The instance has too few interpretable units to perturb."""


class UndefinedWeightError(LipexError, ValueError):
    """Similarity weight requested for the all-zeros perturbation."""


class FeatureRangeError(LipexError, ValueError):
    """A top-k request exceeds the number of selected features."""


class SingularityError(LipexError, ValueError):
    """Unpenalized regression hit an exactly singular normal matrix."""


class FitDivergenceError(LipexError, RuntimeError):
    """Gradient descent produced a non-finite loss.

    Carries the epoch at which the loss left the reals and the learning
    rate in use, so harness reports can show both.
    """

    def __init__(self, epoch: int, learning_rate: float):
        self.epoch = epoch
        self.learning_rate = learning_rate
        super().__init__(
            f"loss became non-finite at epoch {epoch} "
            f"(learning_rate={learning_rate})"
        )


class UnsupportedOperationError(LipexError, RuntimeError):
    """Operation not available for this backend (e.g. distorting a subprocess model)."""


class BackendError(LipexError, RuntimeError):
    """A subprocess model violated the wire protocol or died.

    ``diagnostics`` holds whatever could be captured from the child
    (stderr tail, offending line, exit status).
    """

    def __init__(self, message: str, diagnostics: str = ""):
        self.diagnostics = diagnostics
        if diagnostics:
            message = f"{message}\n--- child diagnostics ---\n{diagnostics}"
        super().__init__(message)


class DegenerateTargetWarning(UserWarning):
    """Forward selection saw a constant target; R^2 is undefined."""


class OutOfVocabularyWarning(UserWarning):
    """An instance featurized to the zero vector (every token unseen)."""
