"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """A caller-supplied argument violates a documented precondition."""


class SingularStepError(ValueError):
    """Operation requires alpha_t > 0 but the schedule step is singular."""


class NoFurtherStepsError(ValueError):
    """Sampler asked to step below t=1."""


class UnknownTokenError(LookupError):
    """Prompt token id or name is not registered in the token table."""


class TokenConflictError(ValueError):
    """Attempt to register a token name that already exists."""


class TrainingFailureError(RuntimeError):
    """Training diverged (non-finite loss). Carries the failing step index."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite training loss at step {step}")


class InferenceFailureError(RuntimeError):
    """Sampling produced non-finite values (untrained or corrupt parameters)."""


class InvalidStateError(RuntimeError):
    """Object used before it was put into a valid state (e.g. untrained embedder)."""


class EmbedderQualityError(RuntimeError):
    """Identity embedder failed to reach the required held-out accuracy."""

    def __init__(self, accuracy: float, threshold: float):
        self.accuracy = accuracy
        self.threshold = threshold
        super().__init__(
            f"embedder held-out accuracy {accuracy:.3f} below required {threshold:.3f}"
        )
