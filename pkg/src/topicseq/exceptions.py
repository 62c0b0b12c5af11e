"""Exception hierarchy shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class InvalidStateError(RuntimeError):
    """Raised when an operation is called before its required state exists."""


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged (non-finite loss) in epoch {epoch}")


class IncompatibleModelError(ValueError):
    """Raised for corrupt model files or version/vocabulary mismatches."""


class AlignmentError(ValueError):
    def __init__(self, ids, message=None):
        self.ids = sorted(ids)
        super().__init__(message or f"documents not aligned by id: {', '.join(self.ids)}")


class UndefinedRecallError(ValueError):
    """Raised when recall is requested against an empty reference set."""
