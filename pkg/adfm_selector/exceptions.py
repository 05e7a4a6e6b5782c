"""Error hierarchy; ``exit_code`` is what the CLI returns for each class."""


class AnalysisError(Exception):
    exit_code = 3


class ModelValidationError(AnalysisError):
    exit_code = 2


class ModelFormatError(ModelValidationError):
    pass


class DimensionMismatchError(ModelValidationError):
    pass


class NonFiniteEntryError(ModelValidationError):
    pass


class ModeSelectionError(ModelValidationError):
    pass


class RepeatedModeError(ModeSelectionError):
    pass


class PatternError(ModelValidationError):
    pass


class EigenSolverError(AnalysisError):
    pass


class InternalInconsistencyError(AnalysisError):
    pass


class RdfmVerificationError(InternalInconsistencyError):
    pass


class BudgetExceededError(AnalysisError):
    pass


class OracleSamplingError(AnalysisError):
    pass


class NoCandidateError(AnalysisError):
    exit_code = 4

    def __init__(self, message, minimal_epsilon=None):
        super().__init__(message)
        self.minimal_epsilon = minimal_epsilon


class NoRemovalSetError(AnalysisError):
    exit_code = 5
