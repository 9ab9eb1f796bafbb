"""Exception hierarchy shared by the pipeline modules.

Every exception carries the process exit code the CLI reports for it.
"""


class PipelineError(Exception):
    exit_code = 1


class ArgumentError(PipelineError, ValueError):
    exit_code = 2


class ParseError(ArgumentError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateObservationError(ParseError):
    pass


class LabelError(ParseError):
    pass


class DegenerateDataError(PipelineError):
    exit_code = 3


class EmptyDatasetError(DegenerateDataError):
    pass


class ImputationError(DegenerateDataError):
    pass


class StratificationError(DegenerateDataError):
    pass


class SolverError(PipelineError, ArithmeticError):
    exit_code = 4


class CompositionError(PipelineError):
    exit_code = 5
