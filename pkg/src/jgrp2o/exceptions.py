from typing import Optional, Sequence

from pydantic import PydanticValueError


class JgrP2OError(Exception):
    """Base class for all errors raised by the package."""


class ShapeError(JgrP2OError, ValueError):
    def __init__(self, operation: str, detail: str):
        """Raised when tensor shapes do not fit an operation

        Args:
            operation: name of the operation that rejected its inputs
            detail: human readable description of the mismatch
        """
        super().__init__(operation, detail)
        self.operation = operation
        self.detail = detail

    def __str__(self) -> str:
        return f'<ShapeError op={self.operation}> {self.detail}'


class InputValidationError(JgrP2OError, ValueError):
    def __init__(self, what: str, expected: object = None, actual: object = None, detail: str = ''):
        """Raised when an input violates a documented contract

        Args:
            what: name of the checked quantity
            expected: expected value, if the check compares two values
            actual: actual value, if the check compares two values
            detail: free-form explanation
        """
        super().__init__(what, expected, actual, detail)
        self.what = what
        self.expected = expected
        self.actual = actual
        self.detail = detail

    def __str__(self) -> str:
        message = f'<InputValidationError {self.what}>'
        if self.expected is not None or self.actual is not None:
            message += f' expected={self.expected} actual={self.actual}'
        if self.detail:
            message += f' {self.detail}'
        return message


class ContractError(JgrP2OError, ValueError):
    def __str__(self) -> str:
        return f'<ContractError> {self.args[0] if self.args else ""}'


class DeterminismError(JgrP2OError):
    def __init__(self, first: float, second: float):
        super().__init__(first, second)
        self.first = first
        self.second = second

    def __str__(self) -> str:
        return f'<DeterminismError> objective returned {self.first!r} and then {self.second!r} for identical inputs'


class DataError(JgrP2OError, ValueError):
    pass


class DatasetIOError(DataError, FileNotFoundError):
    def __init__(self, path: str, detail: str = 'missing file'):
        super().__init__(path, detail)
        self.path = path
        self.detail = detail

    def __str__(self) -> str:
        return f'<DatasetIOError path={self.path}> {self.detail}'


class DatasetFormatError(DataError):
    def __init__(self, path: str, line: int, detail: str):
        super().__init__(path, line, detail)
        self.path = path
        self.line = line
        self.detail = detail

    def __str__(self) -> str:
        return f'<DatasetFormatError {self.path}:{self.line}> {self.detail}'


class OptimizerStateError(JgrP2OError):
    pass


class CheckpointFormatError(JgrP2OError):
    def __init__(self, path: str, offset: int, detail: str):
        super().__init__(path, offset, detail)
        self.path = path
        self.offset = offset
        self.detail = detail

    def __str__(self) -> str:
        return f'<CheckpointFormatError {self.path} offset={self.offset}> {self.detail}'


class CheckpointVersionError(JgrP2OError):
    def __init__(self, found: int, supported: Sequence[int]):
        super().__init__(found, supported)
        self.found = found
        self.supported = tuple(supported)

    def __str__(self) -> str:
        return f'<CheckpointVersionError> found version {self.found}, supported {self.supported}'


class NonFiniteLossError(JgrP2OError):
    def __init__(self, stage: int, term: str, value: float, step: Optional[int] = None):
        super().__init__(stage, term, value, step)
        self.stage = stage
        self.term = term
        self.value = value
        self.step = step

    def __str__(self) -> str:
        return f'<NonFiniteLossError step={self.step}> stage {self.stage} {self.term} loss is {self.value}'


class GradCheckError(JgrP2OError):
    def __init__(self, max_error: float, tolerance: float, worst: str):
        super().__init__(max_error, tolerance, worst)
        self.max_error = max_error
        self.tolerance = tolerance
        self.worst = worst

    def __str__(self) -> str:
        return f'<GradCheckError> max relative error {self.max_error:.3e} > {self.tolerance:.1e} at {self.worst}'


class ConfigError(JgrP2OError):
    def __init__(self, key: str, detail: str):
        super().__init__(key, detail)
        self.key = key
        self.detail = detail

    def __str__(self) -> str:
        return f'<ConfigError key={self.key}> {self.detail}'


class TopologyError(PydanticValueError):
    msg_template = 'invalid skeleton edge {edge}: {reason}'


class ConfigConflictError(PydanticValueError):
    msg_template = '{key} conflicts with {other}: {reason}'
