"""Exception types raised across the package."""


class FdanError(Exception):
    """Base class for every error raised by fdan."""


class ShapeError(FdanError, ValueError):
    pass


class LabelError(FdanError, ValueError):
    pass


class ParameterError(FdanError, ValueError):
    pass


class ContractError(FdanError, RuntimeError):
    pass


class ConfigError(FdanError, ValueError):
    pass


class FormatError(FdanError, ValueError):
    pass


class DivergenceError(FdanError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step
        self.value = value
