"""
Exception hierarchy for Heavyfield
"""

from typing import List, Optional, Tuple


EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_NUMERICAL_ERROR = 2


class HeavyfieldError(Exception):
    """Base class for every error raised by heavyfield_lib"""
    exit_code = EXIT_NUMERICAL_ERROR


class ConfigError(HeavyfieldError):
    """Configuration problems, one message per offending field path"""
    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors) if self.errors else "invalid configuration")


class NumericalError(HeavyfieldError, ArithmeticError):
    """A non-finite value appeared in a trajectory or a report"""
    exit_code = EXIT_NUMERICAL_ERROR

    def __init__(self, message: str, step: Optional[int] = None,
                 tensor: Optional[str] = None, coordinate: Optional[Tuple[int, ...]] = None):
        self.step = step
        self.tensor = tensor
        self.coordinate = coordinate
        details = []
        if step is not None:
            details.append(f"step={step}")
        if tensor is not None:
            details.append(f"tensor={tensor}")
        if coordinate is not None:
            details.append(f"coordinate={coordinate}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class DimensionError(HeavyfieldError, ValueError):
    """Shapes or input dimensions do not agree"""
    exit_code = EXIT_CONFIG_ERROR


class InsufficientGridError(HeavyfieldError, ValueError):
    """An experiment grid has no widths, step sizes or seeds to run"""
    exit_code = EXIT_CONFIG_ERROR


class SolverLimitError(HeavyfieldError, ValueError):
    """A request exceeds what a solver is allowed to handle"""
    exit_code = EXIT_CONFIG_ERROR


class ConvergenceError(HeavyfieldError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance"""
    exit_code = EXIT_NUMERICAL_ERROR

    def __init__(self, message: str, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
