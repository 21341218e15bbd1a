from typing import Optional, Tuple


class HinfPiError(Exception):
    """Base class for runtime failures of the solvers (exit code 3)"""


class PolicyNotStabilizingError(HinfPiError):
    """A policy pair is not mean-square stabilizing (or its Lyapunov operator is singular)"""

    def __init__(self, message: str, iteration: Optional[Tuple[int, int]] = None, abscissa: Optional[float] = None):
        if iteration is not None:
            message = f"{message} (k={iteration[0]}, j={iteration[1]})"
        super().__init__(message)
        self.iteration = iteration
        self.abscissa = abscissa


class SingularBlockError(HinfPiError):
    """An inner matrix that must be inverted (R + D'PD, [M]_uu, [M]_vv) is singular"""


class RankDeficientError(HinfPiError):
    """The collected data do not satisfy the full column rank condition"""

    def __init__(self, rank: int, required: int):
        super().__init__(f"Regression matrix has numerical rank {rank}, {required} required")
        self.rank = rank
        self.required = required


class IterationLimitError(HinfPiError):
    """An inner or outer loop hit its iteration cap"""


class StateBlowUpError(HinfPiError):
    """A simulated path left the admissible state ball"""
