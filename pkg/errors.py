"""
Exception hierarchy for peakgate.

Every error carries a ``hypothesis`` string naming the precondition that
failed, so the CLI can print a diagnostic and map the class to an exit code.
"""

from typing import Any, List, Optional

from constants import ExitCode


class PeakgateError(Exception):
    exit_code = ExitCode.CONFIG_ERROR

    def __init__(self, message: str, hypothesis: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.hypothesis = hypothesis

    def __str__(self) -> str:
        if self.hypothesis:
            return f"{self.message} [failed hypothesis: {self.hypothesis}]"
        return self.message


class ConfigError(PeakgateError):
    exit_code = ExitCode.CONFIG_ERROR


class InvalidCertificateError(PeakgateError):
    exit_code = ExitCode.CONFIG_ERROR


class GuardExceededError(PeakgateError):
    """The search reached the guard while the stopping integer was still infinite."""

    exit_code = ExitCode.GUARD_EXCEEDED

    def __init__(self, guard: int, trace: Optional[List[Any]] = None):
        super().__init__(
            f"No term exceeded h(0) within the first {guard} ranks; the pair was never useful",
            hypothesis="usefulness: some u_k > h(0)",
        )
        self.guard = guard
        self.trace = trace or []


class DominationViolationError(PeakgateError):
    exit_code = ExitCode.DOMINATION_VIOLATION

    def __init__(self, rank: int, value: float, bound: float, message: Optional[str] = None):
        super().__init__(
            message or f"u_{rank} = {value!r} exceeds the dominating bound {bound!r}",
            hypothesis="domination: u_k <= h(beta^k) for all k",
        )
        self.rank = rank
        self.value = value
        self.bound = bound


class NonFiniteStateError(PeakgateError):
    exit_code = ExitCode.NON_FINITE

    def __init__(self, message: str, rank: Optional[int] = None, point_index: Optional[int] = None):
        super().__init__(message, hypothesis="finite optimal values nu_k")
        self.rank = rank
        self.point_index = point_index


class SequenceExhaustedError(PeakgateError):
    """A finite (tabulated) sequence was asked for a term beyond its horizon."""

    def __init__(self, rank: int, horizon: int):
        super().__init__(
            f"Term {rank} requested but only ranks 0..{horizon} are available",
            hypothesis="tabulated horizon covers the stopping integer",
        )
        self.rank = rank
        self.horizon = horizon


class ReproductionMismatchError(PeakgateError):
    exit_code = ExitCode.REPRODUCTION_MISMATCH

    def __init__(self, quantity: str, expected: float, computed: float):
        super().__init__(
            f"mismatch: {quantity} reference {expected!r} computed {computed!r}",
            hypothesis="agreement with reference value",
        )
        self.quantity = quantity
        self.expected = expected
        self.computed = computed
