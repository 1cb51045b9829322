"""
Peak computation for real sequences dominated by a geometric envelope.

A sequence u is dominated by a certificate pair (h, beta) when
u_k <= h(beta^k) for every rank k. For ranks where u_k > h(0) the quantity

    F(k) = ln(h^{-1}(u_k)) / ln(beta)

bounds every later rank at which the sequence could still exceed u_k, so
the running maximum only has to be tracked up to floor(F). ``solve_peak``
walks the sequence, shrinking that stopping integer every time a strictly
larger term shows up, and returns the exact supremum with its first rank.
"""

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from config import settings
from errors import (
    DominationViolationError,
    GuardExceededError,
    InvalidCertificateError,
    NonFiniteStateError,
    SequenceExhaustedError,
)


class BoundedSequence:
    """Lazily evaluated real sequence u_0, u_1, ... with memoized terms."""

    def __init__(self, evaluator: Callable[[int], float], name: str = "u"):
        self._evaluator = evaluator
        self._cache: Dict[int, float] = {}
        self._lock = threading.Lock()
        self.name = name

    @classmethod
    def from_values(cls, values: Sequence[float], name: str = "u") -> "BoundedSequence":
        """Finite tabulated sequence; ranks past the table raise SequenceExhaustedError."""
        table = [float(v) for v in values]
        horizon = len(table) - 1

        def evaluator(k: int) -> float:
            if k > horizon:
                raise SequenceExhaustedError(k, horizon)
            return table[k]

        return cls(evaluator, name=name)

    def __getitem__(self, k: int) -> float:
        if k < 0:
            raise IndexError(f"ranks are non-negative, got {k}")
        with self._lock:
            if k in self._cache:
                return self._cache[k]
        value = float(self._evaluator(k))
        if not math.isfinite(value):
            raise NonFiniteStateError(f"{self.name}_{k} = {value} is not a finite real", rank=k)
        with self._lock:
            return self._cache.setdefault(k, value)

    def terms(self, horizon: int) -> np.ndarray:
        """Terms u_0..u_horizon as an array."""
        return np.array([self[k] for k in range(horizon + 1)], dtype=float)

    @property
    def evaluated(self) -> Dict[int, float]:
        with self._lock:
            return dict(self._cache)


@dataclass(frozen=True)
class BridgeFunction:
    """Strictly increasing continuous h on [0,1] together with its inverse."""

    forward: Callable[[float], float]
    inverse: Callable[[float], float]
    description: str = "h"
    value_at_zero: float = field(init=False)
    value_at_one: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "value_at_zero", float(self.forward(0.0)))
        object.__setattr__(self, "value_at_one", float(self.forward(1.0)))
        self.check()

    def __call__(self, s: float) -> float:
        return float(self.forward(s))

    def check(self, points: Optional[int] = None, tol: Optional[float] = None) -> None:
        """Sample check of strict monotonicity and of the inverse round trip."""
        points = points or settings.bridge_check_points
        tol = settings.inverse_tol if tol is None else tol
        grid = np.linspace(0.0, 1.0, points)
        values = np.array([float(self.forward(s)) for s in grid])
        if not np.all(np.isfinite(values)):
            raise InvalidCertificateError(
                f"{self.description} is not finite on [0,1]",
                hypothesis="h continuous on [0,1]",
            )
        if np.any(np.diff(values) <= 0):
            bad = int(np.argmax(np.diff(values) <= 0))
            raise InvalidCertificateError(
                f"{self.description} is not strictly increasing near s = {grid[bad]:.6g}",
                hypothesis="h strictly increasing on [0,1]",
            )
        for s, v in zip(grid, values):
            back = float(self.inverse(v))
            if not abs(back - s) <= tol:
                raise InvalidCertificateError(
                    f"inverse of {self.description} fails the round trip at s = {s:.6g} (got {back!r})",
                    hypothesis="h^{-1}(h(s)) = s on [0,1]",
                )


@dataclass(frozen=True)
class CertificatePair:
    """Pair (h, beta) with u_k <= h(beta^k) for all k."""

    h: BridgeFunction
    beta: float
    label: str = ""

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise InvalidCertificateError(
                f"beta = {self.beta!r} must lie in the open interval (0,1)",
                hypothesis="beta in (0,1)",
            )

    def bound(self, k: int) -> float:
        return self.h(self.beta ** k)


@dataclass(frozen=True)
class TraceRecord:
    k: int
    value: float
    in_s: bool
    f_value: float
    k_after: float
    updated: bool


@dataclass
class PeakSolution:
    optimum: float
    argmax_rank: int
    stopping_integer: int
    trace: List[TraceRecord]

    @property
    def stopping_history(self) -> List[int]:
        """Stopping integers in the order they were set."""
        return [int(r.k_after) for r in self.trace if r.updated]

    @property
    def useful(self) -> bool:
        return any(r.in_s for r in self.trace)


class DominationCheck(NamedTuple):
    ok: bool
    first_violation: Optional[int]


@dataclass
class PairComparison:
    best_index: int
    solutions: List[Optional[PeakSolution]]

    @property
    def best(self) -> PeakSolution:
        return self.solutions[self.best_index]


def _formula_from_value(value: float, rank: int, pair: CertificatePair, tol: float) -> float:
    h = pair.h
    if value <= h.value_at_zero + tol:
        return math.inf
    if value > h.value_at_one + tol:
        raise DominationViolationError(
            rank, value, h.value_at_one,
            message=f"u_{rank} = {value!r} exceeds h(1) = {h.value_at_one!r}; the pair does not dominate this sequence",
        )
    if value >= h.value_at_one:
        return 0.0
    level = float(h.inverse(value))
    if 1.0 < level <= 1.0 + tol:
        level = 1.0
    if not 0.0 < level <= 1.0:
        raise InvalidCertificateError(
            f"h^{{-1}}(u_{rank}) = {level!r} left (0,1]",
            hypothesis="h^{-1} maps (h(0), h(1)] into (0,1]",
        )
    if level == 1.0:
        return 0.0
    return math.log(level) / math.log(pair.beta)


def stopping_index_formula(
    u: BoundedSequence, k: int, pair: CertificatePair, tol: Optional[float] = None
) -> float:
    """ln(h^{-1}(u_k)) / ln(beta), or +inf when u_k <= h(0)."""
    tol = settings.tol if tol is None else tol
    return _formula_from_value(u[k], k, pair, tol)


def stopping_floor(f_value: float, tol: Optional[float] = None) -> int:
    """floor(F), rounded up when F sits within tol below an integer."""
    tol = settings.tol if tol is None else tol
    lower = math.floor(f_value)
    nearest = round(f_value)
    if abs(f_value - nearest) <= tol:
        return max(int(nearest), int(lower))
    return int(lower)


def solve_peak(
    u: BoundedSequence,
    pair: CertificatePair,
    guard: Optional[int] = None,
    tol: Optional[float] = None,
) -> PeakSolution:
    """
    Exact supremum of u and its smallest maximizing rank.

    Terms are visited in order while k <= K. A term in S(u,h) = {k : u_k > h(0)}
    that strictly beats the running maximum resets K to floor(F(k)).
    Raises GuardExceededError when k reaches ``guard`` with K still infinite.
    """
    guard = settings.guard if guard is None else guard
    tol = settings.tol if tol is None else tol

    k = 0
    stop: float = math.inf
    u_max = -math.inf
    k_max = 0
    trace: List[TraceRecord] = []

    while k <= stop:
        if math.isinf(stop) and k >= guard:
            logger.error(f"Guard {guard} reached without a term above h(0) = {pair.h.value_at_zero!r}")
            raise GuardExceededError(guard, trace)

        value = u[k]
        in_s = value > pair.h.value_at_zero + tol
        f_value = math.inf
        updated = False
        if in_s:
            f_value = _formula_from_value(value, k, pair, tol)
            if value > u_max:
                stop = stopping_floor(f_value, tol)
                u_max = value
                k_max = k
                updated = True
                logger.debug(f"k={k}: u_k={value!r} F={f_value!r} -> K={stop}")
        trace.append(TraceRecord(k, value, in_s, f_value, stop, updated))
        k += 1

    return PeakSolution(optimum=u_max, argmax_rank=k_max, stopping_integer=int(stop), trace=trace)


def verify_domination(
    u: BoundedSequence, pair: CertificatePair, horizon: int, tol: Optional[float] = None
) -> DominationCheck:
    """Check u_k <= h(beta^k) + tol for k = 0..horizon."""
    tol = settings.tol if tol is None else tol
    for k in range(horizon + 1):
        if u[k] > pair.bound(k) + tol:
            return DominationCheck(False, k)
    return DominationCheck(True, None)


def first_escape_rank(pair: CertificatePair, value: float, cap: Optional[int] = None) -> int:
    """min{j : h(beta^j) < value}, found by direct scan."""
    cap = settings.escape_scan_cap if cap is None else cap
    h = pair.h
    if not h.value_at_zero < value <= h.value_at_one:
        raise ValueError(
            f"value {value!r} must lie in (h(0), h(1)] = ({h.value_at_zero!r}, {h.value_at_one!r}]"
        )
    j = 0
    level = 1.0
    while h(level) >= value:
        j += 1
        if j > cap:
            raise GuardExceededError(cap)
        level = pair.beta ** j
    return j


def brute_force_sup(u: BoundedSequence, horizon: int) -> Tuple[float, int]:
    """max of u_0..u_horizon and the smallest rank attaining it."""
    values = u.terms(horizon)
    rank = int(np.argmax(values))
    return float(values[rank]), rank


def pointwise_min(g: BridgeFunction, h: BridgeFunction) -> BridgeFunction:
    """Bridge m = min(g, h); its inverse is the larger of the clipped inverses."""

    def clipped_inverse(q: BridgeFunction, v: float) -> float:
        if v < q.value_at_zero:
            return -math.inf
        if v >= q.value_at_one:
            return 1.0
        return float(q.inverse(v))

    def forward(s: float) -> float:
        return min(g(s), h(s))

    def inverse(v: float) -> float:
        return min(1.0, max(clipped_inverse(g, v), clipped_inverse(h, v)))

    return BridgeFunction(forward, inverse, description=f"min({g.description}, {h.description})")


def select_best_pair(
    u: BoundedSequence,
    pairs: Sequence[CertificatePair],
    guard: Optional[int] = None,
    tol: Optional[float] = None,
) -> PairComparison:
    """
    Solve with every pair and keep the one with the smallest stopping integer.

    Pairs that never become useful within the guard are recorded as None.
    Ties go to the first pair listed.
    """
    if not pairs:
        raise ValueError("at least one certificate pair is required")
    solutions: List[Optional[PeakSolution]] = []
    last_error: Optional[GuardExceededError] = None
    for index, pair in enumerate(pairs):
        try:
            solutions.append(solve_peak(u, pair, guard=guard, tol=tol))
        except GuardExceededError as exc:
            logger.warning(f"Pair {index} ({pair.label or pair.h.description}) was not useful: {exc}")
            solutions.append(None)
            last_error = exc
    candidates = [(s.stopping_integer, i) for i, s in enumerate(solutions) if s is not None]
    if not candidates:
        raise last_error
    best_index = min(candidates)[1]
    return PairComparison(best_index=best_index, solutions=solutions)
