"""
Discrete-time systems, finite initial sets and objectives.

States are float64 numpy vectors; batches of states are (n, d) arrays and
every map in the catalog evaluates a batch row by row with the same
elementwise operations it uses for a single state, so an orbit computed in
a batch matches the orbit computed alone bit for bit.
"""

import threading
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from constants import SystemKind
from errors import NonFiniteStateError, SequenceExhaustedError
from seq_core import BoundedSequence

_ROWWISE_ERRORS = (ValueError, TypeError, IndexError)


def apply_rows(fn: Callable, points: np.ndarray) -> np.ndarray:
    """Apply a state map to every row, vectorized when the map supports it."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            out = np.asarray(fn(points), dtype=float)
            if out.shape == points.shape:
                return out
        except _ROWWISE_ERRORS:
            pass
        return np.array([np.asarray(fn(x), dtype=float) for x in points]).reshape(points.shape)


def evaluate_rows(fn: Callable, points: np.ndarray) -> np.ndarray:
    """Evaluate a scalar function of the state on every row."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            out = np.asarray(fn(points), dtype=float)
            if out.shape == (len(points),):
                return out
        except _ROWWISE_ERRORS:
            pass
        return np.array([float(fn(x)) for x in points])


class Polynomial:
    """Multivariate polynomial sum_i c_i * prod_j x_j^{e_ij}."""

    def __init__(self, terms: Sequence[Tuple[float, Sequence[int]]], dimension: int):
        self.dimension = dimension
        self.terms: List[Tuple[float, Tuple[int, ...]]] = []
        for coefficient, exponents in terms:
            exponents = tuple(int(e) for e in exponents)
            if len(exponents) != dimension:
                raise ValueError(f"monomial {exponents} does not have {dimension} exponents")
            if any(e < 0 for e in exponents):
                raise ValueError(f"monomial {exponents} has a negative exponent")
            self.terms.append((float(coefficient), exponents))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for coefficient, exponents in self.terms:
            monomial = np.full(x.shape[:-1], coefficient)
            for j, e in enumerate(exponents):
                if e:
                    monomial = monomial * x[..., j] ** e
            total = total + monomial
        return total


class AffineMap:
    """T(x) = A x + b."""

    def __init__(self, matrix: Sequence[Sequence[float]], offset: Optional[Sequence[float]] = None):
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError(f"affine map needs a square matrix, got shape {self.matrix.shape}")
        d = self.matrix.shape[0]
        self.offset = np.zeros(d) if offset is None else np.asarray(offset, dtype=float)
        if self.offset.shape != (d,):
            raise ValueError(f"affine offset must have length {d}")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(self.offset, x.shape).copy()
        for j in range(self.dimension):
            out = out + x[..., j, None] * self.matrix[:, j]
        return out


class PolynomialMap:
    """Componentwise polynomial map, one Polynomial per output coordinate."""

    def __init__(self, components: Sequence[Polynomial]):
        if not components:
            raise ValueError("a polynomial map needs at least one component")
        self.components = list(components)
        dims = {p.dimension for p in self.components}
        if dims != {len(self.components)}:
            raise ValueError("a polynomial self-map needs d components in d variables")

    @property
    def dimension(self) -> int:
        return len(self.components)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.stack([p(x) for p in self.components], axis=-1)


@dataclass
class DiscreteSystem:
    dimension: int
    map: Callable[[np.ndarray], np.ndarray]
    kind: SystemKind = SystemKind.AFFINE
    name: str = ""

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        image = apply_rows(self.map, np.zeros((1, self.dimension)))
        if image.shape != (1, self.dimension):
            raise ValueError(f"map does not preserve dimension {self.dimension}")

    def step(self, points: np.ndarray) -> np.ndarray:
        return apply_rows(self.map, points)


@dataclass
class InitialSet:
    points: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.size == 0:
            raise ValueError("the initial set must not be empty")
        if self.points.ndim != 2:
            raise ValueError("initial points must all be vectors of the same dimension")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("initial points must be finite")

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)

    @property
    def norms_sq(self) -> np.ndarray:
        return np.sum(self.points * self.points, axis=-1)

    @property
    def max_norm_sq(self) -> float:
        """Smallest r with every point inside the ball |x|^2 <= r."""
        return float(np.max(self.norms_sq))


@dataclass
class Objective:
    evaluate: Callable[[np.ndarray], np.ndarray]
    dimension: int
    description: str = "phi"
    offset_removed: bool = False

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return evaluate_rows(self.evaluate, points)


def coordinate_objective(index: int, dimension: int) -> Objective:
    """pi_index, with coordinates numbered from 1."""
    if not 1 <= index <= dimension:
        raise ValueError(f"coordinate index {index} outside 1..{dimension}")
    j = index - 1
    return Objective(lambda x: np.asarray(x, dtype=float)[..., j], dimension, f"pi_{index}")


def linear_objective(coefficients: Sequence[float], constant: float = 0.0) -> Objective:
    c = np.asarray(coefficients, dtype=float)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        total = np.full(x.shape[:-1], float(constant))
        for j in range(len(c)):
            total = total + c[j] * x[..., j]
        return total

    return Objective(evaluate, len(c), f"c.x + {constant:g}")


def quadratic_objective(
    matrix: Sequence[Sequence[float]], linear: Optional[Sequence[float]] = None, constant: float = 0.0
) -> Objective:
    Q = np.asarray(matrix, dtype=float)
    d = Q.shape[0]
    if Q.shape != (d, d):
        raise ValueError(f"quadratic form needs a square matrix, got shape {Q.shape}")
    b = np.zeros(d) if linear is None else np.asarray(linear, dtype=float)
    if b.shape != (d,):
        raise ValueError(f"linear part must have length {d}")

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, Q, x) + x @ b + constant

    return Objective(evaluate, d, "x'Qx + b.x" + (f" + {constant:g}" if constant else ""))


def norm_objective(dimension: int) -> Objective:
    return Objective(lambda x: np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)), dimension, "|x|")


def normalize_objective(obj: Objective) -> Tuple[Objective, float]:
    """Shift phi so that phi(0) = 0; returns the shifted objective and phi(0)."""
    offset = float(obj(np.zeros((1, obj.dimension)))[0])
    if offset == 0.0:
        return obj, 0.0
    shifted = Objective(
        lambda x: obj.evaluate(x) - offset,
        obj.dimension,
        f"{obj.description} - {offset:g}",
        offset_removed=True,
    )
    logger.info(f"Objective shifted by phi(0) = {offset!r}")
    return shifted, offset


def iterate(system: DiscreteSystem, x: Sequence[float], k: int) -> np.ndarray:
    """T^k(x); raises NonFiniteStateError on blow-up."""
    if k < 0:
        raise ValueError("k must be non-negative")
    state = np.atleast_2d(np.asarray(x, dtype=float))
    for rank in range(1, k + 1):
        state = system.step(state)
        if not np.all(np.isfinite(state)):
            raise NonFiniteStateError(f"orbit is not finite at rank {rank}", rank=rank)
    return state[0]


class OrbitStore:
    """Incrementally extended orbits of every initial point, stacked by rank."""

    def __init__(self, system: DiscreteSystem, init: InitialSet):
        if init.dimension != system.dimension:
            raise ValueError(
                f"initial points have dimension {init.dimension}, system has {system.dimension}"
            )
        self.system = system
        self._states: List[np.ndarray] = [init.points.copy()]
        self._lock = threading.Lock()

    def states(self, k: int) -> np.ndarray:
        with self._lock:
            while len(self._states) <= k:
                rank = len(self._states)
                nxt = self.system.step(self._states[-1])
                finite = np.all(np.isfinite(nxt), axis=-1)
                if not np.all(finite):
                    index = int(np.argmin(finite))
                    raise NonFiniteStateError(
                        f"orbit of initial point {index} is not finite at rank {rank}",
                        rank=rank,
                        point_index=index,
                    )
                self._states.append(nxt)
            return self._states[k]


class NuSequence(BoundedSequence):
    """nu_k = max over the initial set of phi(T^k(x))."""

    def __init__(self, system: DiscreteSystem, init: InitialSet, objective: Objective):
        if objective.dimension != system.dimension:
            raise ValueError(
                f"objective has dimension {objective.dimension}, system has {system.dimension}"
            )
        self.store = OrbitStore(system, init)
        self.objective = objective
        super().__init__(self._evaluate, name="nu")

    def _evaluate(self, k: int) -> float:
        return float(np.max(self.objective(self.store.states(k))))

    def maximizer(self, k: int) -> int:
        """Index of the first initial point attaining nu_k."""
        return int(np.argmax(self.objective(self.store.states(k))))


def nu_sequence(system: DiscreteSystem, init: InitialSet, objective: Objective) -> NuSequence:
    return NuSequence(system, init, objective)


def coordinate_columns(dimension: int) -> List[str]:
    return [f"x{j + 1}" for j in range(dimension)]


def orbit_table(system: DiscreteSystem, init: InitialSet, horizon: int) -> pd.DataFrame:
    """
    Rows (point, k, x1..xd, norm_sq, finite), point-major then k.

    A point's orbit stops at its first non-finite state, which is kept and
    flagged with finite = False.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    columns = coordinate_columns(system.dimension)
    records = []
    states = init.points.copy()
    alive = np.ones(len(init), dtype=bool)
    for k in range(horizon + 1):
        if k > 0:
            states = system.step(states)
        for index in np.flatnonzero(alive):
            x = states[index]
            finite = bool(np.all(np.isfinite(x)))
            with np.errstate(over="ignore", invalid="ignore"):
                norm_sq = float(np.sum(x * x))
            records.append((int(index), k, *x.tolist(), norm_sq, finite))
            if not finite:
                alive[index] = False
                logger.warning(f"Orbit of point {index} blew up at rank {k}; truncated")
        if not alive.any():
            break
    table = pd.DataFrame.from_records(records, columns=["point", "k", *columns, "norm_sq", "finite"])
    return table.sort_values(["point", "k"], kind="stable").reset_index(drop=True)


def write_orbit_csv(table: pd.DataFrame, path) -> None:
    table.to_csv(path, index=False)


def read_orbit_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def sequence_from_orbit_table(table: pd.DataFrame, objective: Objective) -> BoundedSequence:
    """nu rebuilt from a saved orbit table, defined on the ranks every point reaches."""
    columns = coordinate_columns(objective.dimension)
    points = sorted(table["point"].unique())
    finite_rows = table[table["finite"].astype(bool)]
    reach = finite_rows.groupby("point")["k"].max()
    horizon = int(min(reach.get(p, -1) for p in points))
    blown = bool((~table["finite"].astype(bool)).any())

    values = []
    for k in range(horizon + 1):
        rows = finite_rows[finite_rows["k"] == k].sort_values("point")
        values.append(float(np.max(objective(rows[columns].to_numpy(dtype=float)))))

    def evaluator(k: int) -> float:
        if k <= horizon:
            return values[k]
        if blown:
            raise NonFiniteStateError(f"tabulated orbit is not finite at rank {k}", rank=k)
        raise SequenceExhaustedError(k, horizon)

    return BoundedSequence(evaluator, name="nu")
