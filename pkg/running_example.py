"""
The planar map H(x) = (1/8) [[|x|^2 - 1, -1], [1, |x|^2 - 1]] x and its tooling.

Along H the squared norm evolves by s -> f(s) = s (1 + (s-1)^2) / 64, so
every quantity below is a function of |x|^2:

* rho_bar = sqrt(63) + 1 is where f(s) = s (H contracts strictly inside),
* rho_under = sqrt(64/e - 1) + 1 is where f(s) = s/e,
* V(x) = max(|x|^2, e |H(x)|^2) is a Lyapunov function on balls of squared
  radius r < rho_bar, with the closed-form contraction ratio
  ``ratio_closed_form(r)``.

The four named scenarios a..d are finite initial sets used throughout the
tests and by ``peakgate.py reproduce``.
"""

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from enum import Enum
from typing import Optional

import numpy as np

from certificates import (
    IDENTITY,
    BallSampler,
    ClassKFunction,
    LyapunovCertificate,
    SontagFormKL,
    StableDomain,
    build_pair_continuous_lyap,
    build_pair_from_kl,
)
from config import settings
from constants import SystemKind
from errors import NonFiniteStateError
from seq_core import CertificatePair
from systems import DiscreteSystem, InitialSet


def _extended_constants():
    with localcontext() as ctx:
        ctx.prec = 40
        rho_bar = Decimal(63).sqrt() + 1
        rho_under = (Decimal(64) / Decimal(1).exp() - 1).sqrt() + 1
    return float(rho_bar), float(rho_under)


@dataclass(frozen=True)
class RunningExampleConstants:
    rho_bar: float
    rho_under: float


CONSTANTS = RunningExampleConstants(*_extended_constants())
RHO_BAR = CONSTANTS.rho_bar
RHO_UNDER = CONSTANTS.rho_under
E = math.e


def map_H(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = x[..., 0] * x[..., 0] + x[..., 1] * x[..., 1]
    first = ((s - 1.0) * x[..., 0] - x[..., 1]) / 8.0
    second = (x[..., 0] + (s - 1.0) * x[..., 1]) / 8.0
    return np.stack([first, second], axis=-1)


def f_of(s):
    """|H(x)|^2 as a function of s = |x|^2."""
    s = np.asarray(s, dtype=float)
    return s * (1.0 + (s - 1.0) ** 2) / 64.0


def g_of(s):
    """f(s)/s, extended by 1/32 at zero."""
    s = np.asarray(s, dtype=float)
    return (1.0 + (s - 1.0) ** 2) / 64.0


def lyapunov_V(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    norm_sq = x[..., 0] * x[..., 0] + x[..., 1] * x[..., 1]
    image = map_H(x)
    image_sq = image[..., 0] * image[..., 0] + image[..., 1] * image[..., 1]
    return np.maximum(norm_sq, E * image_sq)


def ratio_closed_form(r: float, tol: Optional[float] = None) -> float:
    """
    sup of V(H(x))/V(x) over the punctured ball |x|^2 <= r.

    Knots at 2 and rho_under belong to the left branch.
    """
    tol = settings.tol if tol is None else tol
    if not 0.0 < r < RHO_BAR:
        raise ValueError(f"squared radius {r!r} must lie in (0, {RHO_BAR!r})")
    if r <= 2.0 + tol:
        return 1.0 / 32.0
    if r <= RHO_UNDER + tol:
        return float(g_of(r))
    image = float(f_of(r))
    if image <= RHO_UNDER + tol:
        return math.exp(-1.0)
    return float(g_of(image))


def first_positive_rank(x, coordinate: int, cap: int) -> Optional[int]:
    """First k <= cap with the given coordinate (1 or 2) of H^k(x) positive."""
    if coordinate not in (1, 2):
        raise ValueError("coordinate must be 1 or 2")
    state = np.asarray(x, dtype=float)
    for k in range(cap + 1):
        if not np.all(np.isfinite(state)):
            raise NonFiniteStateError(f"orbit of {np.asarray(x).tolist()} is not finite at rank {k}", rank=k)
        if state[coordinate - 1] > 0:
            return k
        with np.errstate(over="ignore", invalid="ignore"):
            state = map_H(state)
    return None


def running_example_system() -> DiscreteSystem:
    return DiscreteSystem(dimension=2, map=map_H, kind=SystemKind.BUILTIN, name="running_example")


class ScenarioName(Enum):
    A = "a"
    B = "b"
    C = "c"
    D = "d"


SCENARIO_POINTS = {
    ScenarioName.A: [(-1.3, -0.3), (-1.1, -0.8)],
    ScenarioName.B: [(-2.3, 0.013), (0.7, -2.29)],
    ScenarioName.C: [(2.2, -2.0)],
    ScenarioName.D: [(-2.3, -1.9), (-2.5, -1.5)],
}


@dataclass(frozen=True)
class Scenario:
    name: ScenarioName
    points: InitialSet

    @property
    def radius_sq(self) -> float:
        return self.points.max_norm_sq

    @property
    def sup_norm_sq(self) -> float:
        return self.points.max_norm_sq

    @property
    def sup_V(self) -> float:
        return float(np.max(lyapunov_V(self.points.points)))

    @property
    def kl_applicable(self) -> bool:
        """The e^{-1} KL bound only covers balls inside |x|^2 < rho_under."""
        return self.sup_norm_sq < RHO_UNDER


def get_scenario(name: str) -> Scenario:
    try:
        key = ScenarioName(name.lower())
    except ValueError:
        valid_scenarios = ", ".join([s.value for s in ScenarioName])
        raise ValueError(f"Invalid scenario: '{name}'. Valid options are: {valid_scenarios}.")
    return Scenario(key, InitialSet(np.array(SCENARIO_POINTS[key], dtype=float)))


SQUARE = ClassKFunction(lambda s: s * s, lambda v: v ** 0.5, template="({})^2")
SQRT = ClassKFunction(lambda s: s ** 0.5, lambda v: v * v, template="sqrt({})")


def kl_pair(scenario: Scenario) -> CertificatePair:
    """h(s) = sqrt(sup|x|^2 * s) with beta = 1/e, from |H^k(x)|^2 <= e^{-k} |x|^2."""
    if not scenario.kl_applicable:
        raise ValueError(
            f"scenario {scenario.name.value}: the KL bound needs sup |x|^2 < {RHO_UNDER:.6g}, "
            f"got {scenario.sup_norm_sq:.6g}"
        )
    kl = SontagFormKL(theta1=IDENTITY, theta2=SQRT, psi_sup=scenario.sup_norm_sq)
    return build_pair_from_kl(kl)


def lyapunov_certificate(radius_sq: float, sup_on_init: float) -> LyapunovCertificate:
    return LyapunovCertificate(
        V=lyapunov_V,
        domain=StableDomain(radius_sq, dimension=2),
        alpha_lower=SQUARE,
        ratio=ratio_closed_form(radius_sq),
        sup_on_init=sup_on_init,
    )


def lyapunov_pair(scenario: Scenario) -> CertificatePair:
    """h(s) = sqrt(s * sup V) with beta = N(V) on the scenario's ball."""
    cert = lyapunov_certificate(scenario.radius_sq, scenario.sup_V)
    return build_pair_continuous_lyap(cert, IDENTITY)


def ball_sampler(radius_sq: float, seed: Optional[int] = None) -> BallSampler:
    return BallSampler(StableDomain(radius_sq, dimension=2), seed=seed)
