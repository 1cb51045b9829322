"""
Certificate pairs from KL bounds and Lyapunov functions.

Builders turn a comparison-function bound on the system into a
``CertificatePair`` (h, beta) that dominates the optimal-value sequence:

* Sontag-form KL bounds theta1(theta2(.) e^{-t}) give beta = decay.
* A Lyapunov function V with contraction ratio N on a stable ball gives
  beta = N, either directly (phi <= V) or through class-K bounds
  (phi <= alpha(|x|), alpha_V(|x|) <= V(x)).

The ratio N itself is either known in closed form or estimated by
``ratio_operator_estimate``, which samples the ball and is only a lower
estimate of the true supremum.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional

import numpy as np
from loguru import logger
from scipy.optimize import brentq
from scipy.stats import qmc

from config import settings
from constants import ESTIMATE_FLAG
from errors import InvalidCertificateError
from seq_core import BridgeFunction, CertificatePair
from systems import apply_rows, evaluate_rows


@dataclass(frozen=True)
class ClassKFunction:
    """
    Strictly increasing alpha: [0, domain_sup) -> [0, inf) with alpha(0) = 0.

    ``template`` renders the function with ``{}`` standing for its argument.
    Without an explicit inverse, ``inv`` falls back to Brent's method.
    """

    forward: Callable[[float], float]
    inverse: Optional[Callable[[float], float]] = None
    domain_sup: float = math.inf
    template: str = "alpha({})"

    def __post_init__(self):
        if self.forward(0.0) != 0.0:
            raise InvalidCertificateError(
                f"{self.describe()} is not zero at zero",
                hypothesis="class-K: alpha(0) = 0",
            )
        self.check()

    def __call__(self, s: float) -> float:
        return float(self.forward(s))

    def describe(self, argument: str = "s") -> str:
        return self.template.format(argument)

    def inv(self, v: float) -> float:
        if v < 0:
            raise ValueError(f"class-K inverse requested at negative value {v!r}")
        if self.inverse is not None:
            return float(self.inverse(v))
        return self._bisect(v)

    def _bisect(self, v: float) -> float:
        if v == 0.0:
            return 0.0
        if math.isfinite(self.domain_sup):
            upper = float(np.nextafter(self.domain_sup, 0.0))
            if self(upper) < v:
                raise InvalidCertificateError(
                    f"{self.describe()} never reaches {v!r} on its domain",
                    hypothesis="value inside the range of alpha",
                )
        else:
            upper = 1.0
            for _ in range(1100):
                if self(upper) >= v:
                    break
                upper *= 2.0
            else:
                raise InvalidCertificateError(
                    f"{self.describe()} stays below {v!r}",
                    hypothesis="value inside the range of alpha",
                )
        return float(brentq(lambda s: self(s) - v, 0.0, upper, xtol=1e-12))

    def check(self, points: int = 51, tol: Optional[float] = None) -> None:
        tol = settings.inverse_tol if tol is None else tol
        top = self.domain_sup if math.isfinite(self.domain_sup) else 10.0
        grid = np.linspace(0.0, top, points, endpoint=not math.isfinite(self.domain_sup))
        values = np.array([self(s) for s in grid])
        if np.any(np.diff(values) <= 0):
            raise InvalidCertificateError(
                f"{self.describe()} is not strictly increasing",
                hypothesis="class-K: strictly increasing",
            )
        for s, v in zip(grid, values):
            back = self.inv(v)
            if abs(back - s) > tol * max(1.0, s):
                raise InvalidCertificateError(
                    f"inverse of {self.describe()} fails the round trip at s = {s:.6g}",
                    hypothesis="alpha^{-1}(alpha(s)) = s",
                )

    def compose(self, inner: "ClassKFunction") -> "ClassKFunction":
        """self after inner."""
        return ClassKFunction(
            forward=lambda s: self(inner(s)),
            inverse=lambda v: inner.inv(self.inv(v)),
            domain_sup=inner.domain_sup,
            template=self.template.format(inner.template),
        )


IDENTITY = ClassKFunction(lambda s: s, lambda v: v, template="{}")


@dataclass(frozen=True)
class SontagFormKL:
    """
    KL bound gamma(s, t) = theta1(theta2(s) e^{-t}) with explicit class-K parts.

    ``psi_scaling`` picks how the initial-set level enters h:
    "argument" gives h(y) = theta1(theta2(psi_sup*y)), "level" gives
    h(y) = theta1(theta2(psi_sup)*y).
    """

    theta1: ClassKFunction
    theta2: ClassKFunction
    psi_sup: float
    decay: float = math.exp(-1.0)
    psi_scaling: str = "argument"

    def __post_init__(self):
        if not (math.isfinite(self.psi_sup) and self.psi_sup > 0):
            raise InvalidCertificateError(
                f"psi_sup = {self.psi_sup!r} must be positive",
                hypothesis="sup of psi over the initial set is positive",
            )
        if not 0.0 < self.decay < 1.0:
            raise InvalidCertificateError(
                f"decay = {self.decay!r} must lie in the open interval (0,1)",
                hypothesis="decay in (0,1)",
            )
        if self.psi_scaling not in ("argument", "level"):
            raise ValueError("psi_scaling must be 'argument' or 'level'")


@dataclass(frozen=True)
class StableDomain:
    """Closed ball {x : |x|^2 <= radius_sq} mapped into itself by the system."""

    radius_sq: float
    dimension: int = 2

    def __post_init__(self):
        if not self.radius_sq > 0:
            raise InvalidCertificateError(
                f"radius_sq = {self.radius_sq!r} must be positive",
                hypothesis="stable set is not reduced to {0}",
            )

    @property
    def radius(self) -> float:
        return math.sqrt(self.radius_sq)

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.sum(points * points, axis=-1) <= self.radius_sq + tol


class BallSampler:
    """Quasi-uniform (scrambled Halton) samples of a ball, origin excluded."""

    def __init__(self, domain: StableDomain, seed: Optional[int] = None):
        self.domain = domain
        self.seed = settings.seed if seed is None else seed
        d = domain.dimension
        self._fill = math.pi ** (d / 2) / math.gamma(d / 2 + 1) / 2 ** d

    def _keep(self, points: np.ndarray) -> np.ndarray:
        norms_sq = np.sum(points * points, axis=-1)
        return points[(norms_sq <= self.domain.radius_sq) & (norms_sq > 0)]

    def draw(self, count: int) -> np.ndarray:
        halton = qmc.Halton(d=self.domain.dimension, scramble=True, seed=self.seed)
        kept: List[np.ndarray] = []
        total = 0
        while total < count:
            batch = int(math.ceil((count - total) / self._fill * 1.05)) + 16
            cube = halton.random(batch)
            points = self._keep((2.0 * cube - 1.0) * self.domain.radius)
            kept.append(points)
            total += len(points)
        return np.concatenate(kept)[:count]

    def draw_near(self, center: np.ndarray, half_width: float, count: int, round_index: int = 0) -> np.ndarray:
        rng = np.random.default_rng([self.seed, round_index])
        offsets = rng.uniform(-half_width, half_width, size=(count, self.domain.dimension))
        return self._keep(center + offsets)


class ExplicitSampler:
    """Fixed sample set; refinement around the incumbent is a no-op."""

    def __init__(self, points: np.ndarray):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))

    def draw(self, count: Optional[int] = None) -> np.ndarray:
        return self.points if count is None else self.points[:count]

    def draw_near(self, center: np.ndarray, half_width: float, count: int, round_index: int = 0) -> np.ndarray:
        return np.empty((0, self.points.shape[1]))


@dataclass
class LyapunovCertificate:
    V: Callable
    domain: StableDomain
    alpha_lower: ClassKFunction
    ratio: float
    sup_on_init: float
    ratio_is_estimate: bool = False

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise InvalidCertificateError(
                f"Lyapunov ratio {self.ratio!r} must lie in the open interval (0,1)",
                hypothesis="ratio operator N(V) in (0,1)",
            )
        if self.ratio_is_estimate:
            logger.warning(f"Lyapunov ratio {self.ratio!r} is a sampling estimate ({ESTIMATE_FLAG})")


class RefinementStep(NamedTuple):
    round: int
    half_width: float
    value: float


@dataclass
class RatioEstimate:
    value: float
    argmax_point: np.ndarray
    sample_count: int
    trail: List[RefinementStep] = field(default_factory=list)
    is_certificate: bool = False
    flag: str = ESTIMATE_FLAG


class EnvelopeCheck(NamedTuple):
    ok: bool
    witness: Optional[np.ndarray]


@dataclass
class LyapunovValidation:
    sample_count: int
    issues: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues


def _ratios(W: Callable, F: Callable, points: np.ndarray) -> np.ndarray:
    w = evaluate_rows(W, points)
    bad = ~(w > 0)
    if np.any(bad):
        witness = points[int(np.argmax(bad))]
        raise InvalidCertificateError(
            f"W vanishes at the nonzero point {witness.tolist()}",
            hypothesis="W positive definite on the domain",
        )
    return evaluate_rows(W, apply_rows(F, points)) / w


def _chunked_ratios(W: Callable, F: Callable, points: np.ndarray, max_workers: int) -> np.ndarray:
    size = settings.sample_chunk_size
    chunks = [points[i:i + size] for i in range(0, len(points), size)]
    if len(chunks) <= 1 or max_workers <= 1:
        return _ratios(W, F, points)
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        parts = list(executor.map(lambda chunk: _ratios(W, F, chunk), chunks))
    return np.concatenate(parts)


def ratio_operator_estimate(
    W: Callable,
    F: Callable,
    domain_sampler,
    refinement: Optional[int] = None,
    samples: Optional[int] = None,
    refinement_points: Optional[int] = None,
    max_workers: Optional[int] = None,
) -> RatioEstimate:
    """
    Sampled sup of W(F(x))/W(x) over nonzero domain points.

    The sample max is refined by a few rounds of shrinking boxes around the
    incumbent. The result never exceeds the true sup, so it is reported as an
    estimate and not as a certificate.
    """
    refinement = settings.ratio_refinement_rounds if refinement is None else refinement
    samples = settings.ratio_samples if samples is None else samples
    refinement_points = settings.ratio_refinement_points if refinement_points is None else refinement_points
    max_workers = settings.max_workers if max_workers is None else max_workers

    points = domain_sampler.draw(samples)
    if len(points) == 0:
        raise ValueError("sampler returned no points")
    ratios = _chunked_ratios(W, F, points, max_workers)
    best = int(np.argmax(ratios))
    value = float(ratios[best])
    argmax_point = points[best]
    count = len(points)
    trail = [RefinementStep(0, math.nan, value)]

    domain = getattr(domain_sampler, "domain", None)
    half_width = settings.ratio_refinement_shrink * (domain.radius if domain is not None else 1.0)
    for round_index in range(1, refinement + 1):
        local = domain_sampler.draw_near(argmax_point, half_width, refinement_points, round_index)
        if len(local):
            local_ratios = _ratios(W, F, local)
            count += len(local)
            local_best = int(np.argmax(local_ratios))
            if local_ratios[local_best] > value:
                value = float(local_ratios[local_best])
                argmax_point = local[local_best]
        trail.append(RefinementStep(round_index, half_width, value))
        half_width *= settings.ratio_refinement_shrink

    logger.info(f"Ratio estimate {value!r} from {count} samples ({ESTIMATE_FLAG})")
    return RatioEstimate(value=value, argmax_point=argmax_point, sample_count=count, trail=trail)


def verify_envelope(
    f: Callable, g: Callable, sampler, count: int = 10_000, tol: Optional[float] = None
) -> EnvelopeCheck:
    """f <= g + tol on every sample, else the first violating sample."""
    tol = settings.tol if tol is None else tol
    points = sampler.draw(count)
    violated = evaluate_rows(f, points) > evaluate_rows(g, points) + tol
    if np.any(violated):
        return EnvelopeCheck(False, points[int(np.argmax(violated))])
    return EnvelopeCheck(True, None)


def validate_lyapunov_certificate(
    cert: LyapunovCertificate,
    system_map: Callable,
    sampler,
    count: int = 10_000,
    tol: Optional[float] = None,
) -> LyapunovValidation:
    """Sample check of the Lyapunov hypotheses on the stable ball."""
    tol = settings.tol if tol is None else tol
    points = sampler.draw(count)
    report = LyapunovValidation(sample_count=len(points))

    origin = np.zeros((1, cert.domain.dimension))
    if abs(evaluate_rows(cert.V, origin)[0]) > tol:
        report.issues.append("V(0) != 0")

    v = evaluate_rows(cert.V, points)
    if np.any(v <= 0):
        report.issues.append(f"V not positive at {points[int(np.argmax(v <= 0))].tolist()}")

    norms = np.sqrt(np.sum(points * points, axis=-1))
    lower = np.array([cert.alpha_lower(s) for s in norms])
    if np.any(lower > v + tol):
        report.issues.append(f"alpha_V(|x|) > V(x) at {points[int(np.argmax(lower > v + tol))].tolist()}")

    images = apply_rows(system_map, points)
    decrease = evaluate_rows(cert.V, images) > cert.ratio * v + tol
    if np.any(decrease):
        report.issues.append(
            f"V(T(x)) > {cert.ratio!r} V(x) at {points[int(np.argmax(decrease))].tolist()}"
        )

    outside = ~cert.domain.contains(images, tol)
    if np.any(outside):
        report.issues.append(f"T leaves the ball at {points[int(np.argmax(outside))].tolist()}")

    for issue in report.issues:
        logger.warning(f"Lyapunov hypothesis check: {issue}")
    return report


def _kl_bridge(kl: SontagFormKL) -> BridgeFunction:
    theta1, theta2, psi = kl.theta1, kl.theta2, kl.psi_sup
    if kl.psi_scaling == "argument":
        forward = lambda y: theta1(theta2(psi * y))
        inverse = lambda v: theta2.inv(theta1.inv(v)) / psi
        description = theta1.describe(theta2.describe(f"{psi:.6g}*s"))
    else:
        level = theta2(psi)
        forward = lambda y: theta1(level * y)
        inverse = lambda v: theta1.inv(v) / level
        description = theta1.describe(f"{level:.6g}*s")
    return BridgeFunction(forward, inverse, description=description)


def build_pair_from_kl(kl: SontagFormKL) -> CertificatePair:
    """(h, decay) from a Sontag-form KL bound on the objective itself."""
    h = _kl_bridge(kl)
    logger.info(f"KL pair: h(s) = {h.description}, beta = {kl.decay!r}")
    return CertificatePair(h, kl.decay, label="kl")


def build_pair_from_classical_kl(kl: SontagFormKL, envelope: ClassKFunction) -> CertificatePair:
    """(alpha o h, decay) when the KL bound is on a state measure psi with phi <= alpha(psi)."""
    inner = _kl_bridge(kl)
    h = BridgeFunction(
        lambda y: envelope(inner(y)),
        lambda v: inner.inverse(envelope.inv(v)),
        description=envelope.describe(inner.description),
    )
    logger.info(f"Classical KL pair: h(s) = {h.description}, beta = {kl.decay!r}")
    return CertificatePair(h, kl.decay, label="kl-classical")


def _require_positive_sup(cert: LyapunovCertificate) -> float:
    sup = cert.sup_on_init
    if not (math.isfinite(sup) and sup > 0):
        raise InvalidCertificateError(
            f"sup of V over the initial set is {sup!r}",
            hypothesis="initial set not reduced to {0} (sup V > 0)",
        )
    return sup


def build_pair_direct_lyap(cert: LyapunovCertificate) -> CertificatePair:
    """h(s) = s * sup V, beta = ratio; needs phi <= V on the domain."""
    sup = _require_positive_sup(cert)
    h = BridgeFunction(lambda s: s * sup, lambda v: v / sup, description=f"{sup:.6g}*s")
    logger.info(f"Direct Lyapunov pair: h(s) = {h.description}, beta = {cert.ratio!r}")
    return CertificatePair(h, cert.ratio, label="lyapunov-direct")


def build_pair_continuous_lyap(cert: LyapunovCertificate, alpha: ClassKFunction) -> CertificatePair:
    """
    h(s) = alpha(alpha_V^{-1}(s * sup V)), beta = ratio.

    alpha_V^{-1} is only trusted on [0, sup V]; it is validated there once.
    """
    sup = _require_positive_sup(cert)
    alpha_lower = cert.alpha_lower
    tol = settings.inverse_tol

    reach = alpha_lower.inv(sup)
    if not (0.0 <= reach < alpha_lower.domain_sup and abs(alpha_lower(reach) - sup) <= tol * max(1.0, sup)):
        raise InvalidCertificateError(
            f"{alpha_lower.describe()} does not reach sup V = {sup!r} on its domain",
            hypothesis="alpha_V(s) > sup V for some s",
        )

    def forward(s: float) -> float:
        level = s * sup
        if level > sup * (1.0 + tol):
            raise InvalidCertificateError(
                f"alpha_V^{{-1}} requested at {level!r}, beyond the validated range [0, {sup!r}]",
                hypothesis="alpha_V^{-1} used on [0, sup V] only",
            )
        return alpha(alpha_lower.inv(level))

    def inverse(v: float) -> float:
        return alpha_lower(alpha.inv(v)) / sup

    if alpha_lower.template == "{}":
        description = alpha.describe(f"{sup:.6g}*s")
    else:
        description = alpha.describe(f"inv[{alpha_lower.describe()}]({sup:.6g}*s)")
    h = BridgeFunction(forward, inverse, description=description)
    logger.info(f"Continuous Lyapunov pair: h(s) = {h.description}, beta = {cert.ratio!r}")
    return CertificatePair(h, cert.ratio, label="lyapunov-continuous")
