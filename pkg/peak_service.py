"""
Peak Solve Service
Turns validated configurations into systems, sequences and certificate
pairs, runs the solver and assembles reports
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from certificates import (
    BallSampler,
    LyapunovCertificate,
    SontagFormKL,
    StableDomain,
    build_pair_continuous_lyap,
    build_pair_direct_lyap,
    build_pair_from_classical_kl,
    build_pair_from_kl,
    ratio_operator_estimate,
    validate_lyapunov_certificate,
    verify_envelope,
)
from closed_forms import parse_class_k
from config import Settings, settings as default_settings
from constants import ESTIMATE_FLAG, CertificateKind, LyapunovConstruction, RatioMode, SystemKind
from errors import ConfigError, DominationViolationError, InvalidCertificateError, PeakgateError
from models import (
    AffineSystemSpec,
    BuiltinSystemSpec,
    CandidateResult,
    CertificateSummary,
    CoordinateObjectiveSpec,
    KLCertificateSpec,
    LinearObjectiveSpec,
    LyapunovCertificateSpec,
    NormObjectiveSpec,
    PolynomialFunctionSpec,
    QuadraticObjectiveSpec,
    RatioReport,
    RefinementRow,
    SolveConfig,
    SolveReport,
    TraceRow,
)
from running_example import (
    RHO_BAR,
    get_scenario,
    lyapunov_V,
    ratio_closed_form,
    running_example_system,
)
from seq_core import CertificatePair, PeakSolution, select_best_pair, verify_domination
from systems import (
    AffineMap,
    DiscreteSystem,
    InitialSet,
    Objective,
    Polynomial,
    PolynomialMap,
    coordinate_objective,
    linear_objective,
    norm_objective,
    normalize_objective,
    nu_sequence,
    orbit_table,
    quadratic_objective,
)

BUILTIN_SYSTEMS: Dict[str, Callable[[], DiscreteSystem]] = {
    "running_example": running_example_system,
}


@dataclass
class BuiltCertificate:
    pair: CertificatePair
    summary: CertificateSummary
    warnings: List[str] = field(default_factory=list)


class PeakService:
    """Orchestrates solve, orbit and ratio requests for one invocation"""

    def __init__(
        self,
        current_settings: Optional[Settings] = None,
        seed: Optional[int] = None,
        tol: Optional[float] = None,
        guard: Optional[int] = None,
    ):
        self.settings = current_settings or default_settings
        self.seed_override = seed
        self.tol_override = tol
        self.guard_override = guard

    # ==========================================
    # RUN PARAMETERS (flag > config > environment)
    # ==========================================

    def seed_for(self, config: Optional[SolveConfig] = None) -> int:
        if self.seed_override is not None:
            return self.seed_override
        if config is not None and config.seed is not None:
            return config.seed
        return self.settings.seed

    def tol_for(self, config: Optional[SolveConfig] = None) -> float:
        if self.tol_override is not None:
            return self.tol_override
        if config is not None and config.tolerances.tol is not None:
            return config.tolerances.tol
        return self.settings.tol

    def guard_for(self, config: Optional[SolveConfig] = None) -> int:
        if self.guard_override is not None:
            return self.guard_override
        if config is not None and config.guard is not None:
            return config.guard
        return self.settings.guard

    # ==========================================
    # BUILDERS
    # ==========================================

    def build_system(self, config: SolveConfig) -> DiscreteSystem:
        spec = config.system
        if isinstance(spec, BuiltinSystemSpec):
            try:
                return BUILTIN_SYSTEMS[spec.name]()
            except KeyError:
                valid_systems = ", ".join(BUILTIN_SYSTEMS)
                raise ConfigError(f"Invalid builtin system: '{spec.name}'. Valid options are: {valid_systems}.")
        if isinstance(spec, AffineSystemSpec):
            affine = AffineMap(spec.matrix, spec.offset)
            return DiscreteSystem(affine.dimension, affine, kind=SystemKind.AFFINE, name="affine")
        components = [
            Polynomial([(t.coefficient, t.exponents) for t in component], spec.dimension)
            for component in spec.components
        ]
        return DiscreteSystem(spec.dimension, PolynomialMap(components), kind=SystemKind.POLYNOMIAL, name="polynomial")

    def build_initial_set(self, config: SolveConfig) -> InitialSet:
        if config.scenario is not None:
            try:
                return get_scenario(config.scenario).points
            except ValueError as e:
                raise ConfigError(str(e))
        return InitialSet(np.array(config.initial_points, dtype=float))

    def build_objective(self, config: SolveConfig, dimension: int) -> Objective:
        spec = config.objective
        if spec is None:
            raise ConfigError("solving needs an 'objective'")
        if isinstance(spec, CoordinateObjectiveSpec):
            return coordinate_objective(spec.index, dimension)
        if isinstance(spec, LinearObjectiveSpec):
            return linear_objective(spec.coefficients, spec.constant)
        if isinstance(spec, QuadraticObjectiveSpec):
            return quadratic_objective(spec.matrix, spec.linear, spec.constant)
        if isinstance(spec, NormObjectiveSpec):
            return norm_objective(dimension)
        raise ConfigError(f"unsupported objective {spec!r}")

    def _lyapunov_function(self, spec: LyapunovCertificateSpec, system: DiscreteSystem) -> Callable:
        if isinstance(spec.V, PolynomialFunctionSpec):
            return Polynomial([(t.coefficient, t.exponents) for t in spec.V.terms], system.dimension)
        if system.kind is not SystemKind.BUILTIN:
            raise ConfigError("the builtin V belongs to the builtin running example system")
        return lyapunov_V

    def _resolve_ratio(
        self,
        spec: LyapunovCertificateSpec,
        V: Callable,
        system: DiscreteSystem,
        domain: StableDomain,
        seed: int,
    ) -> Tuple[float, bool]:
        mode = spec.ratio.mode
        if mode is RatioMode.EXPLICIT:
            return spec.ratio.value, False
        if mode is RatioMode.CLOSED:
            if not (spec.V == "builtin" and system.kind is SystemKind.BUILTIN):
                raise ConfigError("the closed-form ratio is only known for the builtin V and map")
            if not domain.radius_sq < RHO_BAR:
                raise ConfigError(
                    f"radius_sq = {domain.radius_sq!r} is outside (0, {RHO_BAR:.6g}) where V contracts",
                    hypothesis="stable ball strictly inside |x|^2 < rho_bar",
                )
            return ratio_closed_form(domain.radius_sq), False
        estimate = ratio_operator_estimate(
            V,
            system.map,
            BallSampler(domain, seed=seed),
            refinement=spec.ratio.refinement,
            samples=spec.ratio.samples,
        )
        return estimate.value, True

    def _kl_certificate(self, spec: KLCertificateSpec, init: InitialSet) -> BuiltCertificate:
        if spec.psi_sup == "max_norm":
            psi_sup = math.sqrt(init.max_norm_sq)
        elif spec.psi_sup == "max_norm_sq":
            psi_sup = init.max_norm_sq
        else:
            psi_sup = float(spec.psi_sup)
        kl = SontagFormKL(
            theta1=parse_class_k(spec.theta1),
            theta2=parse_class_k(spec.theta2),
            psi_sup=psi_sup,
            decay=spec.decay,
            psi_scaling=spec.psi_scaling,
        )
        if spec.envelope is not None:
            pair = build_pair_from_classical_kl(kl, parse_class_k(spec.envelope))
        else:
            pair = build_pair_from_kl(kl)
        return BuiltCertificate(pair, self._summary(CertificateKind.KL, pair))

    def _lyapunov_certificate(
        self,
        spec: LyapunovCertificateSpec,
        system: DiscreteSystem,
        init: InitialSet,
        objective: Objective,
        config: SolveConfig,
    ) -> BuiltCertificate:
        tol = self.tol_for(config)
        radius_sq = spec.radius_sq if spec.radius_sq is not None else init.max_norm_sq
        if init.max_norm_sq > radius_sq + tol:
            raise ConfigError(
                f"initial points reach |x|^2 = {init.max_norm_sq!r} outside the ball radius_sq = {radius_sq!r}",
                hypothesis="initial set inside the stable domain",
            )
        domain = StableDomain(radius_sq, dimension=system.dimension)
        V = self._lyapunov_function(spec, system)
        seed = self.seed_for(config)
        ratio, is_estimate = self._resolve_ratio(spec, V, system, domain, seed)
        alpha_lower = parse_class_k(spec.alpha_lower)
        cert = LyapunovCertificate(
            V=V,
            domain=domain,
            alpha_lower=alpha_lower,
            ratio=ratio,
            sup_on_init=float(np.max(V(init.points))),
            ratio_is_estimate=is_estimate,
        )

        warnings: List[str] = []
        if is_estimate:
            warnings.append(f"ratio {ratio!r} is a sampling estimate ({ESTIMATE_FLAG})")

        sampler = BallSampler(domain, seed=seed)
        if spec.construction is LyapunovConstruction.DIRECT:
            pair = build_pair_direct_lyap(cert)
            envelope = V
            hypothesis = "phi <= V on the domain"
        else:
            alpha = parse_class_k(spec.alpha)
            pair = build_pair_continuous_lyap(cert, alpha)
            envelope = lambda x: np.array([alpha(s) for s in np.sqrt(np.sum(np.atleast_2d(x) ** 2, axis=-1))])
            hypothesis = "phi <= alpha(|x|) on the domain"

        if spec.validate_hypotheses:
            validation = validate_lyapunov_certificate(cert, system.map, sampler, tol=tol)
            if validation.issues and not is_estimate:
                raise InvalidCertificateError(
                    f"Lyapunov certificate with {spec.ratio.mode.value} ratio {ratio!r} fails the sample check: "
                    + "; ".join(validation.issues),
                    hypothesis="V(0) = 0, V > 0 and V(T(x)) <= ratio V(x) inside the stable ball",
                )
            warnings.extend(f"Lyapunov hypothesis check: {issue}" for issue in validation.issues)
            check = verify_envelope(objective, envelope, sampler, tol=tol)
            if not check.ok:
                warnings.append(f"{hypothesis} fails at {check.witness.tolist()}")

        summary = self._summary(
            CertificateKind.LYAPUNOV, pair, ratio_mode=spec.ratio.mode.value, ratio_is_estimate=is_estimate
        )
        return BuiltCertificate(pair, summary, warnings)

    def _summary(self, kind: CertificateKind, pair: CertificatePair, **extra) -> CertificateSummary:
        return CertificateSummary(
            kind=kind.value,
            label=pair.label,
            h=pair.h.description,
            beta=pair.beta,
            h_at_zero=pair.h.value_at_zero,
            h_at_one=pair.h.value_at_one,
            **extra,
        )

    def build_certificates(
        self,
        config: SolveConfig,
        system: DiscreteSystem,
        init: InitialSet,
        objective: Objective,
    ) -> List[BuiltCertificate]:
        specs = config.certificate_specs
        if not specs:
            raise ConfigError("solving needs a 'certificate' or 'certificates'")
        built = []
        for spec in specs:
            try:
                if isinstance(spec, KLCertificateSpec):
                    built.append(self._kl_certificate(spec, init))
                else:
                    built.append(self._lyapunov_certificate(spec, system, init, objective, config))
            except PeakgateError:
                raise
            except ValueError as e:
                raise ConfigError(str(e))
        return built

    # ==========================================
    # COMMANDS
    # ==========================================

    def solve(self, config: SolveConfig) -> Tuple[SolveReport, PeakSolution]:
        try:
            system = self.build_system(config)
            init = self.build_initial_set(config)
            raw_objective = self.build_objective(config, system.dimension)
        except PeakgateError:
            raise
        except ValueError as e:
            raise ConfigError(str(e))

        objective, offset = normalize_objective(raw_objective)
        certificates = self.build_certificates(config, system, init, objective)
        sequence = nu_sequence(system, init, objective)
        tol = self.tol_for(config)
        guard = self.guard_for(config)

        comparison = select_best_pair(sequence, [c.pair for c in certificates], guard=guard, tol=tol)
        chosen = certificates[comparison.best_index]
        solution = comparison.best

        check = verify_domination(sequence, chosen.pair, solution.stopping_integer, tol=tol)
        if not check.ok:
            k = check.first_violation
            raise DominationViolationError(k, sequence[k], chosen.pair.bound(k))

        warnings = [w for c in certificates for w in c.warnings]
        candidates = []
        if len(certificates) > 1:
            for built, candidate in zip(certificates, comparison.solutions):
                candidates.append(
                    CandidateResult(
                        label=built.pair.label,
                        stopping_integer=None if candidate is None else candidate.stopping_integer,
                        optimum=None if candidate is None else candidate.optimum + offset,
                    )
                )

        report = SolveReport(
            optimum=solution.optimum + offset,
            normalized_optimum=solution.optimum,
            objective_offset=offset,
            argmax_rank=solution.argmax_rank,
            maximizing_point=sequence.maximizer(solution.argmax_rank),
            stopping_integer=solution.stopping_integer,
            stopping_integer_history=solution.stopping_history,
            certificate_summary=chosen.summary,
            usefulness=solution.useful,
            trace=[
                TraceRow(
                    k=r.k,
                    u_k=r.value,
                    in_s=r.in_s,
                    f_value=None if math.isinf(r.f_value) else r.f_value,
                    k_after=None if math.isinf(r.k_after) else int(r.k_after),
                    updated=r.updated,
                )
                for r in solution.trace
            ],
            candidates=candidates,
            warnings=warnings,
        )
        logger.info(
            f"Solved: optimum {report.optimum!r} at rank {report.argmax_rank}, "
            f"stopping integer {report.stopping_integer}"
        )
        return report, solution

    def orbit(self, config: SolveConfig, horizon: int) -> pd.DataFrame:
        try:
            system = self.build_system(config)
            init = self.build_initial_set(config)
            return orbit_table(system, init, horizon)
        except PeakgateError:
            raise
        except ValueError as e:
            raise ConfigError(str(e))

    def ratio_builtin(self, radius_sq: float, mode: RatioMode) -> RatioReport:
        if not 0.0 < radius_sq < RHO_BAR:
            raise ConfigError(
                f"radius_sq = {radius_sq!r} must lie in (0, {RHO_BAR:.6g})",
                hypothesis="stable ball strictly inside |x|^2 < rho_bar",
            )
        if mode is RatioMode.CLOSED:
            return RatioReport(mode=mode, value=ratio_closed_form(radius_sq), radius_sq=radius_sq)
        domain = StableDomain(radius_sq, dimension=2)
        return self._estimate_report(lyapunov_V, running_example_system().map, domain, self.seed_for())

    def ratio_from_config(self, config: SolveConfig, mode: RatioMode) -> RatioReport:
        system = self.build_system(config)
        init = self.build_initial_set(config)
        specs = [s for s in config.certificate_specs if isinstance(s, LyapunovCertificateSpec)]
        if not specs:
            raise ConfigError("the ratio command needs a lyapunov certificate in the config")
        spec = specs[0]
        radius_sq = spec.radius_sq if spec.radius_sq is not None else init.max_norm_sq
        V = self._lyapunov_function(spec, system)
        if mode is RatioMode.CLOSED:
            if spec.V != "builtin" or system.kind is not SystemKind.BUILTIN:
                raise ConfigError("the closed-form ratio is only known for the builtin V and map")
            return self.ratio_builtin(radius_sq, mode)
        domain = StableDomain(radius_sq, dimension=system.dimension)
        return self._estimate_report(V, system.map, domain, self.seed_for(config), spec.ratio.samples, spec.ratio.refinement)

    def _estimate_report(
        self,
        V: Callable,
        F: Callable,
        domain: StableDomain,
        seed: int,
        samples: Optional[int] = None,
        refinement: Optional[int] = None,
    ) -> RatioReport:
        estimate = ratio_operator_estimate(V, F, BallSampler(domain, seed=seed), refinement=refinement, samples=samples)
        return RatioReport(
            mode=RatioMode.ESTIMATE,
            value=estimate.value,
            radius_sq=domain.radius_sq,
            sample_count=estimate.sample_count,
            refinement_trail=[
                RefinementRow(
                    round=step.round,
                    half_width=None if math.isnan(step.half_width) else step.half_width,
                    value=step.value,
                )
                for step in estimate.trail
            ],
            flag=estimate.flag,
        )
