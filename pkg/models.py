"""
Pydantic models for solve configurations and reports.

Configs are JSON files with a top-level "version"; every part with
alternatives (system, objective, certificate) is a union discriminated by
its "kind" field. Reports carry ``schema_version`` and are the JSON emitted
by ``peakgate.py --format json``.
"""

import json
import math
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from constants import CONFIG_VERSION, REPORT_SCHEMA_VERSION, LyapunovConstruction, RatioMode
from errors import ConfigError

ClosedFormSpec = Union[str, List[str]]


def _open_unit_interval(name: str, value: float) -> float:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} = {value!r} must lie in the open interval (0,1)")
    return value


# ==========================================
# SYSTEMS
# ==========================================

class MonomialSpec(BaseModel):
    coefficient: float
    exponents: List[int]


class BuiltinSystemSpec(BaseModel):
    kind: Literal["builtin"] = "builtin"
    name: str = "running_example"

    @property
    def dimension(self) -> int:
        return 2


class AffineSystemSpec(BaseModel):
    kind: Literal["affine"]
    matrix: List[List[float]]
    offset: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_shape(self) -> "AffineSystemSpec":
        d = len(self.matrix)
        if d == 0 or any(len(row) != d for row in self.matrix):
            raise ValueError("affine matrix must be square and non-empty")
        if self.offset is not None and len(self.offset) != d:
            raise ValueError(f"affine offset must have length {d}")
        return self

    @property
    def dimension(self) -> int:
        return len(self.matrix)


class PolynomialSystemSpec(BaseModel):
    kind: Literal["polynomial"]
    components: List[List[MonomialSpec]]

    @model_validator(mode="after")
    def check_shape(self) -> "PolynomialSystemSpec":
        d = len(self.components)
        if d == 0:
            raise ValueError("a polynomial map needs at least one component")
        for component in self.components:
            for term in component:
                if len(term.exponents) != d:
                    raise ValueError(f"every monomial needs {d} exponents")
        return self

    @property
    def dimension(self) -> int:
        return len(self.components)


SystemSpec = Annotated[
    Union[BuiltinSystemSpec, AffineSystemSpec, PolynomialSystemSpec], Field(discriminator="kind")
]


# ==========================================
# OBJECTIVES
# ==========================================

class CoordinateObjectiveSpec(BaseModel):
    kind: Literal["coordinate"]
    index: int = Field(ge=1)


class LinearObjectiveSpec(BaseModel):
    kind: Literal["linear"]
    coefficients: List[float]
    constant: float = 0.0


class QuadraticObjectiveSpec(BaseModel):
    kind: Literal["quadratic"]
    matrix: List[List[float]]
    linear: Optional[List[float]] = None
    constant: float = 0.0


class NormObjectiveSpec(BaseModel):
    kind: Literal["norm"]


ObjectiveSpec = Annotated[
    Union[CoordinateObjectiveSpec, LinearObjectiveSpec, QuadraticObjectiveSpec, NormObjectiveSpec],
    Field(discriminator="kind"),
]


# ==========================================
# CERTIFICATES
# ==========================================

class KLCertificateSpec(BaseModel):
    kind: Literal["kl"]
    theta1: ClosedFormSpec = "identity"
    theta2: ClosedFormSpec = "identity"
    psi_sup: Union[float, Literal["max_norm", "max_norm_sq"]] = "max_norm"
    decay: float = math.exp(-1.0)
    psi_scaling: Literal["argument", "level"] = "argument"
    envelope: Optional[ClosedFormSpec] = None

    @field_validator("decay")
    @classmethod
    def validate_decay(cls, v: float) -> float:
        return _open_unit_interval("decay (beta)", v)

    @field_validator("psi_sup")
    @classmethod
    def validate_psi_sup(cls, v):
        if isinstance(v, float) and not (math.isfinite(v) and v > 0):
            raise ValueError("psi_sup must be a positive number")
        return v


class PolynomialFunctionSpec(BaseModel):
    terms: List[MonomialSpec]


class RatioSpec(BaseModel):
    mode: RatioMode = RatioMode.CLOSED
    value: Optional[float] = None
    samples: Optional[int] = Field(default=None, ge=1)
    refinement: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def check_explicit(self) -> "RatioSpec":
        if self.mode is RatioMode.EXPLICIT:
            if self.value is None:
                raise ValueError("explicit ratio mode needs a value")
            _open_unit_interval("ratio (beta)", self.value)
        return self


class LyapunovCertificateSpec(BaseModel):
    kind: Literal["lyapunov"]
    V: Union[Literal["builtin"], PolynomialFunctionSpec] = "builtin"
    radius_sq: Optional[float] = Field(default=None, gt=0)
    ratio: RatioSpec = Field(default_factory=RatioSpec)
    construction: LyapunovConstruction = LyapunovConstruction.CONTINUOUS
    alpha: ClosedFormSpec = "identity"
    alpha_lower: ClosedFormSpec = "power 2"
    validate_hypotheses: bool = True


CertificateSpec = Annotated[Union[KLCertificateSpec, LyapunovCertificateSpec], Field(discriminator="kind")]


class TolerancesSpec(BaseModel):
    tol: Optional[float] = Field(default=None, gt=0)


# ==========================================
# SOLVE CONFIG
# ==========================================

class SolveConfig(BaseModel):
    version: int = CONFIG_VERSION
    system: SystemSpec = Field(default_factory=BuiltinSystemSpec)
    scenario: Optional[str] = None
    initial_points: Optional[List[List[float]]] = None
    objective: Optional[ObjectiveSpec] = None
    certificate: Optional[CertificateSpec] = None
    certificates: Optional[List[CertificateSpec]] = None
    guard: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = None
    tolerances: TolerancesSpec = Field(default_factory=TolerancesSpec)

    @field_validator("version")
    @classmethod
    def validate_version(cls, v: int) -> int:
        if v != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {v}; expected {CONFIG_VERSION}")
        return v

    @model_validator(mode="after")
    def check_consistency(self) -> "SolveConfig":
        if (self.scenario is None) == (self.initial_points is None):
            raise ValueError("give exactly one of 'scenario' or 'initial_points'")
        if self.certificate is not None and self.certificates is not None:
            raise ValueError("give either 'certificate' or 'certificates', not both")
        if self.certificates is not None and len(self.certificates) == 0:
            raise ValueError("'certificates' must not be empty")

        d = self.system.dimension
        if self.scenario is not None:
            if not isinstance(self.system, BuiltinSystemSpec):
                raise ValueError("named scenarios belong to the builtin running example system")
        else:
            if len(self.initial_points) == 0:
                raise ValueError("initial_points must not be empty")
            for point in self.initial_points:
                if len(point) != d:
                    raise ValueError(f"initial point {point} does not have dimension {d}")

        objective = self.objective
        if isinstance(objective, CoordinateObjectiveSpec) and objective.index > d:
            raise ValueError(f"coordinate index {objective.index} exceeds dimension {d}")
        if isinstance(objective, LinearObjectiveSpec) and len(objective.coefficients) != d:
            raise ValueError(f"linear objective needs {d} coefficients")
        if isinstance(objective, QuadraticObjectiveSpec):
            if len(objective.matrix) != d or any(len(row) != d for row in objective.matrix):
                raise ValueError(f"quadratic objective needs a {d}x{d} matrix")
            if objective.linear is not None and len(objective.linear) != d:
                raise ValueError(f"quadratic objective linear part needs {d} entries")

        for spec in self.certificate_specs:
            if isinstance(spec, LyapunovCertificateSpec) and isinstance(spec.V, PolynomialFunctionSpec):
                for term in spec.V.terms:
                    if len(term.exponents) != d:
                        raise ValueError(f"every monomial of V needs {d} exponents")
        return self

    @property
    def certificate_specs(self) -> List[Union[KLCertificateSpec, LyapunovCertificateSpec]]:
        if self.certificates is not None:
            return list(self.certificates)
        return [self.certificate] if self.certificate is not None else []


def parse_config(text: str) -> SolveConfig:
    try:
        return SolveConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}", hypothesis="configuration schema")


def load_config(path: Union[str, Path]) -> SolveConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read configuration {path}: {e}")
    try:
        json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"configuration {path} is not valid JSON: {e}")
    return parse_config(text)


def dump_config(config: SolveConfig) -> str:
    return config.model_dump_json(indent=2, exclude_none=True)


# ==========================================
# REPORTS
# ==========================================

class TraceRow(BaseModel):
    k: int
    u_k: float
    in_s: bool
    f_value: Optional[float] = Field(description="None encodes +infinity")
    k_after: Optional[int] = Field(description="None encodes +infinity")
    updated: bool


class CertificateSummary(BaseModel):
    kind: str
    label: str
    h: str
    beta: float
    h_at_zero: float
    h_at_one: float
    ratio_mode: Optional[str] = None
    ratio_is_estimate: bool = False


class CandidateResult(BaseModel):
    label: str
    stopping_integer: Optional[int] = None
    optimum: Optional[float] = None


class SolveReport(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    optimum: float
    normalized_optimum: float
    objective_offset: float
    argmax_rank: int
    maximizing_point: Optional[int] = None
    stopping_integer: int
    stopping_integer_history: List[int]
    certificate_summary: CertificateSummary
    usefulness: bool
    trace: List[TraceRow]
    candidates: List[CandidateResult] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)


class RefinementRow(BaseModel):
    round: int
    half_width: Optional[float] = None
    value: float


class RatioReport(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    mode: RatioMode
    value: float
    radius_sq: float
    sample_count: Optional[int] = None
    refinement_trail: List[RefinementRow] = Field(default_factory=list)
    flag: Optional[str] = None


class ReproductionRow(BaseModel):
    quantity: str
    reference: float
    computed: Optional[float] = None
    delta: Optional[float] = None
    ok: bool


class ReproductionReport(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    scenario: str
    certificate: str
    objective: int
    rows: List[ReproductionRow]
    passed: bool
