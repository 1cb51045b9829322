"""
Reference values for the running example scenarios and the harness that
re-solves a scenario and compares every published number against them.

Floats are compared with relative tolerance ``REFERENCE_REL_TOL``; stopping
integers and ranks must match exactly.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from loguru import logger

from constants import REFERENCE_REL_TOL, CertificateKind
from errors import ConfigError
from models import (
    CoordinateObjectiveSpec,
    KLCertificateSpec,
    LyapunovCertificateSpec,
    ReproductionReport,
    ReproductionRow,
    SolveConfig,
)
from peak_service import PeakService
from running_example import get_scenario
from seq_core import PeakSolution


@dataclass(frozen=True)
class Reference:
    quantity: str
    value: float
    exact: bool = False


def _F(k: int, value: float) -> Reference:
    return Reference(f"F({k})", value)


def _K(value: int) -> Reference:
    return Reference("K", value, exact=True)


def _argmax(value: int) -> Reference:
    return Reference("argmax", value, exact=True)


def _optimum(value: float) -> Reference:
    return Reference("optimum", value)


def _beta(value: float) -> Reference:
    return Reference("beta", value)


REFERENCE_VALUES: Dict[Tuple[str, str, int], List[Reference]] = {
    ("a", "kl", 1): [_F(2, 7.3415), _K(7), _argmax(2), _optimum(0.03463)],
    ("a", "kl", 2): [_F(2, 8.0482), _K(8), _argmax(2), _optimum(0.02432)],
    ("b", "kl", 1): [_F(0, 2.4598), _F(1, 2.4584), _K(2), _argmax(1), _optimum(0.70048)],
    ("b", "kl", 2): [_F(0, 10.432), _F(3, 8.0945), _K(8), _argmax(3), _optimum(0.04183)],
    ("a", "lyapunov", 1): [_beta(1 / 32), _F(2, 2.1183), _K(2), _argmax(2), _optimum(0.03463)],
    ("a", "lyapunov", 2): [_beta(1 / 32), _F(2, 2.3222), _K(2), _argmax(2), _optimum(0.02432)],
    ("b", "lyapunov", 1): [_beta(0.36581), _F(1, 2.44459), _K(2), _argmax(1), _optimum(0.70048)],
    ("b", "lyapunov", 2): [_beta(0.36581), _F(3, 8.04905), _K(8), _argmax(3), _optimum(0.04183)],
    ("c", "lyapunov", 1): [
        _beta(0.9248), _F(0, 20.187), _F(1, 17.897), _F(2, 16.867), _K(16), _argmax(2), _optimum(2.50476),
    ],
    ("c", "lyapunov", 2): [_beta(0.9248), _F(5, 88.6294), _K(88), _argmax(5), _optimum(0.15155)],
    ("d", "lyapunov", 1): [_beta(0.9706), _F(4, 268.47), _F(6, 233.34), _K(233), _argmax(6), _optimum(0.1512)],
    ("d", "lyapunov", 2): [
        _beta(0.9706), _F(5, 339.85), _F(7, 316.78), _K(316), _argmax(7), _optimum(0.0435835),
    ],
}


def scenario_config(scenario: str, certificate: str, objective: int) -> SolveConfig:
    """Solve config for one scenario cell."""
    cell = get_scenario(scenario)
    kind = CertificateKind(certificate)
    if kind is CertificateKind.KL:
        if not cell.kl_applicable:
            raise ConfigError(
                f"the KL certificate only covers scenarios a and b (got {scenario}); "
                "its e^-1 bound needs the initial set inside |x|^2 < rho_under",
                hypothesis="sup |x|^2 < rho_under",
            )
        spec = KLCertificateSpec(kind="kl", theta1="identity", theta2="sqrt", psi_sup="max_norm_sq")
    else:
        spec = LyapunovCertificateSpec(kind="lyapunov")
    return SolveConfig(
        scenario=cell.name.value,
        objective=CoordinateObjectiveSpec(kind="coordinate", index=objective),
        certificate=spec,
    )


def _computed(reference: Reference, solution: PeakSolution, beta: float) -> Optional[float]:
    if reference.quantity == "K":
        return solution.stopping_integer
    if reference.quantity == "argmax":
        return solution.argmax_rank
    if reference.quantity == "optimum":
        return solution.optimum
    if reference.quantity == "beta":
        return beta
    k = int(reference.quantity[2:-1])
    for record in solution.trace:
        if record.k == k and record.updated:
            return record.f_value
    return None


def _matches(reference: Reference, computed: Optional[float]) -> bool:
    if computed is None:
        return False
    if reference.exact:
        return computed == reference.value
    return abs(computed - reference.value) <= REFERENCE_REL_TOL * abs(reference.value)


def reproduce(service: PeakService, scenario: str, certificate: str, objective: int) -> ReproductionReport:
    key = (scenario.lower(), certificate.lower(), objective)
    if key not in REFERENCE_VALUES:
        raise ConfigError(f"no reference values for scenario {scenario}, certificate {certificate}, objective {objective}")
    config = scenario_config(*key)
    report, solution = service.solve(config)

    rows = []
    for reference in REFERENCE_VALUES[key]:
        computed = _computed(reference, solution, report.certificate_summary.beta)
        ok = _matches(reference, computed)
        rows.append(
            ReproductionRow(
                quantity=reference.quantity,
                reference=reference.value,
                computed=computed,
                delta=None if computed is None else abs(computed - reference.value),
                ok=ok,
            )
        )
        if not ok:
            logger.error(f"{reference.quantity}: reference {reference.value!r}, computed {computed!r}")
    return ReproductionReport(
        scenario=key[0],
        certificate=key[1],
        objective=objective,
        rows=rows,
        passed=all(row.ok for row in rows),
    )
