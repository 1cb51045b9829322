"""
Tests for certificate construction and ratio estimation
"""

import math

import numpy as np
import pytest

from certificates import (
    IDENTITY,
    ClassKFunction,
    ExplicitSampler,
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
from constants import ESTIMATE_FLAG
from errors import InvalidCertificateError
from running_example import (
    SQRT,
    SQUARE,
    ball_sampler,
    get_scenario,
    lyapunov_V,
    lyapunov_certificate,
    map_H,
    ratio_closed_form,
)
from seq_core import verify_domination
from systems import Objective, nu_sequence

SQUARED_NORM = lambda x: np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)


def simple_certificate(sup_on_init: float, alpha_lower: ClassKFunction = IDENTITY) -> LyapunovCertificate:
    return LyapunovCertificate(
        V=SQUARED_NORM,
        domain=StableDomain(4.0),
        alpha_lower=alpha_lower,
        ratio=0.5,
        sup_on_init=sup_on_init,
    )


# ==========================================
# Class-K functions and closed forms
# ==========================================

def test_inverse_falls_back_to_root_finding():
    cubic = ClassKFunction(lambda s: s ** 3 + s, template="({})^3 + {}")
    assert cubic.inv(10.0) == pytest.approx(2.0, abs=1e-10)
    assert cubic.inv(0.0) == 0.0


def test_class_k_must_vanish_at_zero():
    with pytest.raises(InvalidCertificateError, match="zero at zero"):
        ClassKFunction(lambda s: s + 1.0, lambda v: v - 1.0)


def test_class_k_must_increase():
    with pytest.raises(InvalidCertificateError, match="strictly increasing"):
        ClassKFunction(lambda s: -s, lambda v: -v)


def test_bounded_class_k_inverse_outside_range():
    bounded = ClassKFunction(lambda s: s / (1.0 + s), domain_sup=math.inf, template="{}/(1+{})")
    with pytest.raises(InvalidCertificateError, match="stays below"):
        bounded.inv(2.0)


@pytest.mark.parametrize(
    "spec,argument,expected",
    [
        ("identity", 3.0, 3.0),
        ("sqrt", 9.0, 3.0),
        ("power 2", 3.0, 9.0),
        ("power 3", 2.0, 8.0),
        ("scale 1.5", 2.0, 3.0),
        (["scale 2", "sqrt"], 8.0, 4.0),
        (["sqrt", "power 2"], 5.0, 5.0),
    ],
)
def test_closed_forms(spec, argument, expected):
    fn = parse_class_k(spec)
    assert fn(argument) == pytest.approx(expected)
    assert fn.inv(expected) == pytest.approx(argument)


def test_closed_form_descriptions_compose_in_order():
    assert parse_class_k(["scale 2", "sqrt"]).describe("s") == "sqrt(2*s)"


@pytest.mark.parametrize("spec", ["cube", "power", "power -1", "scale zero", "sqrt 2", ""])
def test_invalid_closed_forms(spec):
    with pytest.raises(ValueError):
        parse_class_k(spec)


# ==========================================
# KL pairs
# ==========================================

def test_kl_pair_linear_bound():
    four = parse_class_k("scale 4")
    pair = build_pair_from_kl(SontagFormKL(theta1=IDENTITY, theta2=four, psi_sup=1.0))
    assert pair.h(0.5) == pytest.approx(2.0)
    assert pair.beta == pytest.approx(math.exp(-1.0))
    assert pair.label == "kl"


def test_kl_psi_scaling_level_versus_argument():
    argument = build_pair_from_kl(SontagFormKL(IDENTITY, SQUARE, psi_sup=2.0))
    level = build_pair_from_kl(SontagFormKL(IDENTITY, SQUARE, psi_sup=2.0, psi_scaling="level"))
    assert argument.h(0.5) == pytest.approx(1.0)
    assert level.h(0.5) == pytest.approx(2.0)
    assert argument.h.value_at_one == level.h.value_at_one == pytest.approx(4.0)


def test_kl_pair_for_scenario_a():
    scenario = get_scenario("a")
    pair = build_pair_from_kl(SontagFormKL(IDENTITY, SQRT, psi_sup=scenario.sup_norm_sq))
    assert pair.h(1.0) == pytest.approx(math.sqrt(1.85))


@pytest.mark.parametrize("decay", [0.0, 1.0, 2.0])
def test_kl_decay_outside_unit_interval(decay):
    with pytest.raises(InvalidCertificateError, match=r"\(0,1\)"):
        SontagFormKL(IDENTITY, SQRT, psi_sup=1.0, decay=decay)


def test_kl_needs_positive_psi_sup():
    with pytest.raises(InvalidCertificateError):
        SontagFormKL(IDENTITY, SQRT, psi_sup=0.0)


def test_classical_kl_composes_envelope():
    kl = SontagFormKL(IDENTITY, IDENTITY, psi_sup=2.0)
    pair = build_pair_from_classical_kl(kl, parse_class_k("scale 3"))
    assert pair.h(0.5) == pytest.approx(3.0)
    assert pair.h.inverse(3.0) == pytest.approx(0.5)
    assert pair.label == "kl-classical"


# ==========================================
# Lyapunov pairs
# ==========================================

def test_direct_lyapunov_pair():
    pair = build_pair_direct_lyap(simple_certificate(3.0))
    assert pair.h(0.5) == pytest.approx(1.5)
    assert pair.beta == 0.5
    assert pair.label == "lyapunov-direct"


def test_continuous_pair_with_identities_matches_direct():
    cert = simple_certificate(3.0)
    direct = build_pair_direct_lyap(cert)
    continuous = build_pair_continuous_lyap(cert, IDENTITY)
    for s in np.linspace(0.0, 1.0, 11):
        assert continuous.h(s) == direct.h(s)
        assert continuous.h.inverse(direct.h(s)) == direct.h.inverse(direct.h(s))


def test_continuous_pair_with_square_lower_bound():
    pair = build_pair_continuous_lyap(simple_certificate(4.0, SQUARE), IDENTITY)
    assert pair.h(1.0) == pytest.approx(2.0)
    assert pair.h(0.25) == pytest.approx(1.0)


def test_unreachable_lower_bound_rejected():
    capped = ClassKFunction(lambda s: s, domain_sup=1.0, template="{}")
    with pytest.raises(InvalidCertificateError, match="reach"):
        build_pair_continuous_lyap(simple_certificate(3.0, capped), IDENTITY)


def test_continuous_pair_refuses_levels_beyond_sup():
    pair = build_pair_continuous_lyap(simple_certificate(3.0, SQUARE), IDENTITY)
    with pytest.raises(InvalidCertificateError, match="beyond the validated range"):
        pair.h.forward(2.0)


def test_zero_sup_on_initial_set_rejected():
    with pytest.raises(InvalidCertificateError):
        build_pair_direct_lyap(simple_certificate(0.0))


@pytest.mark.parametrize("ratio", [0.0, 1.0, 1.2])
def test_lyapunov_ratio_must_lie_in_unit_interval(ratio):
    with pytest.raises(InvalidCertificateError, match=r"\(0,1\)"):
        LyapunovCertificate(SQUARED_NORM, StableDomain(1.0), IDENTITY, ratio, 1.0)


def test_direct_pair_dominates_lyapunov_objective_on_scenario_c(system):
    scenario = get_scenario("c")
    cert = lyapunov_certificate(scenario.radius_sq, scenario.sup_V)
    u = nu_sequence(system, scenario.points, Objective(lyapunov_V, 2, "V"))
    assert verify_domination(u, build_pair_direct_lyap(cert), 50).ok


# ==========================================
# Ratio operator
# ==========================================

def test_ratio_of_identity_map_is_one():
    estimate = ratio_operator_estimate(lyapunov_V, lambda x: x, ball_sampler(8.9), samples=5000)
    assert estimate.value == 1.0
    assert not estimate.is_certificate
    assert estimate.flag == ESTIMATE_FLAG


@pytest.mark.parametrize("radius_sq", [1.85, 5.7341, 8.84, 8.9])
def test_estimate_agrees_with_closed_form(radius_sq):
    estimate = ratio_operator_estimate(lyapunov_V, map_H, ball_sampler(radius_sq, seed=0))
    closed = ratio_closed_form(radius_sq)
    assert estimate.value <= closed * (1.0 + 1e-12)
    assert estimate.value == pytest.approx(closed, rel=1e-3)


def test_estimate_is_deterministic_for_a_seed():
    first = ratio_operator_estimate(lyapunov_V, map_H, ball_sampler(5.7341, seed=7), samples=20000)
    second = ratio_operator_estimate(lyapunov_V, map_H, ball_sampler(5.7341, seed=7), samples=20000)
    assert first.value == second.value
    assert [step.value for step in first.trail] == [step.value for step in second.trail]


def test_refinement_never_lowers_the_estimate():
    estimate = ratio_operator_estimate(lyapunov_V, map_H, ball_sampler(8.9), samples=10000)
    values = [step.value for step in estimate.trail]
    assert values == sorted(values)
    assert len(values) == 4


def test_zero_of_w_is_an_error():
    with pytest.raises(InvalidCertificateError, match="vanishes"):
        ratio_operator_estimate(lambda x: x[..., 0] ** 2, map_H, ExplicitSampler([[0.0, 1.0]]))


@pytest.mark.parametrize("power", [2, 3, 4])
def test_power_is_sub_multiplicative(power):
    base = ball_sampler(8.9, seed=3).draw(500)
    orbit = [base]
    for _ in range(power - 1):
        orbit.append(map_H(orbit[-1]))
    # contains x, H(x), ..., H^{power-1}(x) for every base point
    closed_under_map = np.concatenate(orbit)

    def map_power(x):
        for _ in range(power):
            x = map_H(x)
        return x

    single = ratio_operator_estimate(lyapunov_V, map_H, ExplicitSampler(closed_under_map), refinement=0)
    repeated = ratio_operator_estimate(lyapunov_V, map_power, ExplicitSampler(base), refinement=0)
    assert repeated.value <= single.value ** power + 1e-9


def test_closed_form_ratio_is_monotone_in_radius():
    radii = [0.5, 1.85, 2.0, 3.0, 5.7341, 8.84, 8.9]
    ratios = [ratio_closed_form(r) for r in radii]
    assert ratios == sorted(ratios)


# ==========================================
# Hypothesis checks
# ==========================================

def test_envelope_holds():
    sampler = ball_sampler(4.0)
    check = verify_envelope(lambda x: x[..., 0], lambda x: np.sqrt(SQUARED_NORM(x)), sampler, count=2000)
    assert check.ok
    assert check.witness is None


def test_envelope_violation_returns_witness():
    sampler = ball_sampler(4.0)
    check = verify_envelope(lambda x: 2.0 * SQUARED_NORM(x), SQUARED_NORM, sampler, count=2000)
    assert not check.ok
    assert check.witness is not None


def test_first_coordinate_is_not_below_v_inside_the_unit_ball():
    check = verify_envelope(lambda x: x[..., 0], lyapunov_V, ball_sampler(1.85), count=2000)
    assert not check.ok
    assert SQUARED_NORM(check.witness) < 1.0


def test_envelope_of_a_function_with_itself():
    check = verify_envelope(lyapunov_V, lyapunov_V, ball_sampler(8.9), count=2000)
    assert check.ok


def test_lyapunov_hypotheses_hold_for_scenario_d():
    scenario = get_scenario("d")
    cert = lyapunov_certificate(scenario.radius_sq, scenario.sup_V)
    report = validate_lyapunov_certificate(cert, map_H, ball_sampler(scenario.radius_sq), count=5000)
    assert report.ok, report.issues
    assert report.sample_count == 5000


def test_too_small_ratio_is_reported():
    scenario = get_scenario("d")
    cert = lyapunov_certificate(scenario.radius_sq, scenario.sup_V)
    cert.ratio = 0.5
    report = validate_lyapunov_certificate(cert, map_H, ball_sampler(scenario.radius_sq), count=5000)
    assert not report.ok
    assert any("V(T(x))" in issue for issue in report.issues)
