import json
import math

import numpy as np
import pytest
from oracles import brent_p0, exact_linear_boundary, tanh_sinh_integral

from neumann_layers.asymptotics import (
    check_constants,
    classify_regime,
    compute_constants,
    constants_from,
    curvature_term,
    layer_integrals,
    predict_boundary,
    solve_p0,
    solve_p0_detail,
)
from neumann_layers.coefficients import (
    ProblemInstance,
    ScalarField1D,
    affine_flux,
    constant_family,
    constant_flux,
    cubic_reaction,
    exponential_flux,
    inconspicuous_family,
    linear_reaction,
    power_perturbed_family,
    ramp_family,
    sinh_reaction,
)
from neumann_layers.errors import (
    InconsistentConstantsError,
    ModeError,
    RootBracketingError,
)
from neumann_layers.reports import to_json


def test_p0_linear_constant_flux():
    assert solve_p0(linear_reaction(), constant_flux(1.0), 1.0) == pytest.approx(1.0, abs=1e-12)


def test_p0_affine_flux():
    assert solve_p0(linear_reaction(), affine_flux(2.0, 1.0), 1.0) == pytest.approx(1.0, abs=1e-12)


def test_p0_exponential_flux_against_brent():
    ref = brent_p0(lambda p: p * p / 2, lambda p: math.exp(-p), 1.0)
    p0 = solve_p0(linear_reaction(), exponential_flux(), 1.0)
    assert p0 == pytest.approx(ref, abs=1e-12)
    assert p0 == pytest.approx(0.5671433, abs=1e-7)


def test_p0_nonlinear_reaction_against_brent():
    # F(p) = p^2/2 + p^4/4 for the cubic reaction with slope = kappa = 1
    ref = brent_p0(lambda p: p**2 / 2 + p**4 / 4, lambda p: 3.0 * math.exp(-0.5 * p), 2.0)
    p0 = solve_p0(cubic_reaction(), exponential_flux(3.0, 0.5), 2.0)
    assert p0 == pytest.approx(ref, abs=1e-12)


def test_bisection_and_newton_roots_agree():
    for f, e, mu0 in [(linear_reaction(), exponential_flux(), 1.0),
                      (cubic_reaction(0.5, 2.0, 0.3), affine_flux(3.0, 0.5), 0.7),
                      (sinh_reaction(), constant_flux(2.0), 1.5)]:
        p_bis, p_newton = solve_p0_detail(f, e, mu0)
        assert abs(p_bis - p_newton) <= 1e-12


def test_p0_bracketing_failure():
    with pytest.raises(RootBracketingError, match="root bracketing failure"):
        solve_p0(linear_reaction(), constant_flux(1e7), 1.0)


def test_p0_requires_positive_mu0():
    with pytest.raises(ValueError):
        solve_p0(linear_reaction(), constant_flux(), 0.0)


def test_curvature_term_examples():
    inst = constant_family(3).at(100.0)
    assert curvature_term(inst) == pytest.approx(0.02, abs=1e-15)
    assert curvature_term(inconspicuous_family(4, mu0=1.7).at(60.0)) == pytest.approx(0.0,
                                                                                    abs=1e-15)
    # a b constant near R: a'/a = -b'/b, so only (N - 1)/R survives
    g = ScalarField1D(lambda r: np.exp(np.asarray(r) / 50), lambda r: np.exp(np.asarray(r) / 50) / 50)
    h = ScalarField1D(lambda r: np.exp(-np.asarray(r) / 50), lambda r: -np.exp(-np.asarray(r) / 50) / 50)
    inst = ProblemInstance(2, 80.0, g, h, linear_reaction(), constant_flux(), 1.0)
    assert curvature_term(inst) == pytest.approx(1 / 80.0, abs=1e-15)


def test_constants_linear_constant_case():
    c = compute_constants(constant_family().at(100.0))
    assert c.p0 == pytest.approx(1.0, abs=1e-10)
    assert c.C0 == pytest.approx(0.5, abs=1e-10)
    assert c.mass_u == pytest.approx(1.0, abs=1e-10)
    assert c.mass_grad == pytest.approx(0.5, abs=1e-10)
    assert c.mass_u / (c.p0 - c.theta0) == pytest.approx(1.0, abs=1e-10)


def test_constants_affine_flux():
    c = compute_constants(constant_family(flux=affine_flux()).at(100.0))
    assert c.p0 == pytest.approx(1.0, abs=1e-12)
    assert c.C0 == pytest.approx(0.25, abs=1e-10)


def test_constants_against_tanh_sinh_oracle():
    f, e, mu0 = cubic_reaction(0.0, 1.0, 1.0), exponential_flux(), 2.0
    c = constants_from(f, e, mu0)
    F = lambda t: t**2 / 2 + t**4 / 4  # noqa: E731
    p = c.p0
    i_ratio = tanh_sinh_integral(lambda t: math.sqrt(F(t) / F(p)), 0.0, p)
    # t / sqrt(2 F(t)) simplifies to 1 / sqrt(1 + t^2 / 2)
    i_mass = tanh_sinh_integral(lambda t: 1 / math.sqrt(1 + t * t / 2), 0.0, p)
    i_sqrt = tanh_sinh_integral(lambda t: math.sqrt(2 * F(t)), 0.0, p)
    fp, ep, dep = p + p**3, math.exp(-p), -math.exp(-p)
    assert c.C0 == pytest.approx(i_ratio / (mu0 * fp / ep - dep), abs=1e-10)
    assert c.mass_u == pytest.approx(i_mass / math.sqrt(mu0), abs=1e-10)
    assert c.mass_grad == pytest.approx(math.sqrt(mu0) * i_sqrt, abs=1e-10)


@pytest.mark.parametrize("f", [linear_reaction(0.2, 2.0), cubic_reaction(), sinh_reaction()])
def test_two_quadrature_routes_agree(f):
    p0 = solve_p0(f, exponential_flux(), 1.0)
    gauss = layer_integrals(f, p0, "gauss")
    midpoint = layer_integrals(f, p0, "midpoint")
    assert np.allclose(gauss, midpoint, atol=1e-9, rtol=0)


def test_inconsistent_constants_are_rejected():
    c = compute_constants(constant_family().at(50.0))
    from dataclasses import replace
    with pytest.raises(InconsistentConstantsError, match="inconsistent constants"):
        check_constants(replace(c, mass_u=2.0), linear_reaction())
    with pytest.raises(InconsistentConstantsError):
        check_constants(replace(c, e_p0=1.1), linear_reaction())


def test_p0_strictly_decreasing_in_mu0():
    for f, e in [(linear_reaction(), constant_flux()), (cubic_reaction(), exponential_flux())]:
        ps = [solve_p0(f, e, m) for m in (0.5, 1.0, 2.0)]
        assert ps[0] > ps[1] > ps[2]


def test_predict_linear_constant():
    pred = predict_boundary(constant_family().at(100.0))
    assert pred.u_R == pytest.approx(1.005, abs=1e-12)
    assert pred.du_R == pytest.approx(1.0, abs=1e-12)
    assert pred.correction_u == pytest.approx(0.5 * 0.01, abs=1e-12)
    assert pred.mode == "theorem1"


def test_predict_affine_flux():
    pred = predict_boundary(constant_family(flux=affine_flux()).at(100.0))
    assert pred.u_R == pytest.approx(1.0025, abs=1e-12)
    assert pred.du_R == pytest.approx(0.9975, abs=1e-12)


def test_predict_matches_exact_solution_to_second_order():
    for R in (50.0, 100.0, 200.0):
        exact_u, exact_du = exact_linear_boundary(2, R, intercept=2.0, flux_slope=1.0)
        pred = predict_boundary(constant_family(flux=affine_flux()).at(R))
        assert R * abs(exact_u - pred.u_R) < 0.2 * 0.25 * R * (1 / R)
        assert R * abs(exact_du - pred.du_R) < 0.2 * 0.25


def test_perturbed_correction_uses_sensitivity_of_p0():
    fam = power_perturbed_family(mu0=1.0, mu_star=0.3, tau_star=0.5)
    inst = fam.at(100.0)
    pred = predict_boundary(inst, "perturbed", fam)
    # dp0/dmu0 = -dF(p0) / (mu0 f(p0) - e(p0) e'(p0)) = -1/2 for f(u)=u, e=1
    assert pred.perturbation_u == pytest.approx(-0.5 * 0.03, abs=1e-12)
    assert pred.correction_u == pytest.approx(-0.015 + 0.005, abs=1e-12)


def test_perturbation_coefficient_is_the_derivative_of_p0():
    f, e = cubic_reaction(), exponential_flux()
    c = constants_from(f, e, 1.3)
    h = 1e-6
    fd = (solve_p0(f, e, 1.3 + h) - solve_p0(f, e, 1.3 - h)) / (2 * h)
    assert c.perturbation_coefficient == pytest.approx(fd, rel=1e-6)


def test_perturbed_prediction_tracks_exact_solution():
    # b/a = 1 + 0.3 R^-1/2 with a = 1: exact u(R) from Bessel functions
    fam = power_perturbed_family(mu0=1.0, mu_star=0.3, tau_star=0.5)
    for R in (100.0, 400.0):
        exact_u, _ = exact_linear_boundary(2, R, ratio=1.0 + 0.3 / math.sqrt(R))
        pred = predict_boundary(fam.at(R), "perturbed", fam)
        assert abs(exact_u - pred.u_R) < 0.1 * abs(pred.correction_u)


def test_theorem1_rejected_when_perturbation_not_negligible():
    for tau in (0.5, 1.0):
        fam = power_perturbed_family(tau_star=tau)
        with pytest.raises(ModeError, match="perturbation not negligible"):
            predict_boundary(fam.at(100.0), "theorem1", fam)
    fam = power_perturbed_family(tau_star=2.0)
    assert predict_boundary(fam.at(100.0), "theorem1", fam).u_R > 1.0


def test_unknown_mode():
    with pytest.raises(ModeError):
        predict_boundary(constant_family().at(100.0), "third_order")


def test_modes_coincide_for_exact_ratio():
    for fam in (constant_family(mu0=1.7), ramp_family(), inconspicuous_family(3)):
        inst = fam.at(80.0)
        a = predict_boundary(inst, "theorem1", fam)
        b = predict_boundary(inst, "perturbed", fam)
        assert a.u_R == b.u_R and a.du_R == b.du_R


def test_regime_perturbation_dominated_sign_matches_exact_solution():
    for mu_star in (-0.3, 0.3):
        fam = power_perturbed_family(mu_star=mu_star, tau_star=0.5)
        rep = classify_regime(fam, radius=400.0)
        assert rep.regime == "perturbation_dominated"
        assert rep.decay_exponent == 0.5
        exact_u, _ = exact_linear_boundary(2, 400.0, ratio=1.0 + mu_star / 20.0)
        assert rep.sign_u == int(np.sign(exact_u - 1.0))


def test_regime_balanced_and_curvature_dominated():
    fam = power_perturbed_family(mu_star=0.3, tau_star=1.0)
    rep = classify_regime(fam, radius=100.0)
    assert rep.regime == "balanced" and rep.decay_exponent == 1.0
    assert rep.leading_correction_u == pytest.approx(0.5 / 100 - 0.5 * 0.3 / 100, abs=1e-12)
    fam = power_perturbed_family(mu_star=0.3, tau_star=2.0)
    rep = classify_regime(fam, radius=100.0)
    assert rep.regime == "curvature_dominated"
    assert rep.leading_correction_u == pytest.approx(
        predict_boundary(fam.at(100.0), "theorem1", fam).correction_u, abs=1e-15)


def test_regime_requires_power_perturbed_family():
    with pytest.raises(ModeError):
        classify_regime(constant_family())


def test_constants_serialise_losslessly():
    c = compute_constants(constant_family(reaction=cubic_reaction(), flux=exponential_flux()
                                          ).at(50.0))
    back = json.loads(to_json(c))
    for key, value in c.to_dict().items():
        assert back[key] == value
