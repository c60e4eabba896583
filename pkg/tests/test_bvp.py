import math
from dataclasses import replace

import numpy as np
import pytest
from oracles import exact_linear_boundary, exact_linear_profile
from scipy import integrate

from neumann_layers.bvp import (
    Mesh,
    SolutionProfile,
    SolverConfig,
    TestFunction,
    build_mesh,
    bump,
    check_profile,
    coefficient_samples,
    evaluate,
    first_integral_residuals,
    first_integral_terms,
    observed_order,
    oracle_solve,
    scaled,
    solve,
    stability_form,
)
from neumann_layers.coefficients import (
    affine_flux,
    constant_family,
    cubic_reaction,
    delta_F_array,
    exponential_flux,
    ramp_family,
)
from neumann_layers.errors import (
    InadmissibleTestFunctionError,
    NonConvergenceError,
    OutOfDomainError,
    SolutionRejectedError,
)


def test_boundary_value_matches_two_term_expansion(linear_profiles):
    scaled_res = []
    for R in (100.0, 200.0):
        u1 = float(linear_profiles(R).u[-1])
        scaled_res.append(R * abs(u1 - (1.0 + 0.5 / R)))
    assert scaled_res[0] < 0.01
    assert scaled_res[1] < scaled_res[0]


def test_boundary_value_against_bessel_solution(linear_profiles):
    for R in (20.0, 50.0, 100.0, 200.0):
        exact_u, exact_du = exact_linear_boundary(2, R)
        p = linear_profiles(R)
        assert abs(p.u[-1] - exact_u) < 1e-6
        assert abs(p.eps * p.du[-1] - exact_du) < 1e-9


def test_profile_against_bessel_solution_in_three_dimensions():
    R = 60.0
    p = solve(constant_family(3, flux=affine_flux()).at(R))
    r = p.s * R
    exact = exact_linear_profile(3, R, r, intercept=2.0, flux_slope=1.0)
    assert np.max(np.abs(p.u - exact)) < 1e-6


def test_interior_is_flat(linear_profiles):
    u_half, _ = evaluate(linear_profiles(100.0), 0.5)
    assert 0.0 <= u_half <= 1e-8


def test_continuation_consistency(linear_profiles):
    a, b = linear_profiles(50.0), linear_profiles(100.0)
    assert abs(a.u[-1] - b.u[-1]) <= 2.0 * a.eps
    assert abs(a.u[-1] - b.u[-1]) >= 0.1 * a.eps  # the O(eps) term is really there


def test_oracle_agrees_with_graded_solver(linear_family, linear_profiles):
    inst = linear_family.at(50.0)
    oracle = oracle_solve(inst, 16384)
    assert abs(oracle.profile.u[-1] - linear_profiles(50.0).u[-1]) < 1e-6
    assert oracle.error_estimate < 1e-5
    assert abs(oracle.profile.u[-1] - exact_linear_boundary(2, 50.0)[0]) < 1e-9


def test_oracle_observed_order(linear_family):
    assert observed_order(linear_family.at(50.0), 2048) == pytest.approx(2.0, abs=0.2)


def test_interior_value_decreases_with_radius(linear_family):
    vals = [evaluate(oracle_solve(linear_family.at(R), 4096).profile, 10.0 / R)[0]
            for R in (50.0, 100.0)]
    assert 0 < vals[1] < vals[0]


def test_oracle_rejects_bad_refinement(linear_family):
    with pytest.raises(ValueError):
        oracle_solve(linear_family.at(50.0), 1)


def test_evaluate_is_exact_at_nodes(linear_profiles):
    p = linear_profiles(40.0)
    for i in (0, 17, 2000, p.s.size // 2, p.s.size - 1):
        u, du = evaluate(p, p.s[i])
        assert u == p.u[i] and du == p.du[i]


def test_evaluate_at_boundary_satisfies_flux_condition(linear_profiles):
    p = linear_profiles(40.0)
    u, du = evaluate(p, 1.0)
    assert abs(p.eps * du - float(p.instance.e(u))) <= 1e-8


def test_evaluate_interpolates_linear_data_exactly(linear_family):
    s = np.linspace(0, 1, 11)
    s[5] = 0.47
    mesh = Mesh(s, 0.5, 5, 5)
    prof = SolutionProfile(mesh, 2 * s + 1, np.full_like(s, 2.0), 0.05, linear_family.at(20))
    u, du = evaluate(prof, 0.5 * (s[3] + s[4]))
    assert u == pytest.approx(0.5 * ((2 * s[3] + 1) + (2 * s[4] + 1)), abs=1e-15)
    assert du == pytest.approx(2.0, abs=1e-14)


def test_evaluate_out_of_domain(linear_profiles):
    p = linear_profiles(40.0)
    for s in (-1e-9, 1.0 + 1e-12, float("nan")):
        with pytest.raises(OutOfDomainError, match="out of domain"):
            evaluate(p, s)


def test_profile_invariants(linear_profiles):
    for R in (20.0, 100.0):
        p = linear_profiles(R)
        check_profile(p)
        assert np.min(p.u) >= p.instance.theta0 - 1e-8
        assert np.all(np.diff(p.u) >= -1e-8)
        assert abs(p.du[0]) <= 1e-8


@pytest.mark.parametrize("fam", [
    constant_family(reaction=cubic_reaction(), flux=exponential_flux()),
    ramp_family(flux=affine_flux()),
])
def test_boundary_derivative_bracketed_by_flux(fam):
    p = solve(fam.at(80.0))
    flux = p.eps * p.du[-1]
    e = p.instance.e
    assert float(e(np.max(p.u))) - 1e-8 <= flux <= float(e(p.instance.theta0)) + 1e-8
    weighted = p.s ** (p.instance.dimension - 1) * coefficient_samples(p.instance, p.s).alpha * p.du
    assert np.all(np.diff(weighted) >= -1e-8)


def test_local_first_integral_law_is_stable_under_halving():
    fam = constant_family(reaction=cubic_reaction(), flux=exponential_flux())
    consts = []
    for R in (50.0, 100.0, 200.0):
        p = solve(fam.at(R))
        inst = p.instance
        keep = p.s >= inst.k_star
        c = coefficient_samples(inst, p.s[keep])
        dev = np.abs(p.eps * p.du[keep] - np.sqrt(2 * c.ratio * delta_F_array(inst.f, p.u[keep])))
        consts.append(float(np.max(dev)) / math.sqrt(p.eps))
    assert consts[1] <= 1.1 * consts[0] and consts[2] <= 1.1 * consts[1]


def test_full_first_integral_is_discretisation_level(linear_profiles):
    full, truncated = first_integral_residuals(linear_profiles(100.0))
    assert full <= 1e-6
    assert 0 < truncated < 0.05


def test_truncated_first_integral_scales_like_eps(linear_profiles):
    t100 = first_integral_residuals(linear_profiles(100.0))[1]
    t200 = first_integral_residuals(linear_profiles(200.0))[1]
    assert t100 / t200 == pytest.approx(2.0, rel=0.3)


def test_ratio_term_vanishes_for_exact_constant_ratio(linear_profiles):
    assert first_integral_terms(linear_profiles(50.0)).ratio_integral == 0.0


def test_stability_form_examples(linear_profiles):
    p = linear_profiles(50.0)
    R = p.radius
    zero = TestFunction(lambda r: np.zeros_like(r), lambda r: np.zeros_like(r), (1.0, 2.0))
    assert stability_form(p, zero) == 0.0
    xi = bump(3 * R / 8, R / 8)
    q = stability_form(p, xi)
    assert q > 0
    assert stability_form(p, scaled(xi, 2.0)) == pytest.approx(4 * q, rel=1e-12)


def test_stability_form_against_independent_quadrature(linear_profiles):
    p = linear_profiles(50.0)
    R = p.radius
    xi = bump(0.6 * R, 0.2 * R)
    # a = b = 1 and f' = 1: Q = int (xi'^2 + xi^2) r dr, independent of u
    ref = integrate.quad(lambda r: (xi.deriv(r) ** 2 + xi.value(r) ** 2) * r,
                         *xi.support, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    assert stability_form(p, xi) == pytest.approx(ref, rel=1e-9)


def test_stability_form_rejects_support_touching_boundary(linear_profiles):
    p = linear_profiles(50.0)
    for xi in (bump(45.0, 5.0), bump(3.0, 3.0)):
        with pytest.raises(InadmissibleTestFunctionError, match="inadmissible test function"):
            stability_form(p, xi)


def test_large_eps_rejected(linear_family):
    with pytest.raises(ValueError):
        solve(linear_family.at(1.5))


def test_nonconvergence_reports_last_residual(linear_family):
    with pytest.raises(NonConvergenceError, match="nonconvergence") as info:
        solve(linear_family.at(40.0), SolverConfig(max_newton_iters=0))
    assert info.value.last_residual > 0


def test_rejected_solution(linear_profiles):
    p = linear_profiles(40.0)
    bad = replace(p, u=p.u[::-1].copy())
    with pytest.raises(SolutionRejectedError, match="solution rejected"):
        check_profile(bad)


def test_solver_config_invariants():
    with pytest.raises(ValueError):
        SolverConfig(newton_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(damping=1.5)
    with pytest.raises(ValueError):
        SolverConfig(continuation_steps=(0.1, 0.2))


def test_explicit_continuation_steps(linear_family):
    p = solve(linear_family.at(40.0), SolverConfig(continuation_steps=(0.3, 0.1)))
    assert p.continuation[0] == 0.3 and p.continuation[-1] == 1 / 40.0
    assert abs(p.u[-1] - exact_linear_boundary(2, 40.0)[0]) < 1e-6


def test_mesh_invariants():
    m = build_mesh(0.01, 100, 400, 20.0)
    assert m.nodes[0] == 0.0 and m.nodes[-1] == 1.0
    assert np.all(np.diff(m.nodes) > 0)
    assert np.count_nonzero(m.nodes >= 1 - m.layer_width) >= 400
    assert 0 < m.layer_width <= 0.5
    with pytest.raises(ValueError):
        Mesh(np.array([0.0, 0.6, 0.5, 1.0]), 0.5, 1, 1)


def test_profiles_are_read_only(linear_profiles):
    p = linear_profiles(40.0)
    with pytest.raises(ValueError):
        p.u[0] = 1.0
