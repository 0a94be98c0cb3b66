import numpy as np
import pytest

from wie.diagnostics import (approximate_energy, approximate_energy_series,
                             check_approx_energy_bound, check_elementary_estimates,
                             check_energy_inequality, check_test_function_estimates,
                             convergence_study, energy_report,
                             forward_potential_average, q_constant,
                             space_time_l2, weighted_potential_moment)
from wie.errors import InputError, ParameterError, RangeError
from wie.forcing import linear_forcing, space_profile, time_factor, zero_forcing
from wie.functional import WieProblem, potential_w
from wie.grids import (InitialData, SpaceGrid, SpaceTimeField,
                       physical_time_grid, rescaled_time_grid, trapezoid_space)
from wie.minimizer import MinimizeOptions, ProblemTemplate, minimize, rescale
from wie.oracle import OracleConfig


def smoke_problem(forcing=None, eps=0.2, nx=31, ht=0.1):
    grid = SpaceGrid(3.0, nx)
    tgrid = rescaled_time_grid(26.0, ht)
    w0 = space_profile("bump")(grid.nodes)
    data = InitialData(w0, np.zeros(nx))
    return WieProblem(eps=eps, r=4.0, initial=data, space=grid, time=tgrid,
                      forcing=forcing)


@pytest.fixture(scope="module")
def smoke_minimizer():
    prob = smoke_problem()
    res = minimize(prob, MinimizeOptions(grad_tol=1e-10, max_iters=200))
    assert res.converged
    return prob, res


def test_approximate_energy_zero_field():
    prob = smoke_problem()
    prob.initial = InitialData(np.zeros(31), np.zeros(31))
    u = SpaceTimeField(np.zeros((prob.time.n_steps, 31)), prob.space, prob.time)
    assert approximate_energy(u, prob, 0) == 0.0


def test_approximate_energy_initial_identity(smoke_minimizer):
    # at t = 0 the kinetic part reduces to ||w1||^2 / 2 (velocity constraint),
    # so E(0) = ||w1||^2 / 2 + integral of s e^-s W(u(s))
    prob, res = smoke_minimizer
    e0 = approximate_energy(res.u_eps, prob, 0)
    moment = weighted_potential_moment(res.u_eps, prob)
    w1_sq = float(trapezoid_space(prob.initial.w1**2, prob.space))
    assert e0 == pytest.approx(0.5 * w1_sq + moment, rel=1e-2, abs=1e-4)


def test_approximate_energy_lower_bound(smoke_minimizer):
    prob, res = smoke_minimizer
    nodes = np.arange(0, 100, 10)
    series = approximate_energy_series(res.u_eps, prob, nodes)
    lower = forward_potential_average(res.u_eps, prob, nodes)
    assert np.all(lower <= series + 1e-12)


def test_approximate_energy_tail_guard(smoke_minimizer):
    prob, res = smoke_minimizer
    with pytest.raises(RangeError):
        approximate_energy(res.u_eps, prob, prob.time.n_steps - 1)
    with pytest.raises(RangeError):
        approximate_energy(res.u_eps, prob, -3)


def test_approx_energy_bound_zero_data():
    # feasible zero field: both sides collapse to Q = 0
    prob = smoke_problem()
    prob.initial = InitialData(np.zeros(31), np.zeros(31))
    u = SpaceTimeField(np.zeros((prob.time.n_steps, 31)), prob.space, prob.time)
    check = check_approx_energy_bound(u, prob)
    assert check.q_const == 0.0
    assert np.all(check.margins == check.q_const)
    assert check.ok_upper and check.ok_lower


def test_approx_energy_bound_unforced(smoke_minimizer):
    # with no forcing the bound reduces to E(t) <= Q
    prob, res = smoke_minimizer
    check = check_approx_energy_bound(res.u_eps, prob)
    assert check.ok_upper and check.ok_lower
    assert np.all(check.upper_bound == check.q_const)
    # Q carries the explicit safety factor over the measured moment
    assert check.q_const == pytest.approx(
        2.0 * weighted_potential_moment(res.u_eps, prob), rel=1e-12)


def test_approx_energy_bound_forced():
    forcing = linear_forcing(time_factor("exp_decay", rate=1.0),
                             space_profile("bump"))
    prob = smoke_problem(forcing=forcing)
    res = minimize(prob, MinimizeOptions(grad_tol=1e-10, max_iters=200))
    check = check_approx_energy_bound(res.u_eps, prob)
    assert check.ok_upper and check.ok_lower
    # the kernel-average term is active
    assert check.upper_bound[-1] > check.q_const


def test_energy_inequality_zero_trajectory():
    grid = SpaceGrid(2.0, 41)
    pg = physical_time_grid(1.0, 0.02)
    w = SpaceTimeField(np.zeros((pg.n_steps, 41)), grid, pg)
    forcing = linear_forcing(time_factor("exp_decay", rate=1.0),
                             space_profile("bump"))
    check = check_energy_inequality(w, forcing, 4.0)
    assert np.all(check.margins >= 0.0)
    assert check.ok


def test_energy_inequality_unforced_decay(smoke_minimizer):
    prob, res = smoke_minimizer
    pg = physical_time_grid(1.0, 0.02)
    w = rescale(res.u_eps, prob.eps, pg)
    check = check_energy_inequality(w, zero_forcing(), prob.r)
    assert check.min_margin >= -check.tol
    assert check.fraction_ok == 1.0


def test_elementary_estimates_on_smooth_field():
    # analytic field in the admissible class, 5% slack at ht = 0.05
    grid = SpaceGrid(3.0, 31)
    tgrid = rescaled_time_grid(26.0, 0.05)
    g = space_profile("gaussian")(grid.nodes)
    t = tgrid.nodes[:, None]
    vals = (1.0 + 0.5 * np.sin(0.8 * t)) * g[None, :]
    u = SpaceTimeField(vals, grid, tgrid)
    data = InitialData(vals[0], (vals[1] - vals[0]) / (tgrid.spacing * 0.2))
    prob = WieProblem(eps=0.2, r=4.0, initial=data, space=grid, time=tgrid)
    check = check_elementary_estimates(u, prob, slack=0.05)
    assert check.ok


def test_elementary_estimates_on_minimizer(smoke_minimizer):
    prob, res = smoke_minimizer
    assert check_elementary_estimates(res.u_eps, prob, slack=0.05).ok


def test_weighted_estimates_zero_test_function(smoke_minimizer):
    prob, res = smoke_minimizer
    phi = np.zeros(prob.time.n_steps)
    check = check_test_function_estimates(res.u_eps, prob, phi)
    assert check.lhs == (0.0, 0.0, 0.0)
    assert check.rhs == (0.0, 0.0, 0.0)
    assert check.ok


def test_weighted_estimates_zero_field():
    forcing = linear_forcing(time_factor("exp_decay", rate=1.0),
                             space_profile("bump"))
    prob = smoke_problem(forcing=forcing)
    prob.initial = InitialData(np.zeros(31), np.zeros(31))
    u = SpaceTimeField(np.zeros((prob.time.n_steps, 31)), prob.space, prob.time)
    t = prob.time.nodes
    phi = np.where((t > 1.0) & (t < 2.0), np.sin(np.pi * (t - 1.0)) ** 2, 0.0)
    check = check_test_function_estimates(u, prob, phi)
    assert check.lhs[0] == 0.0 and check.lhs[1] == 0.0
    assert check.ok


def test_weighted_estimates_on_minimizer():
    forcing = linear_forcing(time_factor("exp_decay", rate=1.0),
                             space_profile("bump"))
    prob = smoke_problem(forcing=forcing)
    res = minimize(prob, MinimizeOptions(grad_tol=1e-10, max_iters=200))
    t = prob.time.nodes
    phi = np.where((t > 1.0) & (t < 2.0), np.sin(np.pi * (t - 1.0)) ** 2, 0.0)
    check = check_test_function_estimates(res.u_eps, prob, phi)
    assert check.ok
    assert all(m > 0 for m in check.margins)


def test_weighted_estimates_support_validation(smoke_minimizer):
    prob, res = smoke_minimizer
    phi = np.ones(prob.time.n_steps)
    with pytest.raises(InputError):
        check_test_function_estimates(res.u_eps, prob, phi)


def test_q_constant_components(smoke_minimizer):
    prob, res = smoke_minimizer
    q = q_constant(res.u_eps, prob, safety=2.0)
    manual = 0.5 * float(trapezoid_space(prob.initial.w1**2, prob.space)) \
        + 2.0 * weighted_potential_moment(res.u_eps, prob)
    assert q == pytest.approx(manual, rel=1e-12)


def test_energy_report_flags(smoke_minimizer):
    prob, res = smoke_minimizer
    w = rescale(res.u_eps, prob.eps, physical_time_grid(1.0, 0.02))
    report = energy_report(res.u_eps, prob, w)
    assert report.flags["approx_energy_bound_ok"]
    assert report.flags["energy_inequality_ok"]
    assert report.flags["elementary_estimates_ok"]
    rows = list(report.rows())
    assert len(rows) == report.times.size
    assert set(rows[0]) == {"t", "K_eps", "W", "E_eps", "margin_bound", "margin_energy"}
    # inside the physical window the sampled margin is finite
    inside = prob.eps * report.times <= report.inequality_times[-1]
    assert np.all(np.isfinite(report.energy_margin[inside]))


def test_convergence_study_zero_case():
    grid = SpaceGrid(2.0, 21)
    data = InitialData(np.zeros(21), np.zeros(21))
    template = ProblemTemplate(r=4.0, initial=data, space=grid, t_phys=0.5,
                               ht_resc=0.2)
    oracle_cfg = OracleConfig(t_phys=0.5, ht_phys=0.02, space=grid, r=4.0)
    study = convergence_study(template, [0.2, 0.1], oracle_cfg)
    assert all(row.l2_error == 0.0 for row in study.rows)
    assert all(row.sup_error == 0.0 for row in study.rows)


def test_convergence_study_eps_order_guard():
    grid = SpaceGrid(2.0, 21)
    data = InitialData(np.zeros(21), np.zeros(21))
    template = ProblemTemplate(r=4.0, initial=data, space=grid, t_phys=0.5)
    oracle_cfg = OracleConfig(t_phys=0.5, ht_phys=0.02, space=grid, r=4.0)
    with pytest.raises(ParameterError):
        convergence_study(template, [0.1, 0.2], oracle_cfg)


def test_space_time_l2_simple():
    grid = SpaceGrid(1.0, 41)
    pg = physical_time_grid(1.0, 0.1)
    ones = SpaceTimeField(np.ones((pg.n_steps, 41)), grid, pg)
    # ||1||_{L2((0,1) x (-1,1))} = sqrt(2)
    assert space_time_l2(ones, np.zeros_like(ones.values)) == pytest.approx(
        np.sqrt(2.0), rel=1e-12)


def test_ode_error_trend(ode_study):
    # successive L2-error ratios sit in the O(eps)-trend band [0.3, 0.8]
    errs = ode_study.study.errors
    ratios = errs[1:] / errs[:-1]
    assert np.all((0.3 <= ratios) & (ratios <= 0.8))


def test_rescaled_approximate_energy_limit_surrogate(bump_r4_study):
    # at the smallest swept eps, sqrt(E(t/eps)) is already within 5% of the
    # limiting bound sqrt(||w1||^2/2 + W(w0)) + sqrt(t/2 int ||f||^2) (no
    # forcing here, so the second term drops)
    study = bump_r4_study.study
    prob = study.problems[-1]
    res = study.rows[-1].result
    assert study.rows[-1].eps == 0.05
    w_w0 = potential_w(prob.initial.w0, prob.r, prob.space, prob.power_reg)
    w1_sq = float(trapezoid_space(prob.initial.w1**2, prob.space))
    limit = np.sqrt(0.5 * w1_sq + w_w0)
    ht = prob.time.spacing
    for t_phys in (0.25, 0.5, 0.75, 1.0):
        node = int(round(t_phys / prob.eps / ht))
        e_val = approximate_energy(res.u_eps, prob, node)
        assert np.sqrt(e_val) <= 1.05 * limit
