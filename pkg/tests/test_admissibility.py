import mpmath as mp
import numpy as np
import pytest

from wie.admissibility import (CUTOFF_SUPPORT, check_hypotheses, sharpness_demo,
                               smooth_cutoff, smooth_cutoff_d1, smooth_cutoff_d2)
from wie.errors import InputError, ParameterError
from wie.forcing import (custom_forcing, linear_forcing, space_profile,
                         time_factor, zero_forcing)
from wie.grids import InitialData, SpaceGrid
from wie.kernels import GrowthEnvelope


@pytest.fixture(scope="module")
def grid():
    return SpaceGrid(3.0, 201)


def catalog_forcings():
    g = space_profile("bump")
    return {
        "constant": linear_forcing(time_factor("constant"), g),
        "exp_decay": linear_forcing(time_factor("exp_decay", rate=1.0), g),
        "polynomial": linear_forcing(time_factor("polynomial", degree=2), g),
        "gaussian_bump": linear_forcing(time_factor("gaussian_bump",
                                                    center=1.0, width=0.5), g),
    }


def test_admissible_catalog_accepted(grid):
    for name, forcing in catalog_forcings().items():
        report = check_hypotheses(forcing, grid)
        assert report.admissible, name
        assert report.c_f_estimate == 0.0  # F(., ., 0) vanishes for linear kinds
        assert report.k_f_estimate is not None and np.isfinite(report.k_f_estimate)


def test_superexponential_rejected(grid):
    forcing = linear_forcing(time_factor("exp_t2"), space_profile("bump"))
    report = check_hypotheses(forcing, grid)
    assert not report.laplace_ok
    assert not report.admissible
    assert report.eps_f_estimate is None
    assert report.k_f_estimate is None


def test_zero_forcing_passes(grid):
    report = check_hypotheses(zero_forcing(), grid)
    assert report.admissible
    assert report.c_f_estimate == 0.0
    assert report.k_f_estimate == pytest.approx(0.0, abs=1e-12)


def test_exponential_rate_threshold(grid):
    # exp(rate) envelopes pass iff the rate stays below 1/(2 eps_F)
    def forced_with_rate(rho):
        return custom_forcing(
            big_f=lambda t, x, v: np.exp(rho * t / 2.0) * 0.0 * x + 0.0 * v,
            g=lambda t, x, v: np.zeros(np.broadcast(t, x, v).shape),
            f=lambda t, x: np.exp(rho * t / 2.0) * np.ones(np.broadcast(t, x).shape),
            envelope=GrowthEnvelope("exponential", rho))

    eps_f = 0.25  # kernel rate 1/(2 eps_f) = 2
    ok = check_hypotheses(forced_with_rate(1.0), grid, eps_f_candidate=eps_f)
    bad = check_hypotheses(forced_with_rate(3.0), grid, eps_f_candidate=eps_f)
    assert ok.laplace_ok
    assert not bad.laplace_ok
    # the heuristic threshold honours eps_f < 1/(2 rho)
    assert bad.eps_f_estimate is not None
    assert bad.eps_f_estimate < 1.0 / (2.0 * 3.0) + 0.05


def test_candidate_validation(grid):
    with pytest.raises(ParameterError):
        check_hypotheses(zero_forcing(), grid, eps_f_candidate=0.7)


def test_smooth_cutoff_shape():
    t = np.linspace(0.0, CUTOFF_SUPPORT + 1.0, 20001)
    z = smooth_cutoff(t)
    assert np.all(z[t <= 1.0] == 1.0)
    assert np.all(z[t >= CUTOFF_SUPPORT] == 0.0)
    assert np.all(np.diff(z) <= 1e-15)  # decreasing
    assert np.all((0.0 <= z) & (z <= 1.0))
    # derivative budget from the construction
    bound = np.abs(smooth_cutoff_d1(t)) + np.abs(smooth_cutoff_d2(t))
    assert np.max(bound) <= 1.0
    # sampled finite differences agree with the analytic derivatives
    h = t[1] - t[0]
    fd1 = np.gradient(z, h)
    assert np.max(np.abs(fd1 - smooth_cutoff_d1(t))) < 1e-5


def test_sharpness_preconditions(grid):
    w0 = space_profile("bump")(grid.nodes)
    eta = time_factor("exp_t2")
    g = space_profile("bump")
    with pytest.raises(InputError):
        sharpness_demo(eta, g, InitialData(-w0, np.zeros_like(w0)), grid,
                       eps=0.2, r=4.0, n_max=2)
    with pytest.raises(InputError):
        sharpness_demo(eta, g, InitialData(w0, -w0), grid, eps=0.2, r=4.0, n_max=2)
    with pytest.raises(InputError):
        sharpness_demo(eta, lambda x: -np.ones_like(x),
                       InitialData(w0, np.zeros_like(w0)), grid,
                       eps=0.2, r=4.0, n_max=2)


def test_sharpness_zero_eta_converges(grid):
    # no forcing divergence: values settle at the finite cutoff-free limit
    w0 = space_profile("bump")(grid.nodes)
    data = InitialData(w0, np.zeros_like(w0))
    eta = time_factor("constant", value=0.0)
    result = sharpness_demo(eta, space_profile("bump"), data, grid,
                            eps=0.2, r=4.0, n_max=10)
    vals = [float(v) for v in result.values]
    assert abs(vals[-1] - vals[-2]) < 1e-12 * (1.0 + abs(vals[-1]))
    assert np.isfinite(vals[-1])


def test_sharpness_divergence(grid):
    w0 = space_profile("bump")(grid.nodes)
    data = InitialData(w0, np.zeros_like(w0))
    result = sharpness_demo(time_factor("exp_t2"), space_profile("bump"), data,
                            grid, eps=0.2, r=4.0, n_max=12)
    assert result.c0 > 0.0
    assert result.eventually_strictly_decreasing()
    n_hit = result.first_below(-1e6)
    assert n_hit is not None and n_hit <= 12
    # the forcing integral is non-decreasing in n (monotone convergence)
    logs = [row.forcing_log for row in result.rows]
    assert all(b >= a - 1e-12 for a, b in zip(logs, logs[1:]))
    # the inertia term stays bounded (in fact vanishes)
    inertias = [row.inertia for row in result.rows]
    assert max(inertias) < 1.0
    assert inertias[-1] < inertias[0]


def test_sharpness_values_are_exactly_ordered(grid):
    # mpf values stay comparable far beyond double range
    w0 = space_profile("bump")(grid.nodes)
    data = InitialData(w0, np.zeros_like(w0))
    result = sharpness_demo(time_factor("exp_t2"), space_profile("bump"), data,
                            grid, eps=0.2, r=4.0, n_max=9)
    tail = result.values[-3:]
    assert tail[0] > tail[1] > tail[2]
    assert tail[2] < mp.mpf(-10) ** 1000


def test_k_f_closed_form(grid):
    # f(t, x) = e^-t g(x): the t-integral has the closed form 1/(2 + 1/(2 eps_f))
    from wie.grids import trapezoid_space

    eps_f = 0.45
    forcing = linear_forcing(time_factor("exp_decay", rate=1.0),
                             space_profile("gaussian"))
    report = check_hypotheses(forcing, grid, eps_f_candidate=eps_f)
    g_sq = float(trapezoid_space(space_profile("gaussian")(grid.nodes) ** 2, grid))
    exact = g_sq / (eps_f * (2.0 + 1.0 / (2.0 * eps_f)))
    assert report.k_f_estimate == pytest.approx(exact, rel=1e-8)
    assert report.admissible
