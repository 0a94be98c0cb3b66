"""Shared fixtures: the criterion-scale runs are expensive enough to compute
once per session and reuse across the acceptance checks.  Each study fixture
returns (study, wall_seconds) so the acceptance module can also check the
runtime budgets."""

import time
from typing import NamedTuple

import numpy as np
import pytest

from wie.diagnostics import ConvergenceStudy, convergence_study
from wie.forcing import linear_forcing, space_profile, time_factor, zero_forcing
from wie.grids import InitialData, SpaceGrid
from wie.minimizer import MinimizeOptions, ProblemTemplate
from wie.oracle import OracleConfig


class TimedStudy(NamedTuple):
    study: ConvergenceStudy
    seconds: float


def bump_data(grid: SpaceGrid) -> InitialData:
    w0 = space_profile("bump")(grid.nodes)
    return InitialData(w0, np.zeros(grid.n_points))


def timed_study(template, eps_list, oracle_cfg, opts) -> TimedStudy:
    start = time.perf_counter()
    study = convergence_study(template, eps_list, oracle_cfg, opts)
    return TimedStudy(study, time.perf_counter() - start)


@pytest.fixture(scope="session")
def ode_template() -> ProblemTemplate:
    grid = SpaceGrid(1.0, 8, boundary="periodic")
    data = InitialData(np.ones(grid.n_points), np.zeros(grid.n_points))
    return ProblemTemplate(r=2.0, initial=data, space=grid,
                           forcing=zero_forcing(), t_phys=2.0 * np.pi,
                           ht_resc=0.1)


@pytest.fixture(scope="session")
def ode_study(ode_template) -> TimedStudy:
    oracle_cfg = OracleConfig(t_phys=ode_template.t_phys, ht_phys=0.05,
                              space=ode_template.space, r=2.0)
    opts = MinimizeOptions(grad_tol=1e-10, max_iters=200)
    return timed_study(ode_template, [0.2, 0.1, 0.05], oracle_cfg, opts)


@pytest.fixture(scope="session")
def pde_grid() -> SpaceGrid:
    return SpaceGrid(3.0, 201)


@pytest.fixture(scope="session")
def bump_r4_study(pde_grid) -> TimedStudy:
    template = ProblemTemplate(r=4.0, initial=bump_data(pde_grid), space=pde_grid,
                               forcing=zero_forcing(), t_phys=1.0, ht_resc=0.1)
    oracle_cfg = OracleConfig(t_phys=1.0, ht_phys=0.02, space=pde_grid, r=4.0)
    opts = MinimizeOptions(grad_tol=1e-9, max_iters=300)
    return timed_study(template, [0.2, 0.1, 0.05], oracle_cfg, opts)


@pytest.fixture(scope="session")
def bump_r4_forced_study(pde_grid) -> TimedStudy:
    forcing = linear_forcing(time_factor("exp_decay", rate=1.0),
                             space_profile("bump"))
    template = ProblemTemplate(r=4.0, initial=bump_data(pde_grid), space=pde_grid,
                               forcing=forcing, t_phys=1.0, ht_resc=0.1)
    oracle_cfg = OracleConfig(t_phys=1.0, ht_phys=0.02, space=pde_grid, r=4.0,
                              forcing=forcing)
    opts = MinimizeOptions(grad_tol=1e-9, max_iters=300)
    return timed_study(template, [0.2, 0.1, 0.05], oracle_cfg, opts)
