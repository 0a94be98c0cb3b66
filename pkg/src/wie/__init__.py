"""Variational approximation of semilinear defocusing wave equations by
minimization of exponentially weighted inertia-energy functionals."""

from .admissibility import (AdmissibilityReport, SharpnessResult, check_hypotheses,
                            sharpness_demo, smooth_cutoff)
from .diagnostics import (ApproxEnergyBoundCheck, EnergyInequalityCheck, EnergyReport,
                          approximate_energy, check_approx_energy_bound,
                          check_elementary_estimates, check_energy_inequality,
                          check_test_function_estimates, convergence_study, energy_report)
from .errors import WieError
from .forcing import (Forcing, custom_forcing, linear_forcing, phi_eps,
                      separable_forcing, sine_gordon_psi, space_profile,
                      time_factor, zero_forcing)
from .functional import (WieProblem, basic_energy_bound, evaluate_f_original,
                         evaluate_j, gradient_j, pairing_dw, potential_w,
                         weighted_energy)
from .grids import (InitialData, SpaceGrid, SpaceTimeField, TimeGrid,
                    discrete_derivatives, physical_time_grid, rescaled_time_grid,
                    trapezoid_space, weighted_time_integral)
from .kernels import (GrowthEnvelope, KernelParams, k_star, kernel_n, m_f,
                      mollify, q_eps)
from .minimizer import (MinimizeOptions, MinimizeResult, ProblemTemplate,
                        affine_seed, minimize, rescale)
from .oracle import OracleConfig, leapfrog_solve, solution_energy

__version__ = "0.1.0"
