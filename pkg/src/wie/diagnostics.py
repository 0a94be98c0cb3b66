"""Energy quantities and inequality checks evaluated on computed minimizers.

Every constant used on a right-hand side (the a-priori bound, the uniform
kernel bound, the moment constants) is assembled at runtime from its defining
chain and reported next to the margins; inequality checks carry a relative
slack (default 2%) because the statements hold for exact minimizers of the
continuous problem while we test discrete ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InputError, ParameterError, RangeError
from .forcing import Forcing
from .functional import WieProblem, potential_w
from .grids import (SpaceTimeField, space_derivative_matrix,
                    time_derivative_matrix, time_second_derivative_matrix,
                    trapezoid_space, trapezoid_weights)
from .minimizer import (MinimizeOptions, MinimizeResult, ProblemTemplate,
                        minimize, rescale)
from .oracle import OracleConfig, leapfrog_solve, solution_energy

DEFAULT_SLACK = 0.02


def _tail_margin(tail_frac: float) -> float:
    """Smallest x with (1 + x) exp(-x) <= tail_frac (bisection)."""
    lo, hi = 1.0, 60.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if (1.0 + mid) * math.exp(-mid) <= tail_frac:
            hi = mid
        else:
            lo = mid
    return hi


def kinetic_series(u: SpaceTimeField, eps: float) -> np.ndarray:
    """K(t) = (1/(2 eps^2)) || u_t(t) ||^2 on all time nodes."""
    ut = time_derivative_matrix(u.time) @ u.values
    return (0.5 / eps**2) * trapezoid_space(ut**2, u.space)


def potential_series(u: SpaceTimeField, prob: WieProblem) -> np.ndarray:
    return potential_w(u.values, prob.r, prob.space, prob.power_reg)


def approximate_energy(u: SpaceTimeField, prob: WieProblem, node: int,
                       tail_frac: float = DEFAULT_SLACK) -> float:
    """Kinetic term plus the forward-weighted average of the potential,
    integral over [t, T] of (s - t) exp(-(s - t)) W(u(s)) ds."""
    return float(approximate_energy_series(u, prob, np.array([node]), tail_frac)[0])


def approximate_energy_series(u: SpaceTimeField, prob: WieProblem,
                              nodes: np.ndarray | None = None,
                              tail_frac: float = DEFAULT_SLACK) -> np.ndarray:
    t = u.time.nodes
    horizon = u.time.horizon
    margin = _tail_margin(tail_frac)
    if nodes is None:
        nodes = np.arange(np.searchsorted(t, horizon - margin, side="right"))
    nodes = np.asarray(nodes, dtype=int)
    if np.any(nodes < 0) or np.any(nodes >= t.size):
        raise RangeError("node index outside the time grid")
    if np.any(horizon - t[nodes] < margin):
        raise RangeError(
            f"neglected tail of the forward average exceeds {tail_frac:.1%}: "
            f"keep t below T - {margin:.1f}"
        )
    kin = kinetic_series(u, prob.eps)
    w_ser = potential_series(u, prob)
    ht = u.time.spacing
    out = np.empty(nodes.size)
    for idx, j in enumerate(nodes):
        s = t[j:] - t[j]
        wts = trapezoid_weights(s.size, ht)
        out[idx] = kin[j] + float(wts @ (s * np.exp(-s) * w_ser[j:]))
    return out


def forward_potential_average(u: SpaceTimeField, prob: WieProblem,
                              nodes: np.ndarray) -> np.ndarray:
    """The forward-average term alone (lower bound of the two-sided estimate)."""
    w_ser = potential_series(u, prob)
    t = u.time.nodes
    ht = u.time.spacing
    out = np.empty(len(nodes))
    for idx, j in enumerate(np.asarray(nodes, dtype=int)):
        s = t[j:] - t[j]
        wts = trapezoid_weights(s.size, ht)
        out[idx] = float(wts @ (s * np.exp(-s) * w_ser[j:]))
    return out


# ---------------------------------------------------------------------------
# constants assembled from their defining chains


def q_constant(u: SpaceTimeField, prob: WieProblem, safety: float = 2.0) -> float:
    """Q = 1/2 ||w1||^2 + B with B realized numerically as the weighted
    potential integral of the minimizer times a safety factor."""
    w1_sq = float(trapezoid_space(prob.initial.w1**2, prob.space))
    t = u.time.nodes
    wts = trapezoid_weights(t.size, u.time.spacing)
    b_bar = safety * float(wts @ (t * np.exp(-t) * potential_series(u, prob)))
    return 0.5 * w1_sq + b_bar


def weighted_potential_moment(u: SpaceTimeField, prob: WieProblem) -> float:
    """Integral of s exp(-s) W(u(s)) ds over the grid."""
    t = u.time.nodes
    wts = trapezoid_weights(t.size, u.time.spacing)
    return float(wts @ (t * np.exp(-t) * potential_series(u, prob)))


def _q_eps_cumulative(prob: WieProblem, s_max: float, n_mesh: int = 65):
    """Cumulative integral of the kernel average of the forcing norm on
    [0, s_max]; returns an interpolant evaluable at eps * t."""
    if prob.forcing.kind == "zero" or s_max <= 0.0:
        return lambda s: np.zeros_like(np.asarray(s, dtype=float))
    f_sq = prob.forcing.f_norm_sq(prob.space)
    mesh = np.linspace(0.0, s_max, n_mesh)
    q_vals = np.array([kernels.q_eps(f_sq, prob.eps, float(s),
                                     envelope=prob.forcing.envelope,
                                     eps_f=prob.eps_f) for s in mesh])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (q_vals[1:] + q_vals[:-1]) * np.diff(mesh))])
    return lambda s: np.interp(np.asarray(s, dtype=float), mesh, cum)


@dataclass
class ApproxEnergyBoundCheck:
    times: np.ndarray
    approx_energy: np.ndarray
    lower_bound: np.ndarray  # forward potential average (left inequality)
    upper_bound: np.ndarray  # Q + (28 + 4 eps t) * cumulative kernel average
    q_const: float
    margins: np.ndarray  # upper_bound - approx_energy
    tol: float
    ok_upper: bool
    ok_lower: bool


def check_approx_energy_bound(u: SpaceTimeField, prob: WieProblem,
                         nodes: np.ndarray | None = None,
                         slack: float = DEFAULT_SLACK) -> ApproxEnergyBoundCheck:
    """Two-sided control of the approximate energy along the trajectory."""
    t = u.time.nodes
    margin = _tail_margin(slack)
    if nodes is None:
        nodes = np.arange(np.searchsorted(t, u.time.horizon - margin, side="right"))
    nodes = np.asarray(nodes, dtype=int)
    if nodes.size == 0:
        raise RangeError("no admissible nodes before the horizon tail margin; "
                         "enlarge the grid horizon")
    e_eps = approximate_energy_series(u, prob, nodes, tail_frac=slack)
    lower = forward_potential_average(u, prob, nodes)
    q_c = q_constant(u, prob)
    ts = t[nodes]
    cum = _q_eps_cumulative(prob, float(prob.eps * ts[-1]) if ts.size else 0.0)
    upper = q_c + (28.0 + 4.0 * prob.eps * ts) * cum(prob.eps * ts)
    margins = upper - e_eps
    tol = max(1e-6, slack * float(np.max(np.abs(e_eps))))
    return ApproxEnergyBoundCheck(
        times=ts, approx_energy=e_eps, lower_bound=lower, upper_bound=upper,
        q_const=q_c, margins=margins, tol=tol,
        ok_upper=bool(np.all(margins >= -tol)),
        ok_lower=bool(np.all(lower <= e_eps + 1e-12 * (1.0 + np.abs(e_eps)))),
    )


@dataclass
class EnergyInequalityCheck:
    times: np.ndarray
    energy: np.ndarray
    rhs: np.ndarray
    margins: np.ndarray
    tol: float
    min_margin: float
    fraction_ok: float
    ok: bool


def check_energy_inequality(w: SpaceTimeField, forcing: Forcing, r: float,
                            rel_tol: float = DEFAULT_SLACK,
                            power_reg: float = 0.0) -> EnergyInequalityCheck:
    """sqrt(E(t)) <= sqrt(E(0)) + sqrt((t/2) * integral of ||f||^2), with E the
    physical energy of the rescaled trajectory; the tolerance is rel_tol * E(0)."""
    if w.time.weighted:
        raise ParameterError("energy inequality is checked on a physical-time trajectory")
    energy = solution_energy(w, r, power_reg)
    t = w.time.nodes
    f_sq = forcing.f_norm_sq(w.space)(t)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f_sq[1:] + f_sq[:-1]) * np.diff(t))])
    rhs = np.sqrt(energy[0]) + np.sqrt(0.5 * t * cum)
    margins = rhs - np.sqrt(np.maximum(energy, 0.0))
    tol = rel_tol * float(energy[0]) if energy[0] > 0 else 1e-9
    return EnergyInequalityCheck(
        times=t, energy=energy, rhs=rhs, margins=margins, tol=tol,
        min_margin=float(np.min(margins)),
        fraction_ok=float(np.mean(margins >= -tol)),
        ok=bool(np.all(margins >= -tol)),
    )


@dataclass
class ElementaryEstimatesCheck:
    """Discrete forms of the weighted integration-by-parts estimates."""

    lhs_u: float
    rhs_u: float
    lhs_ut: float
    rhs_ut: float
    lhs_data_ut: float
    rhs_data_ut: float
    lhs_data_u: float
    rhs_data_u: float
    slack: float
    ok: bool


def check_elementary_estimates(u: SpaceTimeField, prob: WieProblem,
                               slack: float = 0.05) -> ElementaryEstimatesCheck:
    ut = time_derivative_matrix(u.time) @ u.values
    utt = time_second_derivative_matrix(u.time) @ u.values
    om = u.time.weights

    def wint(series2d):
        return float(om @ trapezoid_space(series2d**2, u.space))

    int_u = wint(u.values)
    int_ut = wint(ut)
    int_utt = wint(utt)
    n_u0 = float(trapezoid_space(u.values[0] ** 2, u.space))
    n_ut0 = float(trapezoid_space(ut[0] ** 2, u.space))
    n_w0 = float(trapezoid_space(prob.initial.w0**2, u.space))
    n_w1 = float(trapezoid_space(prob.initial.w1**2, u.space))
    rhs_u = 2.0 * n_u0 + 4.0 * int_ut
    rhs_ut = 2.0 * n_ut0 + 4.0 * int_utt
    rhs_data_ut = 2.0 * n_w1 + 4.0 * int_utt
    rhs_data_u = 2.0 * n_w0 + 8.0 * n_w1 + 16.0 * int_utt
    grow = 1.0 + slack
    ok = (int_u <= grow * rhs_u and int_ut <= grow * rhs_ut
          and int_ut <= grow * rhs_data_ut and int_u <= grow * rhs_data_u)
    return ElementaryEstimatesCheck(
        lhs_u=int_u, rhs_u=rhs_u, lhs_ut=int_ut, rhs_ut=rhs_ut,
        lhs_data_ut=int_ut, rhs_data_ut=rhs_data_ut,
        lhs_data_u=int_u, rhs_data_u=rhs_data_u, slack=slack, ok=ok,
    )


@dataclass
class TestFunctionEstimatesCheck:
    """The three weighted-norm estimates driven by a compactly supported test
    function and its doubly integrated lift."""

    lhs: tuple[float, float, float]
    rhs: tuple[float, float, float]
    margins: tuple[float, float, float]
    ok: bool


def check_test_function_estimates(u: SpaceTimeField, prob: WieProblem,
                           phi: np.ndarray) -> TestFunctionEstimatesCheck:
    t = u.time.nodes
    phi = np.asarray(phi, dtype=float)
    if phi.shape != t.shape:
        raise InputError("phi must be sampled on the time grid")
    if phi[0] != 0.0 or phi[-1] != 0.0:
        raise InputError("phi must be supported strictly inside (0, T)")
    ht = u.time.spacing
    trap = trapezoid_weights(t.size, ht)
    # xi(t) = integral over [0, t] of (t - s) e^s phi(s) ds
    lift = np.maximum(t[:, None] - t[None, :], 0.0)
    xi = lift @ (trap * np.exp(t) * phi)

    dx = space_derivative_matrix(prob.space)
    grad_norm = np.sqrt(trapezoid_space((u.values @ dx.T) ** 2, prob.space))
    power_int = trapezoid_space(np.abs(u.values) ** prob.r, prob.space)
    f_sq = prob.forcing.f_norm_sq(prob.space)(prob.eps * t)

    lhs1 = float(trap @ (np.abs(xi) * np.exp(-t) * grad_norm))
    lhs2 = float(trap @ (np.abs(xi) * np.exp(-t) * power_int ** ((prob.r - 1.0) / prob.r)))
    lhs3 = float(trap @ (np.abs(xi) * np.exp(-t) * np.sqrt(f_sq)))

    q_bar = q_constant(u, prob) + 1.0
    cum = _q_eps_cumulative(prob, float(prob.eps * t[-1]))
    envelope_term = q_bar + (28.0 + 4.0 * prob.eps * t) * cum(prob.eps * t)
    rhs12_base = float(trap @ (envelope_term * np.abs(phi)))
    rhs1 = 2.0 * rhs12_base
    rhs2 = prob.r * rhs12_base
    if prob.forcing.kind == "zero":
        q_at = np.zeros_like(t)
    else:
        f_fn = prob.forcing.f_norm_sq(prob.space)
        support = np.abs(phi) > 0
        q_at = np.zeros_like(t)
        q_at[support] = [kernels.q_eps(f_fn, prob.eps, float(prob.eps * tv),
                                       envelope=prob.forcing.envelope,
                                       eps_f=prob.eps_f)
                         for tv in t[support]]
    rhs3 = float(trap @ (np.abs(phi) * np.sqrt(q_at)))
    lhs = (lhs1, lhs2, lhs3)
    rhs = (rhs1, rhs2, rhs3)
    margins = tuple(b - a for a, b in zip(lhs, rhs))
    return TestFunctionEstimatesCheck(lhs=lhs, rhs=rhs, margins=margins,
                                      ok=all(m >= -1e-9 for m in margins))


# ---------------------------------------------------------------------------
# energy report and convergence study


@dataclass
class EnergyReport:
    times: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    approx_energy: np.ndarray
    bound_margin: np.ndarray
    energy_margin: np.ndarray  # inequality margin at physical time eps * t
    inequality_margin: np.ndarray  # on the rescaled physical trajectory
    inequality_times: np.ndarray
    flags: dict

    def rows(self):
        for k in range(self.times.size):
            yield {
                "t": float(self.times[k]),
                "K_eps": float(self.kinetic[k]),
                "W": float(self.potential[k]),
                "E_eps": float(self.approx_energy[k]),
                "margin_bound": float(self.bound_margin[k]),
                "margin_energy": float(self.energy_margin[k]),
            }


def energy_report(u: SpaceTimeField, prob: WieProblem, w_phys: SpaceTimeField,
                  slack: float = DEFAULT_SLACK) -> EnergyReport:
    bound = check_approx_energy_bound(u, prob, slack=slack)
    ineq = check_energy_inequality(w_phys, prob.forcing, prob.r,
                                   rel_tol=slack, power_reg=prob.power_reg)
    kin = kinetic_series(u, prob.eps)
    pot = potential_series(u, prob)
    nodes = np.searchsorted(u.time.nodes, bound.times)
    elem = check_elementary_estimates(u, prob)
    # physical-time margin sampled at the rescaled nodes that fall inside the
    # physical window; NaN marks nodes beyond it
    phys_t = prob.eps * bound.times
    energy_margin = np.where(
        phys_t <= ineq.times[-1] * (1.0 + 1e-12),
        np.interp(phys_t, ineq.times, ineq.margins),
        np.nan)
    return EnergyReport(
        times=bound.times,
        kinetic=kin[nodes],
        potential=pot[nodes],
        approx_energy=bound.approx_energy,
        bound_margin=bound.margins,
        energy_margin=energy_margin,
        inequality_margin=ineq.margins,
        inequality_times=ineq.times,
        flags={
            "approx_energy_bound_ok": bound.ok_upper and bound.ok_lower,
            "energy_inequality_ok": ineq.ok,
            "elementary_estimates_ok": elem.ok,
            "q_const": bound.q_const,
            "tol_bound": bound.tol,
            "tol_energy": ineq.tol,
            "min_margin_energy": ineq.min_margin,
        },
    )


@dataclass
class ConvergenceRow:
    eps: float
    l2_error: float
    sup_error: float
    result: MinimizeResult = field(repr=False)

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "l2_error": self.l2_error,
            "sup_error": self.sup_error,
            "j_value": self.result.j_value,
            "grad_norm": self.result.grad_norm,
            "iterations": self.result.iterations,
            "converged": self.result.converged,
            "weighted_energy": self.result.weighted_energy,
            "energy_bound": self.result.energy_bound,
        }


@dataclass
class ConvergenceStudy:
    rows: list[ConvergenceRow]
    oracle: SpaceTimeField
    rescaled: list[SpaceTimeField] = field(repr=False, default_factory=list)
    problems: list[WieProblem] = field(repr=False, default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return np.array([row.l2_error for row in self.rows])

    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.errors) < 0.0))


def space_time_l2(a: SpaceTimeField, b_vals: np.ndarray) -> float:
    """Discrete L2((0,T) x Omega) distance between a field and sampled values."""
    diff = a.values - b_vals
    trap = trapezoid_weights(a.time.n_steps, a.time.spacing)
    return float(np.sqrt(trap @ trapezoid_space(diff**2, a.space)))


def convergence_study(template: ProblemTemplate, eps_list: list[float],
                      oracle_cfg: OracleConfig,
                      opts: MinimizeOptions | None = None) -> ConvergenceStudy:
    """Minimize at each eps, rescale to physical time and compare with the
    explicit-stepping oracle in the space-time L2 norm and the sup norm."""
    eps_arr = np.asarray(eps_list, dtype=float)
    if np.any(np.diff(eps_arr) >= 0):
        raise ParameterError("eps_list must be strictly decreasing")
    truth = leapfrog_solve(oracle_cfg, template.initial)
    study = ConvergenceStudy(rows=[], oracle=truth)
    for eps in eps_arr:
        prob = template.problem(float(eps))
        res = minimize(prob, opts)
        w_eps = rescale(res.u_eps, float(eps), truth.time)
        l2 = space_time_l2(w_eps, truth.values)
        sup = float(np.max(np.abs(w_eps.values - truth.values)))
        study.rows.append(ConvergenceRow(eps=float(eps), l2_error=l2,
                                         sup_error=sup, result=res))
        study.rescaled.append(w_eps)
        study.problems.append(prob)
    return study
