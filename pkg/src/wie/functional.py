"""Discrete rescaled functional, its exact gradient, and the a-priori bound.

The decision variable is the grid field u[j, i].  The functional combines an
inertia term (1/(2 eps^2)) ||u_tt||^2, the potential
W(v) = 1/2 ||v_x||^2 + (1/r) ||v||_r^r evaluated per time slice, and the
forcing coupling, all under the exp(-t)-weighted time quadrature.  The
gradient is assembled by transposing the same quadrature and stencil
operators, so it is the exact derivative of the discrete value, not a
discretization of the continuous optimality condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import ConstraintError, ParameterError, ShapeError, SingularityError
from .forcing import Forcing, phi_eps, zero_forcing
from .grids import (InitialData, SpaceGrid, SpaceTimeField, TimeGrid,
                    space_derivative_matrix, time_second_derivative_matrix,
                    trapezoid_space, trapezoid_weights)


def power_density(v: np.ndarray, r: float, power_reg: float = 0.0) -> np.ndarray:
    """(1/r)|v|^r, with the smoothed variant (1/r)((v^2 + d^2)^(r/2) - d^r)
    when a regularization d > 0 is active (needed for 1 < r < 2)."""
    if power_reg > 0.0:
        return ((v**2 + power_reg**2) ** (r / 2.0) - power_reg**r) / r
    return np.abs(v) ** r / r


def power_slope(v: np.ndarray, r: float, power_reg: float = 0.0) -> np.ndarray:
    """Derivative of power_density: |v|^(r-2) v, smoothed when power_reg > 0."""
    if power_reg > 0.0:
        return (v**2 + power_reg**2) ** ((r - 2.0) / 2.0) * v
    if r < 2.0 and np.any(v == 0.0):
        raise SingularityError(
            "power slope |v|^(r-2) v is singular at v = 0 for r < 2; "
            "set power_reg > 0"
        )
    return np.abs(v) ** (r - 2.0) * v


def potential_w(v: np.ndarray, r: float, grid: SpaceGrid,
                power_reg: float = 0.0) -> float:
    """W(v) = 1/2 integral of |v_x|^2 + (1/r) integral of |v|^r."""
    if r <= 1:
        raise ParameterError(f"exponent r must exceed 1, got {r}")
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != grid.n_points:
        raise ShapeError(f"expected {grid.n_points} samples, got {v.shape[-1]}")
    vx = v @ space_derivative_matrix(grid).T
    out = 0.5 * trapezoid_space(vx**2, grid) + trapezoid_space(power_density(v, r, power_reg), grid)
    return float(out) if np.ndim(out) == 0 else out


def pairing_dw(v: np.ndarray, h: np.ndarray, r: float, grid: SpaceGrid,
               power_reg: float = 0.0) -> float:
    """Directional derivative of W at v in direction h:
    integral of v_x h_x + |v|^(r-2) v h."""
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    if v.shape != h.shape or v.shape[-1] != grid.n_points:
        raise ShapeError("v and h must share the grid shape")
    dx = space_derivative_matrix(grid)
    return float(trapezoid_space((dx @ v) * (dx @ h) + power_slope(v, r, power_reg) * h, grid))


@dataclass
class WieProblem:
    """One minimization instance: grids, data, forcing, exponents, tolerances.

    The feasible set fixes the first two time layers,
        u[0] = w0,   u[1] = w0 + ht * eps * w1,
    a first-order realization of the velocity constraint that keeps the set
    affine.
    """

    eps: float
    r: float
    initial: InitialData
    space: SpaceGrid
    time: TimeGrid
    forcing: Forcing = None
    eps_f: float = 0.45
    power_reg: float = None

    def __post_init__(self):
        if self.forcing is None:
            self.forcing = zero_forcing()
        if not 0.0 < self.eps < self.eps_f < 0.5:
            raise ParameterError(
                f"need 0 < eps < eps_f < 1/2, got eps={self.eps}, eps_f={self.eps_f}"
            )
        if self.r <= 1.0:
            raise ParameterError(f"exponent r must exceed 1, got {self.r}")
        if self.power_reg is None:
            self.power_reg = 0.0 if self.r >= 2.0 else 1e-8
        if self.r >= 2.0 and self.power_reg != 0.0:
            raise ParameterError("power_reg must be 0 when r >= 2")
        if not self.time.weighted:
            raise ParameterError("WieProblem needs a weighted (rescaled) time grid")
        if self.initial.w0.shape != (self.space.n_points,):
            raise ShapeError("initial data length does not match the space grid")

    @cached_property
    def weight_matrix(self) -> np.ndarray:
        """Outer product of time and space quadrature weights."""
        return np.outer(self.time.weights, self.space.quad_weights)

    @cached_property
    def constraint_layers(self) -> np.ndarray:
        ht = self.time.spacing
        return np.vstack([self.initial.w0,
                          self.initial.w0 + ht * self.eps * self.initial.w1])

    def check_constraints(self, u: SpaceTimeField) -> None:
        scale = 1.0 + float(np.max(np.abs(self.constraint_layers)))
        if np.max(np.abs(u.values[:2] - self.constraint_layers)) > 1e-8 * scale:
            raise ConstraintError("field does not satisfy the fixed initial layers")


def _forcing_g_grid(prob: WieProblem, u_values: np.ndarray) -> np.ndarray | float:
    if prob.forcing.kind == "zero":
        return 0.0
    t = prob.time.nodes[:, None]
    x = prob.space.nodes[None, :]
    return prob.forcing.G(prob.eps * t, x, u_values)


def evaluate_j(u: SpaceTimeField, prob: WieProblem) -> float:
    """Value of the discrete rescaled functional at a feasible field."""
    prob.check_constraints(u)
    d2 = time_second_derivative_matrix(prob.time)
    dx = space_derivative_matrix(prob.space)
    m = prob.weight_matrix
    utt = d2 @ u.values
    ux = u.values @ dx.T
    val = (0.5 / prob.eps**2) * float(np.sum(m * utt**2)) \
        + 0.5 * float(np.sum(m * ux**2)) \
        + float(np.sum(m * power_density(u.values, prob.r, prob.power_reg)))
    return val - phi_eps(u, prob.forcing, prob.eps)


def gradient_j(u: SpaceTimeField, prob: WieProblem) -> SpaceTimeField:
    """Exact gradient of evaluate_j with respect to the free nodes.

    Assembled as the transpose of the quadrature and stencil operators; the
    two constrained layers carry zero entries.
    """
    prob.check_constraints(u)
    d2 = time_second_derivative_matrix(prob.time)
    dx = space_derivative_matrix(prob.space)
    m = prob.weight_matrix
    utt = d2 @ u.values
    ux = u.values @ dx.T
    grad = (1.0 / prob.eps**2) * (d2.T @ (m * utt)) \
        + (m * ux) @ dx \
        + m * power_slope(u.values, prob.r, prob.power_reg)
    if prob.forcing.kind != "zero":
        grad = grad - m * _forcing_g_grid(prob, u.values)
    grad[:2] = 0.0
    return SpaceTimeField(grad, prob.space, prob.time)


def evaluate_f_original(w: SpaceTimeField, prob: WieProblem) -> float:
    """Physical-time form of the functional, evaluated on a plain time grid.

    Carries the weight exp(-t/eps), the inertia coefficient eps^2/2, and the
    forcing at physical time; normalized by 1/eps (the change-of-variables
    Jacobian) so that for w(t, x) = u(t/eps, x) the value matches
    evaluate_j(u) up to quadrature error.
    """
    if w.time.weighted:
        raise ParameterError("evaluate_f_original expects a plain physical time grid")
    eps = prob.eps
    t = w.time.nodes
    wts = trapezoid_weights(w.time.n_steps, w.time.spacing) * np.exp(-t / eps)
    d2 = time_second_derivative_matrix(w.time)
    dx = space_derivative_matrix(w.space)
    gam = w.space.quad_weights
    m = np.outer(wts, gam)
    wtt = d2 @ w.values
    wx = w.values @ dx.T
    val = (eps**2 / 2.0) * float(np.sum(m * wtt**2)) \
        + 0.5 * float(np.sum(m * wx**2)) \
        + float(np.sum(m * power_density(w.values, prob.r, prob.power_reg)))
    if prob.forcing.kind != "zero":
        fv = prob.forcing.F(t[:, None], w.space.nodes[None, :], w.values)
        val -= float(np.sum(m * fv))
    return val / eps


# ---------------------------------------------------------------------------
# explicit a-priori constants


def c_f_constant(forcing: Forcing, grid: SpaceGrid, eps_f: float,
                 n_eps: int = 16) -> float:
    """Sup over an eps-mesh in (0, eps_f) of
    (1/eps) integral of exp(-t/eps) ||F(t, ., 0)||_L1 dt.

    Exactly zero for the built-in kinds with F(., ., 0) = 0; for custom kinds
    the mesh maximum is an estimate (the true sup over eps is not computable).
    """
    if forcing.kind in ("zero", "linear", "separable"):
        return 0.0
    best = 0.0
    for eps in np.linspace(eps_f / n_eps, eps_f * (1 - 1e-9), n_eps):
        t, w = kernels._simpson_mesh(0.0, kernels.quad_horizon(eps), kernels.QUAD_POINTS)
        l1 = trapezoid_space(np.abs(forcing.F(t[:, None], grid.nodes[None, :], 0.0)), grid)
        best = max(best, float(w @ (np.exp(-t / eps) * l1)) / eps)
    return best


def k_star_constant(forcing: Forcing, grid: SpaceGrid, eps_f: float,
                    alpha: float = 0.0) -> float:
    return kernels.k_star(forcing.f_norm_sq(grid), eps_f, alpha,
                          envelope=forcing.envelope)


def basic_energy_bound(prob: WieProblem) -> float:
    """Explicit constant bounding the weighted energy of any minimizer.

    Reassembled at runtime from the seed-value estimate and the coercivity
    chain, using the discrete norms of the data and the computed forcing
    constants; never a magic number.
    """
    grid = prob.space
    dx = space_derivative_matrix(grid)
    w0, w1 = prob.initial.w0, prob.initial.w1
    n0_sq = float(trapezoid_space(w0**2, grid))
    n1_sq = float(trapezoid_space(w1**2, grid))
    grad0_sq = float(trapezoid_space((dx @ w0) ** 2, grid))
    grad1_sq = float(trapezoid_space((dx @ w1) ** 2, grid))
    r0 = float(trapezoid_space(np.abs(w0) ** prob.r, grid))
    r1 = float(trapezoid_space(np.abs(w1) ** prob.r, grid))
    c_f = c_f_constant(prob.forcing, grid, prob.eps_f)
    k_st = k_star_constant(prob.forcing, grid, prob.eps_f)
    seed_bound = (grad0_sq + grad1_sq) \
        + 2.0 ** (prob.r - 1.0) * math.gamma(prob.r + 1.0) * (r0 + r1) \
        + c_f + math.sqrt(k_st) * math.sqrt(2.0 * n0_sq + n1_sq)
    return 2.0 * (1.0 + seed_bound + c_f + 16.0 * k_st + n0_sq / 32.0 + n1_sq / 8.0)


def weighted_energy(u: SpaceTimeField, prob: WieProblem) -> float:
    """The quantity controlled by the a-priori bound:
    weighted time integral of (1/(2 eps^2)) ||u_tt||^2 + W(u(t))."""
    d2 = time_second_derivative_matrix(prob.time)
    utt = d2 @ u.values
    kin = (0.5 / prob.eps**2) * trapezoid_space(utt**2, prob.space)
    pot = potential_w(u.values, prob.r, prob.space, prob.power_reg)
    return float(prob.time.weights @ (kin + pot))
