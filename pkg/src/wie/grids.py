"""Grids, fields, quadrature rules and difference stencils shared by all modules.

Space is the truncated interval [-L, L] in one dimension (the grids carry an
explicit dimension tag so signatures survive an eventual 2D extension).  Time
grids come in two flavours: the rescaled grid whose quadrature weights carry
the factor exp(-t), and plain physical-time grids used for oracle trajectories
and rescaled minimizers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, RangeError, ShapeError, TailToleranceError

DEFAULT_TAIL_TOL = 1e-9


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform grid on [-L, L], dirichlet (endpoints included) or periodic."""

    half_length: float
    n_points: int
    boundary: str = "dirichlet"
    ndim: int = 1

    def __post_init__(self):
        if self.half_length <= 0:
            raise ParameterError(f"half_length must be positive, got {self.half_length}")
        if self.n_points < 3:
            raise ParameterError(f"need at least 3 space points, got {self.n_points}")
        if self.boundary not in ("dirichlet", "periodic"):
            raise ParameterError(f"unknown boundary {self.boundary!r}")
        if self.ndim != 1:
            raise ParameterError("only spatial dimension 1 is implemented")

    @property
    def spacing(self) -> float:
        if self.boundary == "dirichlet":
            return 2.0 * self.half_length / (self.n_points - 1)
        return 2.0 * self.half_length / self.n_points

    @cached_property
    def nodes(self) -> np.ndarray:
        if self.boundary == "dirichlet":
            return np.linspace(-self.half_length, self.half_length, self.n_points)
        # periodic: node at -L, none at +L
        return -self.half_length + self.spacing * np.arange(self.n_points)

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights (dirichlet) or rectangle weights (periodic)."""
        if self.boundary == "dirichlet":
            return trapezoid_weights(self.n_points, self.spacing)
        return np.full(self.n_points, self.spacing)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T].

    With ``weighted=True`` the quadrature weights are trapezoid weights of
    exp(-t) and the horizon must leave a tail below ``tail_tol``; this is the
    grid the rescaled functional lives on.  With ``weighted=False`` the grid
    is a plain physical-time grid (oracle trajectories, rescaled minimizers).
    """

    horizon: float
    n_steps: int
    tail_tol: float = DEFAULT_TAIL_TOL
    weighted: bool = True

    def __post_init__(self):
        if self.n_steps < 3:
            raise ParameterError(f"need at least 3 time nodes, got {self.n_steps}")
        if self.horizon <= 0:
            raise ParameterError(f"horizon must be positive, got {self.horizon}")
        if self.weighted:
            if np.exp(-self.horizon) > self.tail_tol:
                raise TailToleranceError(
                    f"exp(-{self.horizon}) = {np.exp(-self.horizon):.3e} exceeds "
                    f"tail_tol = {self.tail_tol:.3e}; enlarge the horizon"
                )
            total = float(np.sum(self.weights))
            ht = self.spacing
            # trapezoid overshoots the convex integrand by at most ht^2/8
            if not (1.0 - 2.0 * self.tail_tol <= total <= 1.0 + ht**2 / 8.0):
                raise ParameterError(
                    f"weighted quadrature of exp(-t) gave {total!r}, outside "
                    f"[1 - 2*tail_tol, 1 + ht^2/8]"
                )

    @property
    def spacing(self) -> float:
        return self.horizon / (self.n_steps - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.spacing * np.arange(self.n_steps)

    @cached_property
    def weights(self) -> np.ndarray:
        trap = trapezoid_weights(self.n_steps, self.spacing)
        if self.weighted:
            return trap * np.exp(-self.nodes)
        return trap


def rescaled_time_grid(horizon: float, ht: float, tail_tol: float = DEFAULT_TAIL_TOL) -> TimeGrid:
    """Weighted grid covering [0, horizon] with step as close to ht as possible."""
    n = int(round(horizon / ht)) + 1
    return TimeGrid(horizon=(n - 1) * ht, n_steps=n, tail_tol=tail_tol)


def physical_time_grid(horizon: float, ht: float) -> TimeGrid:
    n = int(round(horizon / ht)) + 1
    return TimeGrid(horizon=(n - 1) * ht, n_steps=n, weighted=False)


@dataclass
class InitialData:
    """Position and velocity profiles sampled on a SpaceGrid."""

    w0: np.ndarray
    w1: np.ndarray

    def __post_init__(self):
        self.w0 = np.asarray(self.w0, dtype=float)
        self.w1 = np.asarray(self.w1, dtype=float)
        if self.w0.shape != self.w1.shape or self.w0.ndim != 1:
            raise ShapeError(f"w0 and w1 must be 1d arrays of equal length, got "
                             f"{self.w0.shape} and {self.w1.shape}")
        if not (np.all(np.isfinite(self.w0)) and np.all(np.isfinite(self.w1))):
            raise ParameterError("initial data must be finite")


def support_margin(data: InitialData, grid: SpaceGrid, tol: float = 1e-12) -> float:
    """Distance from the support of (w0, w1) to the boundary of [-L, L].

    With unit propagation speed, reflections from the dirichlet truncation
    cannot reach the support region before a physical time equal to this
    margin, so comparisons on [0, T_phys] are clean whenever margin >= T_phys.
    """
    mask = (np.abs(data.w0) > tol) | (np.abs(data.w1) > tol)
    if not np.any(mask):
        return float(grid.half_length)
    xs = grid.nodes[mask]
    return float(grid.half_length - np.max(np.abs(xs)))


def validate_support_margin(data: InitialData, grid: SpaceGrid, t_phys: float,
                            tol: float = 1e-12) -> None:
    if grid.boundary != "dirichlet":
        return
    margin = support_margin(data, grid, tol)
    if margin < t_phys:
        raise ParameterError(
            f"support margin {margin:.3f} is below the physical horizon {t_phys:.3f}; "
            "boundary reflections would pollute the comparison window"
        )


@dataclass
class SpaceTimeField:
    """Solution amplitudes u[j, i] on a time grid x space grid."""

    values: np.ndarray
    space: SpaceGrid
    time: TimeGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.time.n_steps, self.space.n_points)
        if self.values.shape != expected:
            raise ShapeError(f"field shape {self.values.shape} does not match grids {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("field contains non-finite entries")

    def copy(self) -> "SpaceTimeField":
        return SpaceTimeField(self.values.copy(), self.space, self.time)


# ---------------------------------------------------------------------------
# quadrature


def trapezoid_space(values: np.ndarray, grid: SpaceGrid) -> float | np.ndarray:
    """Spatial quadrature along the last axis.

    Trapezoid rule for dirichlet grids, rectangle rule for periodic grids
    (exact for the periodic extension).  Accepts (Nx,) samples or stacked
    (..., Nx) samples, integrating the last axis.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.n_points:
        raise ShapeError(f"expected {grid.n_points} samples, got {values.shape[-1]}")
    out = values @ grid.quad_weights
    return float(out) if np.ndim(out) == 0 else out


def weighted_time_integral(series: np.ndarray, grid: TimeGrid) -> float:
    """Quadrature of exp(-t) * series(t) over [0, T] on a weighted grid."""
    series = np.asarray(series, dtype=float)
    if series.shape[0] != grid.n_steps:
        raise ShapeError(f"expected {grid.n_steps} samples, got {series.shape[0]}")
    if not grid.weighted:
        raise ParameterError("weighted_time_integral needs a weighted time grid")
    return float(grid.weights @ series)


# ---------------------------------------------------------------------------
# difference stencils (second order, one-sided at interval ends)


@lru_cache(maxsize=32)
def _d1_open(n: int, h: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for j in range(1, n - 1):
        rows += [j, j]
        cols += [j - 1, j + 1]
        vals += [-0.5, 0.5]
    rows += [0, 0, 0]
    cols += [0, 1, 2]
    vals += [-1.5, 2.0, -0.5]
    rows += [n - 1] * 3
    cols += [n - 1, n - 2, n - 3]
    vals += [1.5, -2.0, 0.5]
    return sp.csr_matrix((np.array(vals) / h, (rows, cols)), shape=(n, n))


@lru_cache(maxsize=32)
def _d1_periodic(n: int, h: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for j in range(n):
        rows += [j, j]
        cols += [(j - 1) % n, (j + 1) % n]
        vals += [-0.5, 0.5]
    return sp.csr_matrix((np.array(vals) / h, (rows, cols)), shape=(n, n))


@lru_cache(maxsize=32)
def _d2_open(n: int, h: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for j in range(1, n - 1):
        rows += [j, j, j]
        cols += [j - 1, j, j + 1]
        vals += [1.0, -2.0, 1.0]
    rows += [0, 0, 0, 0]
    cols += [0, 1, 2, 3]
    vals += [2.0, -5.0, 4.0, -1.0]
    rows += [n - 1] * 4
    cols += [n - 1, n - 2, n - 3, n - 4]
    vals += [2.0, -5.0, 4.0, -1.0]
    return sp.csr_matrix((np.array(vals) / h**2, (rows, cols)), shape=(n, n))


def time_derivative_matrix(grid: TimeGrid) -> sp.csr_matrix:
    return _d1_open(grid.n_steps, grid.spacing)


def time_second_derivative_matrix(grid: TimeGrid) -> sp.csr_matrix:
    return _d2_open(grid.n_steps, grid.spacing)


def space_derivative_matrix(grid: SpaceGrid) -> sp.csr_matrix:
    if grid.boundary == "periodic":
        return _d1_periodic(grid.n_points, grid.spacing)
    return _d1_open(grid.n_points, grid.spacing)


class FieldDerivatives(NamedTuple):
    u_t: np.ndarray
    u_tt: np.ndarray
    u_x: np.ndarray


def discrete_derivatives(u: SpaceTimeField) -> FieldDerivatives:
    """Central differences with second-order one-sided formulas at the ends.

    u_t and u_tt differentiate along the time axis, u_x along space (periodic
    wrap on periodic grids).  No ghost nodes: the stencils act on the grid
    values themselves, so they are linear maps of the decision variable.
    """
    dt = time_derivative_matrix(u.time)
    dtt = time_second_derivative_matrix(u.time)
    dx = space_derivative_matrix(u.space)
    return FieldDerivatives(u_t=dt @ u.values,
                            u_tt=dtt @ u.values,
                            u_x=u.values @ dx.T)


def interp_time(u: SpaceTimeField, t_query: np.ndarray) -> np.ndarray:
    """Cubic-spline interpolation of a field along its time axis."""
    from scipy.interpolate import CubicSpline

    t_query = np.asarray(t_query, dtype=float)
    if np.any(t_query < -1e-12) or np.any(t_query > u.time.horizon * (1 + 1e-12)):
        raise RangeError("query times outside the stored horizon")
    spline = CubicSpline(u.time.nodes, u.values, axis=0)
    return spline(np.clip(t_query, 0.0, u.time.horizon))
