"""Reference solutions of the target initial value problem by explicit
second-order time stepping, used as the independent truth for convergence
studies.

The stepping stencils below are written out inline on purpose: the oracle
must not share difference operators with the functional it is checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InstabilityError
from .forcing import Forcing, zero_forcing
from .functional import potential_w
from .grids import InitialData, SpaceGrid, SpaceTimeField, physical_time_grid, trapezoid_space

BLOWUP_THRESHOLD = 1e8


@dataclass
class OracleConfig:
    t_phys: float
    ht_phys: float
    space: SpaceGrid
    r: float
    forcing: Forcing = None
    include_power_term: bool = True
    power_reg: float = 0.0

    def __post_init__(self):
        if self.forcing is None:
            self.forcing = zero_forcing()
        if self.t_phys <= 0 or self.ht_phys <= 0:
            raise ConfigError("horizon and step must be positive")
        if self.ht_phys > 0.9 * self.space.spacing:
            raise ConfigError(
                f"CFL violation: ht_phys = {self.ht_phys} exceeds 0.9 * hx = "
                f"{0.9 * self.space.spacing:.5f}"
            )


def _laplacian(w: np.ndarray, hx: float, periodic: bool) -> np.ndarray:
    out = np.empty_like(w)
    out[1:-1] = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / hx**2
    if periodic:
        out[0] = (w[1] - 2.0 * w[0] + w[-1]) / hx**2
        out[-1] = (w[0] - 2.0 * w[-1] + w[-2]) / hx**2
    else:
        out[0] = out[-1] = 0.0
    return out


def leapfrog_solve(cfg: OracleConfig, data: InitialData) -> SpaceTimeField:
    """Explicit trajectory of w'' = Lap w - |w|^(r-2) w [if enabled] + G(t, x, w).

    Taylor start for the first step, Dirichlet endpoints held at zero,
    blow-up detection at |w| > 1e8.
    """
    grid = cfg.space
    ht = cfg.ht_phys
    hx = grid.spacing
    periodic = grid.boundary == "periodic"
    tgrid = physical_time_grid(cfg.t_phys, ht)
    n_steps = tgrid.n_steps
    xs = grid.nodes

    def rhs(t: float, w: np.ndarray) -> np.ndarray:
        acc = _laplacian(w, hx, periodic)
        if cfg.include_power_term:
            if cfg.power_reg > 0.0:
                acc = acc - (w**2 + cfg.power_reg**2) ** ((cfg.r - 2.0) / 2.0) * w
            else:
                acc = acc - np.abs(w) ** (cfg.r - 2.0) * w
        if cfg.forcing.kind != "zero":
            acc = acc + cfg.forcing.G(t, xs, w)
        return acc

    traj = np.empty((n_steps, grid.n_points))
    traj[0] = data.w0
    traj[1] = data.w0 + ht * data.w1 + 0.5 * ht**2 * rhs(0.0, data.w0)
    if not periodic:
        traj[1][0] = traj[1][-1] = 0.0
    for j in range(1, n_steps - 1):
        traj[j + 1] = 2.0 * traj[j] - traj[j - 1] + ht**2 * rhs(j * ht, traj[j])
        if not periodic:
            traj[j + 1][0] = traj[j + 1][-1] = 0.0
        if np.max(np.abs(traj[j + 1])) > BLOWUP_THRESHOLD:
            raise InstabilityError(f"blow-up detected at step {j + 1} (t = {(j + 1) * ht:.4f})")
    return SpaceTimeField(traj, grid, tgrid)


def solution_energy(w: SpaceTimeField, r: float, power_reg: float = 0.0) -> np.ndarray:
    """Per-node physical energy E(t) = 1/2 ||w_t||^2 + W(w(t)).

    w_t is the oracle's own central difference (second-order one-sided at the
    two ends).
    """
    ht = w.time.spacing
    vals = w.values
    wt = np.empty_like(vals)
    wt[1:-1] = (vals[2:] - vals[:-2]) / (2.0 * ht)
    wt[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * ht)
    wt[-1] = (3.0 * vals[-1] - 4.0 * vals[-2] + vals[-3]) / (2.0 * ht)
    kinetic = 0.5 * trapezoid_space(wt**2, w.space)
    potential = potential_w(vals, r, w.space, power_reg)
    return kinetic + potential
