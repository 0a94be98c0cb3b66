"""Numerical vetting of forcing terms and the sharpness demonstration.

The three hypotheses being vetted are: boundedness of the forcing norm on
finite windows, smallness of the kernel-weighted value of F at v = 0, and
integrability of the squared forcing norm against exp(-t/(2 eps_F)).  The
last one is asymptotic, so the verdict combines finite-window quadrature (for
the constants) with the declared growth envelope (for the asymptotics);
sampling alone cannot tell exp(t^2) from a bounded function.

The sharpness demo drives the physical-time functional to minus infinity for
a non-transformable time factor via cutoff competitors: the functional value
leaves double range quickly, so the forcing integral is accumulated in log
space and the reported values are arbitrary-precision floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import mpmath as mp
import numpy as np

from . import kernels
from .errors import InputError, ParameterError
from .forcing import Forcing, TimeFactor
from .functional import c_f_constant, power_density
from .grids import InitialData, SpaceGrid, space_derivative_matrix, trapezoid_space

CUTOFF_SUPPORT = 5.0  # plateau on [0, 1], smooth descent to zero at this point


@dataclass
class AdmissibilityReport:
    hyp_window_ok: bool
    window_sups: dict  # window end -> sampled sup of ||f(t,.)||_L2
    hyp_zero_ok: bool
    c_f_estimate: float
    laplace_ok: bool
    k_f_estimate: float | None
    envelope: str
    eps_f_candidate: float
    eps_f_estimate: float | None
    sup_mesh_points: int
    notes: str = ""

    @property
    def admissible(self) -> bool:
        return self.hyp_window_ok and self.hyp_zero_ok and self.laplace_ok

    def to_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "hyp_window_ok": self.hyp_window_ok,
            "window_sups": {str(k): v for k, v in self.window_sups.items()},
            "hyp_zero_ok": self.hyp_zero_ok,
            "c_f_estimate": self.c_f_estimate,
            "laplace_ok": self.laplace_ok,
            "k_f_estimate": self.k_f_estimate,
            "envelope": self.envelope,
            "eps_f_candidate": self.eps_f_candidate,
            "eps_f_estimate": self.eps_f_estimate,
            "sup_mesh_points": self.sup_mesh_points,
            "notes": self.notes,
        }


def check_hypotheses(forcing: Forcing, grid: SpaceGrid, eps_f_candidate: float = 0.45,
                     windows: tuple[float, ...] = (1.0, 2.0, 5.0),
                     n_sup: int = kernels.SUP_MESH_POINTS,
                     n_eps_mesh: int = 24) -> AdmissibilityReport:
    """Numeric verdicts on the three forcing hypotheses plus estimated constants."""
    if not 0.0 < eps_f_candidate < 0.5:
        raise ParameterError(f"eps_f candidate must lie in (0, 1/2), got {eps_f_candidate}")
    f_sq = forcing.f_norm_sq(grid)
    env = forcing.envelope

    window_sups = {}
    window_ok = True
    for t_end in windows:
        mesh = np.linspace(0.0, float(t_end), n_sup)
        vals = np.sqrt(np.maximum(np.asarray(f_sq(mesh)), 0.0))
        sup = float(np.max(vals))
        window_sups[float(t_end)] = sup
        window_ok = window_ok and bool(np.isfinite(sup))

    c_f = c_f_constant(forcing, grid, eps_f_candidate)
    zero_ok = bool(np.isfinite(c_f))

    laplace_ok = env.integrable_against(1.0 / (2.0 * eps_f_candidate))
    k_f = None
    if laplace_ok:
        t, w = kernels._simpson_mesh(0.0, kernels.quad_horizon(2.0 * eps_f_candidate),
                                     kernels.QUAD_POINTS)
        k_f = float(w @ (np.exp(-t / (2.0 * eps_f_candidate)) * np.asarray(f_sq(t)))) \
            / eps_f_candidate

    # largest mesh value in (0, 1/2) whose double-rate kernel still wins
    eps_mesh = np.linspace(0.5 / n_eps_mesh, 0.5 * (1 - 1e-9), n_eps_mesh)
    passing = [float(e) for e in eps_mesh if env.integrable_against(1.0 / (2.0 * e))]
    eps_f_estimate = max(passing) if passing else None

    notes = ("eps_f_estimate is the largest mesh value whose kernel beats the "
             "declared envelope; it is a heuristic, not a certified threshold.")
    return AdmissibilityReport(
        hyp_window_ok=window_ok, window_sups=window_sups,
        hyp_zero_ok=zero_ok, c_f_estimate=c_f,
        laplace_ok=laplace_ok, k_f_estimate=k_f,
        envelope=f"{env.kind}({env.parameter})" if env.kind in ("polynomial", "exponential")
        else env.kind,
        eps_f_candidate=eps_f_candidate, eps_f_estimate=eps_f_estimate,
        sup_mesh_points=n_sup, notes=notes,
    )


# ---------------------------------------------------------------------------
# smooth cutoff


def smooth_cutoff(t: np.ndarray | float) -> np.ndarray | float:
    """Decreasing plateau: 1 on [0, 1], quintic descent to 0 at t = 5.

    The descent is the smoothstep 1 - sigma^3 (10 - 15 sigma + 6 sigma^2) over
    sigma = (t - 1)/4, which keeps |zeta'| + |zeta''| below 1 (max ~0.83).
    """
    t = np.asarray(t, dtype=float)
    s = np.clip((t - 1.0) / (CUTOFF_SUPPORT - 1.0), 0.0, 1.0)
    out = 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
    return float(out) if out.ndim == 0 else out


def smooth_cutoff_d1(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    width = CUTOFF_SUPPORT - 1.0
    s = (t - 1.0) / width
    inside = (s > 0.0) & (s < 1.0)
    out = np.zeros_like(t)
    si = s[inside]
    out[inside] = -30.0 * si**2 * (1.0 - si) ** 2 / width
    return out


def smooth_cutoff_d2(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    width = CUTOFF_SUPPORT - 1.0
    s = (t - 1.0) / width
    inside = (s > 0.0) & (s < 1.0)
    out = np.zeros_like(t)
    si = s[inside]
    out[inside] = -60.0 * si * (1.0 - si) * (1.0 - 2.0 * si) / width**2
    return out


# ---------------------------------------------------------------------------
# sharpness demo


@dataclass
class SharpnessRow:
    n: int
    value: mp.mpf
    forcing_log: float  # natural log of the forcing integral (minus inf if zero)
    inertia: float
    potential: float

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "value": mp.nstr(self.value, 17),
            "forcing_log": self.forcing_log,
            "inertia": self.inertia,
            "potential": self.potential,
        }


@dataclass
class SharpnessResult:
    rows: list[SharpnessRow]
    c0: float

    @property
    def values(self) -> list[mp.mpf]:
        return [row.value for row in self.rows]

    def eventually_strictly_decreasing(self) -> bool:
        vals = self.values
        drops = [vals[k + 1] < vals[k] for k in range(len(vals) - 1)]
        if not any(drops):
            return False
        first = drops.index(True)
        return all(drops[first:])

    def first_below(self, threshold: float) -> int | None:
        for row in self.rows:
            if row.value < threshold:
                return row.n
        return None


def _graded_mesh(t_end: float, fine_end: float = 400.0, fine_step: float = 0.05,
                 growth: float = 1.02) -> np.ndarray:
    """Uniform mesh near the origin, geometric expansion out to t_end."""
    fine_end = min(fine_end, t_end)
    mesh = [np.arange(0.0, fine_end, fine_step)]
    t = fine_end
    tail = []
    while t < t_end:
        tail.append(t)
        t *= growth
    tail.append(t_end)
    mesh.append(np.array(tail))
    return np.unique(np.concatenate(mesh))


def _trap_weights_nonuniform(t: np.ndarray) -> np.ndarray:
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def sharpness_demo(eta: TimeFactor, g: Callable[[np.ndarray], np.ndarray],
                   data: InitialData, grid: SpaceGrid, eps: float, r: float,
                   n_max: int = 40) -> SharpnessResult:
    """Values of the physical-time functional along the cutoff competitors
    w_n(t, x) = (w0(x) + t w1(x)) * zeta(t / 2^n).

    The forcing kind is linear with coefficient eta(t) g(x); the functional's
    forcing integral is the kernel-weighted integral of eta(eps t) against the
    spatial pairing of g with w_n, accumulated in log space so that
    non-transformable factors (which push the value below the double range)
    are still ordered exactly.  Values carry the same 1/eps normalization as
    the physical-time evaluation elsewhere in the package.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    g_vals = g(grid.nodes)
    if np.any(g_vals < -1e-12):
        raise InputError("spatial profile g must be nonnegative")
    if np.any(data.w1 < -1e-12):
        raise InputError("sharpness construction requires w1 >= 0")
    c0 = float(trapezoid_space(g_vals * data.w0, grid))
    if c0 <= 0:
        raise InputError("sharpness construction requires a positive pairing of g with w0")
    a1 = float(trapezoid_space(g_vals * data.w1, grid))

    t_end = CUTOFF_SUPPORT * 2.0 ** n_max
    mesh = _graded_mesh(t_end)
    wts = _trap_weights_nonuniform(mesh)
    log_eta = eta.log_call(eps * mesh)

    # bounded terms only matter where exp(-t/eps) is representable
    active = mesh <= 750.0 * eps
    t_a = mesh[active]
    wts_a = wts[active]
    weight_a = np.exp(-t_a / eps)
    base_a = data.w0[None, :] + t_a[:, None] * data.w1[None, :]
    dx_mat = space_derivative_matrix(grid)

    rows = []
    for n in range(n_max + 1):
        scale = 2.0 ** n
        zeta_a = smooth_cutoff(t_a / scale)
        zeta_d1 = smooth_cutoff_d1(t_a / scale) / scale
        zeta_d2 = smooth_cutoff_d2(t_a / scale) / scale**2
        # w_n'' = zeta'' (w0 + t w1) + 2 zeta' w1
        wn_tt = zeta_d2[:, None] * base_a + 2.0 * zeta_d1[:, None] * data.w1[None, :]
        inertia = 0.5 * eps**2 * float(
            (wts_a * weight_a) @ trapezoid_space(wn_tt**2, grid))
        wn = zeta_a[:, None] * base_a
        wx = wn @ dx_mat.T
        pot_series = 0.5 * trapezoid_space(wx**2, grid) \
            + trapezoid_space(power_density(wn, r), grid)
        potential = float((wts_a * weight_a) @ pot_series)

        # forcing integral in log space over the full graded mesh
        zeta_full = smooth_cutoff(mesh / scale)
        pairing = zeta_full * (c0 + a1 * mesh)  # spatial integral of g * w_n
        with np.errstate(divide="ignore"):
            log_terms = np.where(
                pairing > 0.0,
                np.log(wts, out=np.full_like(wts, -np.inf), where=wts > 0)
                - mesh / eps + log_eta + np.log(pairing, out=np.zeros_like(pairing),
                                                where=pairing > 0.0),
                -np.inf,
            )
        finite = log_terms[np.isfinite(log_terms)]
        if finite.size:
            peak = float(np.max(finite))
            forcing_log = peak + math.log(float(np.sum(np.exp(finite - peak))))
        else:
            forcing_log = -math.inf
        value = (mp.mpf(inertia) + mp.mpf(potential)
                 - (mp.e ** mp.mpf(forcing_log) if forcing_log > -math.inf else mp.mpf(0)))
        value = value / eps
        rows.append(SharpnessRow(n=n, value=value, forcing_log=forcing_log,
                                 inertia=inertia, potential=potential))
    return SharpnessResult(rows=rows, c0=c0)
