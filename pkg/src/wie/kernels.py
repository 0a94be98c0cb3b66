"""Exponential kernel utilities: the unit-mass mollifier, its convolution with
forcing norms, and the two moment constants that bound those convolutions.

The kernel eps^-2 * t * exp(-t/eps) has unit mass on (0, inf) and concentrates
at the origin as eps -> 0.  All integrals here are computed with composite
Simpson on [0, T_quad]; the horizon rule T_quad = s + 50*eps keeps the
neglected kernel tail below 1e-18 in relative terms.  Suprema over time
intervals are realized as maxima over a uniform sample mesh (default 10^4
points); callers that report constants should record the mesh size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AdmissibilityError, ParameterError, TailToleranceError

SUP_MESH_POINTS = 10_000
QUAD_POINTS = 8_001


@dataclass(frozen=True)
class KernelParams:
    """Rescaling parameter, admissibility threshold and moment order, with the
    joint constraint 0 < eps < eps_f < 1/2 validated once."""

    eps: float
    eps_f: float = 0.45
    alpha: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eps < self.eps_f < 0.5:
            raise ParameterError(
                f"need 0 < eps < eps_f < 1/2, got eps={self.eps}, eps_f={self.eps_f}"
            )
        if self.alpha < 0:
            raise ParameterError(f"alpha must be nonnegative, got {self.alpha}")


@dataclass(frozen=True)
class GrowthEnvelope:
    """Declared asymptotic envelope of a nonnegative time function.

    Sampling on a finite window cannot distinguish exp(t^2) from a bounded
    function, so integrability against exponential kernels is decided from
    this declared tag, not from samples.
    """

    kind: str  # bounded | polynomial | exponential | superexponential
    parameter: float = 0.0  # degree for polynomial, rate for exponential

    def __post_init__(self):
        if self.kind not in ("bounded", "polynomial", "exponential", "superexponential"):
            raise ParameterError(f"unknown growth envelope {self.kind!r}")

    def integrable_against(self, decay_rate: float) -> bool:
        """Whether envelope(t) * exp(-decay_rate * t) is integrable on (0, inf)."""
        if decay_rate <= 0:
            return False
        if self.kind in ("bounded", "polynomial"):
            return True
        if self.kind == "exponential":
            return self.parameter < decay_rate
        return False

    def squared(self) -> "GrowthEnvelope":
        if self.kind == "polynomial":
            return GrowthEnvelope("polynomial", 2 * self.parameter)
        if self.kind == "exponential":
            return GrowthEnvelope("exponential", 2 * self.parameter)
        return self


BOUNDED = GrowthEnvelope("bounded")


def _simpson_mesh(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of composite Simpson with an odd node count >= n."""
    if n % 2 == 0:
        n += 1
    t = np.linspace(a, b, n)
    h = (b - a) / (n - 1)
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return t, w * h / 3.0


def kernel_n(eps: float, t: np.ndarray | float) -> np.ndarray | float:
    """The mollifier eps^-2 * t * exp(-t/eps), t >= 0."""
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("kernel argument must be nonnegative")
    out = t * np.exp(-t / eps) / eps**2
    return float(out) if out.ndim == 0 else out


def quad_horizon(eps: float, s: float = 0.0) -> float:
    return max(50.0 * eps, s + 50.0 * eps)


def mollify(b: Callable[[np.ndarray], np.ndarray], eps: float, s: float,
            t_quad: float | None = None, tail_tol: float = 1e-9,
            n_nodes: int = QUAD_POINTS) -> float:
    """Kernel average of b around s: integral of N_eps(t) * b(t + s), t in [0, T_quad]."""
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if s < 0:
        raise ParameterError(f"s must be nonnegative, got {s}")
    if t_quad is None:
        t_quad = quad_horizon(eps)
    if math.exp(-t_quad / eps) > tail_tol:
        raise TailToleranceError(
            f"horizon {t_quad} leaves kernel tail exp(-T/eps) = "
            f"{math.exp(-t_quad / eps):.3e} above tail_tol = {tail_tol:.3e}"
        )
    t, w = _simpson_mesh(0.0, t_quad, n_nodes)
    vals = kernel_n(eps, t) * np.asarray(b(t + s), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise AdmissibilityError("non-finite integrand in kernel average")
    return float(w @ vals)


def q_eps(f_norm_sq: Callable[[np.ndarray], np.ndarray], eps: float, s: float,
          envelope: GrowthEnvelope | None = None, t_quad: float | None = None,
          n_nodes: int = QUAD_POINTS, eps_f: float | None = None) -> float:
    """Kernel average of a squared forcing norm at offset s.

    Refuses to integrate when the declared envelope of f_norm_sq beats the
    kernel decay exp(-t/eps).  Passing eps_f additionally enforces the
    admissibility window eps < eps_f < 1/2.
    """
    if eps_f is not None:
        KernelParams(eps, eps_f)
    if envelope is not None and not envelope.integrable_against(1.0 / eps):
        raise AdmissibilityError(
            f"envelope {envelope.kind}({envelope.parameter}) is not integrable "
            f"against exp(-t/{eps})"
        )
    return mollify(f_norm_sq, eps, s, t_quad=t_quad, n_nodes=n_nodes)


def k_star(f_norm_sq: Callable[[np.ndarray], np.ndarray], eps_f: float,
           alpha: float = 0.0, t_quad: float | None = None,
           envelope: GrowthEnvelope | None = None,
           n_sup: int = SUP_MESH_POINTS, n_nodes: int = QUAD_POINTS) -> float:
    """Moment constant bounding integral of t^alpha exp(-t) f_norm_sq(eps t) dt
    uniformly over eps below eps_f.

    Value: integral of t^alpha exp(-t/eps_f) / eps_f^(alpha+1) * f_norm_sq(t)
    plus Gamma(alpha+1) times the sampled sup of f_norm_sq on [0, alpha+1].
    """
    if alpha < 0:
        raise ParameterError(f"alpha must be nonnegative, got {alpha}")
    if not 0 < eps_f < 0.5:
        raise ParameterError(f"eps_f must lie in (0, 1/2), got {eps_f}")
    if envelope is not None and not envelope.integrable_against(1.0 / eps_f):
        raise AdmissibilityError(
            f"envelope {envelope.kind}({envelope.parameter}) defeats exp(-t/{eps_f})"
        )
    if t_quad is None:
        t_quad = quad_horizon(eps_f)
    t, w = _simpson_mesh(0.0, t_quad, n_nodes)
    vals = t**alpha * np.exp(-t / eps_f) / eps_f ** (alpha + 1) * np.asarray(f_norm_sq(t))
    if not np.all(np.isfinite(vals)):
        raise AdmissibilityError("non-finite integrand in moment constant")
    mesh = np.linspace(0.0, alpha + 1.0, n_sup)
    sup = float(np.max(np.asarray(f_norm_sq(mesh))))
    return float(w @ vals) + math.gamma(alpha + 1.0) * sup


def m_f(f_norm_sq: Callable[[np.ndarray], np.ndarray], eps_f: float, t_horizon: float,
        t_quad: float | None = None, envelope: GrowthEnvelope | None = None,
        n_sup: int = SUP_MESH_POINTS, n_nodes: int = QUAD_POINTS) -> float:
    """Uniform-in-eps bound on the kernel average q_eps over offsets in [0, T].

    Value: sampled sup of f_norm_sq on [0, 2T+1] plus
    eps_f^-2 * exp(T/eps_f) * integral of t exp(-t/eps_f) f_norm_sq(t) dt.
    """
    if t_horizon <= 0:
        raise ParameterError(f"t_horizon must be positive, got {t_horizon}")
    if not 0 < eps_f < 0.5:
        raise ParameterError(f"eps_f must lie in (0, 1/2), got {eps_f}")
    if envelope is not None and not envelope.integrable_against(1.0 / eps_f):
        raise AdmissibilityError(
            f"envelope {envelope.kind}({envelope.parameter}) defeats exp(-t/{eps_f})"
        )
    if t_quad is None:
        t_quad = quad_horizon(eps_f)
    mesh = np.linspace(0.0, 2.0 * t_horizon + 1.0, n_sup)
    sup = float(np.max(np.asarray(f_norm_sq(mesh))))
    t, w = _simpson_mesh(0.0, t_quad, n_nodes)
    vals = t * np.exp(-t / eps_f) * np.asarray(f_norm_sq(t))
    if not np.all(np.isfinite(vals)):
        raise AdmissibilityError("non-finite integrand in m_f")
    return sup + math.exp(t_horizon / eps_f) / eps_f**2 * float(w @ vals)
