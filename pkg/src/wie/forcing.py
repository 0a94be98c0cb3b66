"""Nonhomogeneous term of the equation: a triple (F, G, f) with G the
v-derivative of F and f a pointwise bound on |G|.

Built-in kinds:
  zero       F = 0
  linear     F = b(t,x) * v
  separable  F = b(t,x) * psi(v) with |psi'| <= 1 and psi(0) = 0
  custom     user-supplied evaluators, cross-validated by sampling

The coefficient b is a separable product tau(t) * g(x) assembled from the
factor catalog below, so every admissibility verdict can be traced to the
declared growth envelope of tau^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ForcingError, InputError, ParameterError
from .grids import SpaceGrid, SpaceTimeField, trapezoid_space, weighted_time_integral
from .kernels import BOUNDED, GrowthEnvelope

Array = np.ndarray


# ---------------------------------------------------------------------------
# factor catalog


@dataclass(frozen=True)
class TimeFactor:
    """Named scalar factor tau(t) with the growth envelope of tau(t)^2."""

    name: str
    params: tuple = ()
    fn: Callable[[Array], Array] = field(compare=False, default=None)
    log_fn: Callable[[Array], Array] = field(compare=False, default=None)
    envelope_sq: GrowthEnvelope = BOUNDED

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    def log_call(self, t):
        """log |tau(t)|, safe for factors whose values overflow a double."""
        t = np.asarray(t, dtype=float)
        if self.log_fn is not None:
            return self.log_fn(t)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.fn(t)))


def time_factor(name: str, **params) -> TimeFactor:
    """Catalog: constant, exp_decay, polynomial, gaussian_bump, exp_t2, tabulated."""
    if name == "constant":
        c = float(params.get("value", 1.0))
        return TimeFactor(name, (c,), lambda t: np.full_like(t, c),
                          envelope_sq=BOUNDED)
    if name == "exp_decay":
        rate = float(params.get("rate", 1.0))
        if rate <= 0:
            raise ParameterError("exp_decay rate must be positive")
        a = float(params.get("amplitude", 1.0))
        return TimeFactor(name, (a, rate), lambda t: a * np.exp(-rate * t),
                          envelope_sq=BOUNDED)
    if name == "polynomial":
        deg = int(params.get("degree", 1))
        a = float(params.get("amplitude", 1.0))
        if deg < 0:
            raise ParameterError("polynomial degree must be nonnegative")
        return TimeFactor(name, (a, deg), lambda t: a * t**deg,
                          envelope_sq=GrowthEnvelope("polynomial", 2 * deg))
    if name == "gaussian_bump":
        c = float(params.get("center", 1.0))
        w = float(params.get("width", 0.5))
        a = float(params.get("amplitude", 1.0))
        if w <= 0:
            raise ParameterError("gaussian_bump width must be positive")
        return TimeFactor(name, (a, c, w),
                          lambda t: a * np.exp(-((t - c) / w) ** 2),
                          envelope_sq=BOUNDED)
    if name == "exp_t2":
        # e^{t^2}: the canonical non-Laplace-transformable factor
        return TimeFactor(name, (),
                          lambda t: np.exp(t**2),
                          log_fn=lambda t: t**2,
                          envelope_sq=GrowthEnvelope("superexponential"))
    if name == "tabulated":
        ts = tuple(float(v) for v in params["times"])
        vs = tuple(float(v) for v in params["values"])
        if len(ts) != len(vs) or len(ts) < 2:
            raise ParameterError("tabulated factor needs matching times/values, >= 2 entries")
        ta, va = np.array(ts), np.array(vs)
        return TimeFactor(name, (ts, vs),
                          lambda t: np.interp(t, ta, va),
                          envelope_sq=BOUNDED)
    raise ParameterError(f"unknown time factor {name!r}")


def space_profile(name: str, **params) -> Callable[[Array], Array]:
    """Catalog of spatial profiles: zero, constant, bump, gaussian, bump_prime, sine."""
    if name == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if name == "constant":
        c = float(params.get("value", 1.0))
        return lambda x: np.full_like(np.asarray(x, dtype=float), c)
    if name == "bump":
        # smooth compactly supported bump, = amplitude at 0, support |x-center| < width
        a = float(params.get("amplitude", 1.0))
        w = float(params.get("width", 1.0))
        c = float(params.get("center", 0.0))
        if w <= 0:
            raise ParameterError("bump width must be positive")

        def fn(x):
            x = np.asarray(x, dtype=float)
            y = np.zeros_like(x)
            s = (x - c) / w
            m = np.abs(s) < 1.0
            y[m] = a * np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
            return y

        return fn
    if name == "bump_prime":
        # analytic derivative of the bump, for traveling-wave data w1 = -w0'
        a = float(params.get("amplitude", 1.0))
        w = float(params.get("width", 1.0))
        c = float(params.get("center", 0.0))

        def fn(x):
            x = np.asarray(x, dtype=float)
            y = np.zeros_like(x)
            s = (x - c) / w
            m = np.abs(s) < 1.0
            sm = s[m]
            y[m] = a * np.exp(1.0 - 1.0 / (1.0 - sm**2)) * (-2.0 * sm / (1.0 - sm**2) ** 2) / w
            return y

        return fn
    if name == "gaussian":
        a = float(params.get("amplitude", 1.0))
        sig = float(params.get("sigma", 0.5))
        c = float(params.get("center", 0.0))
        return lambda x: a * np.exp(-((np.asarray(x, dtype=float) - c) / sig) ** 2 / 2.0)
    if name == "sine":
        a = float(params.get("amplitude", 1.0))
        k = float(params.get("frequency", math.pi))
        return lambda x: a * np.sin(k * np.asarray(x, dtype=float))
    raise ParameterError(f"unknown space profile {name!r}")


def sine_gordon_psi() -> tuple[Callable, Callable]:
    """psi(v) = cos v - 1 and its derivative; |psi'| <= 1 and psi(0) = 0."""
    return (lambda v: np.cos(v) - 1.0, lambda v: -np.sin(v))


# ---------------------------------------------------------------------------
# forcing


@dataclass
class Forcing:
    kind: str  # zero | linear | separable | custom
    b_time: TimeFactor | None = None
    b_space: Callable[[Array], Array] | None = None
    psi: Callable[[Array], Array] | None = None
    psi_prime: Callable[[Array], Array] | None = None
    f_custom: Callable | None = None  # (t, x) -> bound on |G|
    g_custom: Callable | None = None  # (t, x, v) -> dF/dv
    big_f_custom: Callable | None = None  # (t, x, v) -> F
    envelope: GrowthEnvelope = BOUNDED  # envelope of t -> ||f(t,.)||_L2^2

    def b(self, t, x):
        """Coefficient b(t, x) = tau(t) * g(x), broadcasting t against x."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        return self.b_time(t) * self.b_space(x)

    def F(self, t, x, v):
        if self.kind == "zero":
            return np.zeros(np.broadcast(np.asarray(t), np.asarray(x), np.asarray(v)).shape)
        if self.kind == "linear":
            return self.b(t, x) * v
        if self.kind == "separable":
            return self.b(t, x) * self.psi(np.asarray(v, dtype=float))
        return self._finite(self.big_f_custom(t, x, v), "F")

    def G(self, t, x, v):
        if self.kind == "zero":
            return np.zeros(np.broadcast(np.asarray(t), np.asarray(x), np.asarray(v)).shape)
        if self.kind == "linear":
            return self.b(t, x) * np.ones_like(np.asarray(v, dtype=float))
        if self.kind == "separable":
            return self.b(t, x) * self.psi_prime(np.asarray(v, dtype=float))
        return self._finite(self.g_custom(t, x, v), "G")

    def f(self, t, x):
        if self.kind == "zero":
            return np.zeros(np.broadcast(np.asarray(t), np.asarray(x)).shape)
        if self.kind in ("linear", "separable"):
            # |psi'| <= 1, so |G| <= |b| in both cases
            return np.abs(self.b(t, x))
        return self._finite(self.f_custom(t, x), "f")

    @staticmethod
    def _finite(vals, label):
        vals = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ForcingError(f"custom evaluator {label} returned non-finite values")
        return vals

    def f_norm_sq(self, grid: SpaceGrid) -> Callable[[Array], Array]:
        """The map t -> squared L2(space) norm of f(t, .), vectorized over t."""
        if self.kind == "zero":
            return lambda t: np.zeros_like(np.asarray(t, dtype=float))
        if self.kind in ("linear", "separable"):
            g_sq = float(trapezoid_space(self.b_space(grid.nodes) ** 2, grid))
            tf = self.b_time
            return lambda t: tf(t) ** 2 * g_sq
        xs = grid.nodes

        def fn(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            out = trapezoid_space(self.f(t[:, None], xs[None, :]) ** 2, grid)
            return out if out.shape != (1,) else out[0]

        return fn


def zero_forcing() -> Forcing:
    return Forcing(kind="zero")


def linear_forcing(b_time: TimeFactor, b_space: Callable) -> Forcing:
    return Forcing(kind="linear", b_time=b_time, b_space=b_space,
                   envelope=b_time.envelope_sq)


def separable_forcing(b_time: TimeFactor, b_space: Callable,
                      psi: Callable, psi_prime: Callable,
                      n_samples: int = 1000) -> Forcing:
    """Forcing b(t,x) * psi(v); validates psi(0) = 0 and |psi'| <= 1 by sampling."""
    if abs(float(psi(np.array(0.0)))) > 1e-12:
        raise InputError("separable forcing requires psi(0) = 0")
    v = np.linspace(-30.0, 30.0, n_samples)
    if np.max(np.abs(psi_prime(v))) > 1.0 + 1e-9:
        raise InputError("separable forcing requires |psi'| <= 1")
    return Forcing(kind="separable", b_time=b_time, b_space=b_space,
                   psi=psi, psi_prime=psi_prime, envelope=b_time.envelope_sq)


def custom_forcing(big_f: Callable, g: Callable, f: Callable,
                   envelope: GrowthEnvelope, n_samples: int = 1000,
                   fd_step: float = 1e-4, seed: int = 20_240_501) -> Forcing:
    """Custom triple (F, G, f); G is cross-validated against F by central
    differences and |G| <= f by sampling, rejecting on violation."""
    fc = Forcing(kind="custom", big_f_custom=big_f, g_custom=g, f_custom=f,
                 envelope=envelope)
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, 5.0, n_samples)
    x = rng.uniform(-3.0, 3.0, n_samples)
    v = rng.uniform(-3.0, 3.0, n_samples)
    g_vals = fc.G(t, x, v)
    fd = (fc.F(t, x, v + fd_step) - fc.F(t, x, v - fd_step)) / (2.0 * fd_step)
    scale = 1.0 + np.max(np.abs(g_vals))
    if np.max(np.abs(fd - g_vals)) > 1e-5 * scale:
        raise InputError("custom forcing: G disagrees with finite differences of F")
    if np.any(np.abs(g_vals) > fc.f(t, x) + 1e-9 * scale):
        raise InputError("custom forcing: |G| exceeds the declared bound f")
    return fc


def phi_eps(u: SpaceTimeField, forcing: Forcing, eps: float) -> float:
    """Weighted space-time integral of F(eps*t, x, u(t, x))."""
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if forcing.kind == "zero":
        return 0.0
    t = u.time.nodes[:, None]
    x = u.space.nodes[None, :]
    vals = forcing.F(eps * t, x, u.values)
    if not np.all(np.isfinite(vals)):
        raise ForcingError("non-finite forcing values on the grid")
    return weighted_time_integral(trapezoid_space(vals, u.space), u.time)
