"""Problem data: radial coefficients, reaction, boundary flux, and the
assumption checks that every instance is expected to satisfy.

All callables take and return numpy arrays (scalars work too).  Instances are
frozen dataclasses and can be shared freely between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import (
    DegenerateCoefficientError,
    EvaluationError,
    InvalidExponentError,
    QuadratureError,
)

Func = Callable[[np.ndarray], np.ndarray]

RATIO_MODES = ("exact", "vanishing", "power_perturbed")

# Gauss-Legendre nodes for the vectorised primitive; f is smooth on [theta0, t].
_GL_X, _GL_W = np.polynomial.legendre.leggauss(40)


def _finite(fn: Func, x, what: str) -> np.ndarray:
    with np.errstate(all="ignore"):
        y = np.asarray(fn(x), dtype=float)
    if y.shape != np.shape(x):
        y = np.broadcast_to(y, np.shape(x)).astype(float)
    if not np.all(np.isfinite(y)):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        ys = np.atleast_1d(y)
        bad = xs[~np.isfinite(ys)][0] if xs.size == ys.size else float("nan")
        raise EvaluationError(f"evaluation failure: {what} is not finite at {bad!r}")
    return y


@dataclass(frozen=True)
class ScalarField1D:
    """A radial coefficient r -> value with its first (and maybe second) derivative."""

    value: Func
    deriv1: Func
    deriv2: Optional[Func] = None
    label: str = ""

    def __call__(self, r):
        return _finite(self.value, r, f"{self.label or 'field'}(r)")

    def d1(self, r):
        return _finite(self.deriv1, r, f"{self.label or 'field'}'(r)")

    def d2(self, r):
        if self.deriv2 is None:
            raise EvaluationError(f"evaluation failure: {self.label!r} has no second derivative")
        return _finite(self.deriv2, r, f"{self.label or 'field'}''(r)")


@dataclass(frozen=True)
class Reaction:
    value: Func
    deriv: Func
    root: float
    label: str = ""

    def __call__(self, u):
        return _finite(self.value, u, f"f({self.label})")

    def d(self, u):
        return _finite(self.deriv, u, f"f'({self.label})")


@dataclass(frozen=True)
class BoundaryFlux:
    value: Func
    deriv: Func
    label: str = ""

    def __call__(self, u):
        return _finite(self.value, u, f"e({self.label})")

    def d(self, u):
        return _finite(self.deriv, u, f"e'({self.label})")


@dataclass(frozen=True)
class ProblemInstance:
    """One radial Neumann problem on the ball of radius ``radius``."""

    dimension: int
    radius: float
    a: ScalarField1D
    b: ScalarField1D
    f: Reaction
    e: BoundaryFlux
    mu0: float
    k_star: float = 0.5

    def __post_init__(self):
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.dimension!r}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"radius must be positive, got {self.radius!r}")
        if not self.mu0 > 0:
            raise ValueError(f"mu0 must be positive, got {self.mu0!r}")
        if not 0 < self.k_star < 1:
            raise ValueError(f"k_star must lie in (0, 1), got {self.k_star!r}")

    @property
    def eps(self) -> float:
        return 1.0 / self.radius

    @property
    def theta0(self) -> float:
        return float(self.f.root)


@dataclass(frozen=True)
class InstanceFamily:
    """Instances indexed by the radius.

    ``build`` maps R to a ProblemInstance; coefficients may depend on R (the
    ramp and the linear "inconspicuous" profile do).
    """

    name: str
    build: Callable[[float], ProblemInstance]
    ratio_mode: str = "exact"
    mu_star: float = 0.0
    tau_star: Optional[float] = None
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.ratio_mode not in RATIO_MODES:
            raise ValueError(f"unknown ratio_mode {self.ratio_mode!r}")
        if self.ratio_mode == "power_perturbed":
            if self.tau_star is None or not self.tau_star > 0:
                raise InvalidExponentError(f"invalid exponent: tau_star={self.tau_star!r}"
                                           " must be positive")
            if self.mu_star == 0:
                raise ValueError("power_perturbed family needs mu_star != 0")

    def at(self, radius: float) -> ProblemInstance:
        return self.build(float(radius))


# --------------------------------------------------------------------------
# built-in coefficient profiles, reactions and fluxes


def constant_field(c: float, label: str = "") -> ScalarField1D:
    c = float(c)
    return ScalarField1D(
        value=lambda r: np.full_like(np.asarray(r, dtype=float), c),
        deriv1=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        deriv2=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        label=label or f"const({c:g})",
    )


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def _smoothstep_d1(t):
    inside = (t > 0.0) & (t < 1.0)
    tc = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * tc**2 * (1.0 - tc) ** 2, 0.0)


def _smoothstep_d2(t):
    inside = (t > 0.0) & (t < 1.0)
    tc = np.clip(t, 0.0, 1.0)
    return np.where(inside, 60.0 * tc * (1.0 - tc) * (1.0 - 2.0 * tc), 0.0)


def ramp_field(radius: float, k_star: float, k: float, scale: float = 1.0) -> ScalarField1D:
    """``scale * a`` with a = k* on [0, k*R], a C^2 quintic bridge to 1 on
    [k*R, kR], and a = 1 beyond kR."""
    if not 0 < k_star < 1 or not k > k_star:
        raise ValueError("ramp needs 0 < k_star < 1 and k > k_star")
    lo, width = k_star * radius, (k - k_star) * radius
    amp = (1.0 - k_star) * scale

    def t_of(r):
        return (np.asarray(r, dtype=float) - lo) / width

    return ScalarField1D(
        value=lambda r: scale * k_star + amp * _smoothstep(t_of(r)),
        deriv1=lambda r: amp * _smoothstep_d1(t_of(r)) / width,
        deriv2=lambda r: amp * _smoothstep_d2(t_of(r)) / width**2,
        label=f"ramp(R={radius:g},k*={k_star:g},k={k:g},x{scale:g})",
    )


def inconspicuous_field(dimension: int, radius: float, scale: float = 1.0) -> ScalarField1D:
    """``scale * ((N-1)(R-r)/R + 1)``: with b proportional to a the
    curvature term H(R) vanishes identically."""
    slope = (dimension - 1) / radius
    return ScalarField1D(
        value=lambda r: scale * (slope * (radius - np.asarray(r, dtype=float)) + 1.0),
        deriv1=lambda r: np.full_like(np.asarray(r, dtype=float), -scale * slope),
        deriv2=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        label=f"linear_decay(N={dimension},R={radius:g},x{scale:g})",
    )


def linear_reaction(theta0: float = 0.0, slope: float = 1.0) -> Reaction:
    if not slope > 0:
        raise ValueError("linear reaction needs slope > 0")
    return Reaction(
        value=lambda u: slope * (np.asarray(u, dtype=float) - theta0),
        deriv=lambda u: np.full_like(np.asarray(u, dtype=float), slope),
        root=float(theta0),
        label=f"linear(theta0={theta0:g},slope={slope:g})",
    )


def cubic_reaction(theta0: float = 0.0, slope: float = 1.0, kappa: float = 1.0) -> Reaction:
    """f(u) = slope (u - theta0) + kappa (u - theta0)^3, kappa >= 0."""
    if not slope > 0 or kappa < 0:
        raise ValueError("cubic reaction needs slope > 0 and kappa >= 0")
    return Reaction(
        value=lambda u: slope * (np.asarray(u, dtype=float) - theta0)
        + kappa * (np.asarray(u, dtype=float) - theta0) ** 3,
        deriv=lambda u: slope + 3.0 * kappa * (np.asarray(u, dtype=float) - theta0) ** 2,
        root=float(theta0),
        label=f"cubic(theta0={theta0:g},slope={slope:g},kappa={kappa:g})",
    )


def sinh_reaction(theta0: float = 0.0, scale: float = 1.0) -> Reaction:
    return Reaction(
        value=lambda u: scale * np.sinh(np.asarray(u, dtype=float) - theta0),
        deriv=lambda u: scale * np.cosh(np.asarray(u, dtype=float) - theta0),
        root=float(theta0),
        label=f"sinh(theta0={theta0:g},scale={scale:g})",
    )


def constant_flux(value: float = 1.0) -> BoundaryFlux:
    return BoundaryFlux(
        value=lambda u: np.full_like(np.asarray(u, dtype=float), value),
        deriv=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        label=f"const({value:g})",
    )


def affine_flux(intercept: float = 2.0, slope: float = 1.0) -> BoundaryFlux:
    """e(u) = intercept - slope * u; positive only on u < intercept / slope."""
    return BoundaryFlux(
        value=lambda u: intercept - slope * np.asarray(u, dtype=float),
        deriv=lambda u: np.full_like(np.asarray(u, dtype=float), -slope),
        label=f"affine({intercept:g}-{slope:g}u)",
    )


def exponential_flux(amplitude: float = 1.0, rate: float = 1.0) -> BoundaryFlux:
    return BoundaryFlux(
        value=lambda u: amplitude * np.exp(-rate * np.asarray(u, dtype=float)),
        deriv=lambda u: -rate * amplitude * np.exp(-rate * np.asarray(u, dtype=float)),
        label=f"exp({amplitude:g}e^-{rate:g}u)",
    )


# --------------------------------------------------------------------------
# built-in families


def constant_family(dimension=2, mu0=1.0, alpha=1.0, reaction=None, flux=None, k_star=0.5):
    reaction = reaction or linear_reaction()
    flux = flux or constant_flux()

    def build(R):
        return ProblemInstance(
            dimension, R, constant_field(alpha, "a"), constant_field(mu0 * alpha, "b"),
            reaction, flux, mu0, k_star,
        )

    return InstanceFamily("constant", build, "exact",
                          params=dict(N=dimension, mu0=mu0, alpha=alpha, k_star=k_star))


def ramp_family(dimension=2, mu0=1.0, reaction=None, flux=None, k_star=0.5, k=1.5):
    reaction = reaction or linear_reaction()
    flux = flux or constant_flux()

    def build(R):
        return ProblemInstance(
            dimension, R, ramp_field(R, k_star, k), ramp_field(R, k_star, k, scale=mu0),
            reaction, flux, mu0, k_star,
        )

    return InstanceFamily("ramp", build, "exact",
                          params=dict(N=dimension, mu0=mu0, k_star=k_star, k=k))


def inconspicuous_family(dimension=2, mu0=1.0, reaction=None, flux=None, k_star=0.5):
    reaction = reaction or linear_reaction()
    flux = flux or constant_flux()

    def build(R):
        return ProblemInstance(
            dimension, R, inconspicuous_field(dimension, R),
            inconspicuous_field(dimension, R, scale=mu0),
            reaction, flux, mu0, k_star,
        )

    return InstanceFamily("inconspicuous", build, "exact",
                          params=dict(N=dimension, mu0=mu0, k_star=k_star))


def power_perturbed_family(dimension=2, mu0=1.0, mu_star=0.3, tau_star=0.5, alpha=1.0,
                           reaction=None, flux=None, k_star=0.5):
    """Constant coefficients with b(R)/a(R) = mu0 + mu_star * R**(-tau_star)."""
    reaction = reaction or linear_reaction()
    flux = flux or constant_flux()

    def build(R):
        ratio = mu0 + mu_star * R ** (-tau_star)
        if not ratio > 0:
            raise DegenerateCoefficientError(f"b(R)/a(R) = {ratio} is not positive at R={R}")
        return ProblemInstance(
            dimension, R, constant_field(alpha, "a"), constant_field(alpha * ratio, "b"),
            reaction, flux, mu0, k_star,
        )

    return InstanceFamily("power_perturbed", build, "power_perturbed", mu_star, tau_star,
                          params=dict(N=dimension, mu0=mu0, mu_star=mu_star,
                                      tau_star=tau_star, alpha=alpha, k_star=k_star))


# --------------------------------------------------------------------------
# operations


def delta_F(f: Reaction, t: float, atol: float = 1e-12) -> float:
    """F(t) - F(theta0), the primitive of f measured from its root."""
    t = float(t)
    if not math.isfinite(t):
        raise EvaluationError(f"evaluation failure: delta_F at t={t!r}")
    theta0 = float(f.root)
    if t == theta0:
        return 0.0
    out = integrate.quad(lambda s: float(f(s)), theta0, t, epsabs=atol, epsrel=0.0,
                         limit=200, full_output=1)
    val, err = out[0], out[1]
    # a fourth element (message) is only returned when QUADPACK flags a problem;
    # for large |F| the absolute target falls below rounding, so allow that level
    if len(out) > 3 and err > max(atol, 64 * np.finfo(float).eps * abs(val)):
        raise QuadratureError(f"quadrature failure for delta_F at t={t}: {out[3]}")
    return float(val)


def delta_F_array(f: Reaction, t) -> np.ndarray:
    """Vectorised F(t) - F(theta0) by 40-point Gauss-Legendre on [theta0, t].

    Accurate to rounding for the smooth reactions used here; cross-checked
    against :func:`delta_F` in the tests.
    """
    t = np.asarray(t, dtype=float)
    theta0 = float(f.root)
    half = 0.5 * (t - theta0)
    nodes = theta0 + half[..., None] * (_GL_X + 1.0)
    vals = f(nodes)
    return half * (vals @ _GL_W)


def ratio_at_boundary(instance: ProblemInstance) -> float:
    R = instance.radius
    aR = float(instance.a(R))
    if aR == 0.0:
        raise DegenerateCoefficientError("degenerate coefficient: a(R) = 0")
    return float(instance.b(R)) / aR


# --------------------------------------------------------------------------
# assumption checks


@dataclass(frozen=True)
class ProbeSpec:
    n: int = 2048
    u_min: Optional[float] = None  # default theta0 - 1
    u_max: Optional[float] = None  # default theta0 + 1.5
    fd_step: float = 1e-5
    fd_rtol: float = 1e-6


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    worst_point: float
    worst_value: float
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "passed": self.passed,
            "checks": [
                dict(name=c.name, passed=c.passed, worst_point=c.worst_point,
                     worst_value=c.worst_value, detail=c.detail)
                for c in self.checks
            ],
        }


def _fd_check(name, fn, dfn, x, h, rtol):
    xp, xm = x + h, x - h
    fd = (fn(xp) - fn(xm)) / (xp - xm)
    d = dfn(x)
    err = np.abs(d - fd) / np.maximum(1.0, np.abs(d))
    i = int(np.argmax(err))
    return AssumptionCheck(name, bool(err[i] <= rtol), float(x[i]), float(err[i]),
                           f"max relative mismatch vs centred difference, step {h:g}")


def _band_quantity(inst: ProblemInstance, n: int) -> float:
    R = inst.radius
    r = np.linspace(inst.k_star * R, R, n, endpoint=False)
    q = R * (np.abs(inst.a.d1(r)) + np.abs(inst.b.d1(r))) + R**2 * np.abs(inst.a.d2(r))
    return float(np.max(q))


def validate_assumptions(instance: ProblemInstance, probe: ProbeSpec = ProbeSpec(),
                         family: Optional[InstanceFamily] = None) -> AssumptionReport:
    """Sample the structural assumptions on (f, e, a, b) and report each one."""
    inst = instance
    f, e = inst.f, inst.e
    theta0 = inst.theta0
    u_lo = theta0 - 1.0 if probe.u_min is None else probe.u_min
    u_hi = theta0 + 1.5 if probe.u_max is None else probe.u_max
    u = np.linspace(u_lo, u_hi, probe.n)
    r = np.linspace(0.0, inst.radius, probe.n)
    checks = []

    f0 = float(f(theta0))
    checks.append(AssumptionCheck("f(theta0)=0", abs(f0) <= 1e-12, theta0, f0))

    fp = f.d(u)
    i = int(np.argmin(fp))
    checks.append(AssumptionCheck("inf f' > 0", bool(fp[i] > 0), float(u[i]), float(fp[i])))

    ev = e(u)
    i = int(np.argmin(ev))
    checks.append(AssumptionCheck("e > 0", bool(ev[i] > 0), float(u[i]), float(ev[i])))

    ep = e.d(u)
    i = int(np.argmax(ep))
    checks.append(AssumptionCheck("e' <= 0", bool(ep[i] <= 0), float(u[i]), float(ep[i])))

    for lab, fld in (("a", inst.a), ("b", inst.b)):
        v = fld(r)
        i = int(np.argmin(v))
        checks.append(AssumptionCheck(
            f"{lab} bounded with positive infimum", bool(v[i] > 0 and np.max(v) < np.inf),
            float(r[i]), float(v[i]), f"sup sampled = {float(np.max(v)):.6g}"))

    w = inst.b(r) * r ** (inst.dimension - 1)
    dw = np.diff(w)
    slack = 1e-12 * max(1.0, float(np.max(np.abs(w))))
    i = int(np.argmin(dw))
    checks.append(AssumptionCheck("b*r^(N-1) nondecreasing", bool(dw[i] >= -slack),
                                  float(r[i + 1]), float(dw[i])))

    h, tol = probe.fd_step, probe.fd_rtol
    ri = r[1:-1]
    checks.append(_fd_check("a' consistent", inst.a, inst.a.d1, ri, h, tol))
    if inst.a.deriv2 is not None:
        checks.append(_fd_check("a'' consistent", inst.a.d1, inst.a.d2, ri, h, tol))
    else:
        checks.append(AssumptionCheck("a'' consistent", False, float("nan"), float("nan"),
                                      "a'' not supplied"))
    checks.append(_fd_check("b' consistent", inst.b, inst.b.d1, ri, h, tol))
    checks.append(_fd_check("f' consistent", f, f.d, u, h, tol))
    checks.append(_fd_check("e' consistent", e, e.d, u, h, tol))

    if inst.a.deriv2 is not None:
        scales = (1.0, 2.0, 4.0)
        qs = []
        for m in scales:
            other = family.at(inst.radius * m) if family is not None else _rescaled(inst, m)
            qs.append(_band_quantity(other, probe.n))
        # no growth under doubling; zero (constant coefficients) is admitted
        ok = all(math.isfinite(q) for q in qs) and qs[1] <= 2 * qs[0] + 1e-12 \
            and qs[2] <= 2 * qs[0] + 1e-12
        checks.append(AssumptionCheck("derivative band bounded", ok, inst.radius * 4,
                                      float(max(qs)), f"sampled at R,2R,4R: {qs}"))

    return AssumptionReport(tuple(checks))


def _rescaled(inst: ProblemInstance, m: float) -> ProblemInstance:
    return ProblemInstance(inst.dimension, inst.radius * m, inst.a, inst.b, inst.f, inst.e,
                           inst.mu0, inst.k_star)
