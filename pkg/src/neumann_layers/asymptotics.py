"""Closed-form boundary-layer asymptotics.

Everything here is a function of the reaction f, the flux e, the reference
ratio mu0 and the coefficient values at r = R.  The leading boundary value p0
solves ``e(p0) = sqrt(2 mu0 (F(p0) - F(theta0)))``; the second-order term is
``C0 * H(R)`` with the curvature term
``H(R) = (N-1)/R + (a'(R)/a(R) + b'(R)/b(R)) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .coefficients import (
    BoundaryFlux,
    InstanceFamily,
    ProblemInstance,
    Reaction,
    delta_F,
    ratio_at_boundary,
)
from .errors import (
    InconsistentConstantsError,
    InvalidExponentError,
    ModeError,
    QuadratureError,
    RootBracketingError,
)
from .quadrature import adaptive_midpoint

MODES = ("theorem1", "perturbed")
_BRACKET_LIMIT = 1e6


@dataclass(frozen=True)
class LayerConstants:
    theta0: float
    mu0: float
    p0: float
    e_p0: float
    de_p0: float
    f_p0: float
    dF: float
    C0: float
    mass_u: float
    mass_grad: float
    sqrt_integral: float  # int_{theta0}^{p0} sqrt(2 (F - F(theta0))) dt

    @property
    def perturbation_coefficient(self) -> float:
        """d p0 / d mu0, the sensitivity of the boundary value to b(R)/a(R)."""
        return -self.dF / (self.mu0 * self.f_p0 - self.e_p0 * self.de_p0)

    def to_dict(self):
        d = asdict(self)
        d["perturbation_coefficient"] = self.perturbation_coefficient
        return d


@dataclass(frozen=True)
class BoundaryPrediction:
    u_R: float
    du_R: float
    mode: str
    correction_u: float
    H: float
    perturbation_u: float = 0.0

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class RegimeReport:
    tau_star: float
    mu_star: float
    radius: float
    regime: str
    leading_correction_u: float
    leading_correction_du: float
    decay_exponent: float
    sign_u: int
    sign_du: int

    def to_dict(self):
        return asdict(self)


# --------------------------------------------------------------------------
# p0


def _root_residual(f: Reaction, e: BoundaryFlux, mu0: float, p: float) -> float:
    return float(e(p)) - math.sqrt(2.0 * mu0 * max(delta_F(f, p), 0.0))


def _bisect_p0(f, e, mu0):
    theta0 = float(f.root)
    lo, step = theta0, 1.0
    hi = theta0 + step
    g_hi = _root_residual(f, e, mu0, hi)
    while g_hi > 0:
        lo = hi
        step *= 2.0
        hi = theta0 + step
        if step > _BRACKET_LIMIT:
            raise RootBracketingError(
                f"root bracketing failure: no sign change of e(p) - sqrt(2 mu0 dF(p)) "
                f"on [{theta0}, {theta0 + _BRACKET_LIMIT:g}]")
        g_hi = _root_residual(f, e, mu0, hi)
    if g_hi == 0.0:
        return hi, lo, hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g_mid = _root_residual(f, e, mu0, mid)
        if g_mid == 0.0:
            return mid, mid, mid
        if g_mid > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), lo, hi


def solve_p0_detail(f: Reaction, e: BoundaryFlux, mu0: float):
    """Return ``(bisection_root, newton_polished_root)``."""
    if not mu0 > 0:
        raise ValueError("mu0 must be positive")
    p_bis, lo, hi = _bisect_p0(f, e, mu0)
    p = p_bis
    g = _root_residual(f, e, mu0, p)
    for _ in range(4):
        if g == 0.0:
            break
        dF = delta_F(f, p)
        slope = float(e.d(p)) - mu0 * float(f(p)) / math.sqrt(2.0 * mu0 * dF)
        p_new = p - g / slope
        if not (lo - 1e-12 <= p_new <= hi + 1e-12):
            break
        g_new = _root_residual(f, e, mu0, p_new)
        if abs(g_new) >= abs(g):
            break
        p, g = p_new, g_new
    return p_bis, p


def solve_p0(f: Reaction, e: BoundaryFlux, mu0: float) -> float:
    """Unique p0 > theta0 with e(p0) = sqrt(2 mu0 (F(p0) - F(theta0)))."""
    return solve_p0_detail(f, e, mu0)[1]


# --------------------------------------------------------------------------
# constants


def curvature_term(instance: ProblemInstance) -> float:
    R = instance.radius
    aR, bR = float(instance.a(R)), float(instance.b(R))
    if not (aR > 0 and bR > 0):
        raise ValueError("curvature term needs a(R) > 0 and b(R) > 0")
    return (instance.dimension - 1) / R + 0.5 * (float(instance.a.d1(R)) / aR
                                                 + float(instance.b.d1(R)) / bR)


def _integrate(g, lo, hi, rule, tol):
    if rule == "gauss":
        out = integrate.quad(g, lo, hi, epsabs=tol, epsrel=0.0, limit=200, full_output=1)
        if len(out) > 3 and out[1] > tol:
            raise QuadratureError(f"quadrature failure on [{lo}, {hi}]: {out[3]}")
        return float(out[0])
    if rule == "midpoint":
        return adaptive_midpoint(g, lo, hi, tol=tol)
    raise ValueError(f"unknown rule {rule!r}")


def layer_integrals(f: Reaction, p0: float, rule: str = "gauss", tol: float = 1e-10):
    """The three profile integrals over [theta0, p0].

    Returns ``(I_ratio, I_mass, I_sqrt)`` with
    I_ratio = int sqrt(dF(t)/dF(p0)), I_mass = int (t-theta0)/sqrt(2 dF(t)),
    I_sqrt = int sqrt(2 dF(t)).  The integrands are evaluated at interior
    points only; at t = theta0 their limits are 0, 1/sqrt(f'(theta0)), 0.
    """
    theta0 = float(f.root)
    dF_p0 = delta_F(f, p0)
    fp0 = float(f.d(theta0))

    def ratio(t):
        return math.sqrt(max(delta_F(f, t), 0.0) / dF_p0) if t != theta0 else 0.0

    def mass(t):
        if t == theta0:
            return 1.0 / math.sqrt(fp0)
        return (t - theta0) / math.sqrt(2.0 * delta_F(f, t))

    def root2(t):
        return math.sqrt(2.0 * max(delta_F(f, t), 0.0)) if t != theta0 else 0.0

    return (_integrate(ratio, theta0, p0, rule, tol),
            _integrate(mass, theta0, p0, rule, tol),
            _integrate(root2, theta0, p0, rule, tol))


def constants_from(f: Reaction, e: BoundaryFlux, mu0: float, rule: str = "gauss",
                   tol: float = 1e-10, check: bool = True) -> LayerConstants:
    theta0 = float(f.root)
    p0 = solve_p0(f, e, mu0)
    e_p0, de_p0, f_p0 = float(e(p0)), float(e.d(p0)), float(f(p0))
    dF = delta_F(f, p0)
    i_ratio, i_mass, i_sqrt = layer_integrals(f, p0, rule, tol)
    C0 = i_ratio / (mu0 * f_p0 / e_p0 - de_p0)
    consts = LayerConstants(
        theta0=theta0, mu0=mu0, p0=p0, e_p0=e_p0, de_p0=de_p0, f_p0=f_p0, dF=dF, C0=C0,
        mass_u=i_mass / math.sqrt(mu0), mass_grad=math.sqrt(mu0) * i_sqrt,
        sqrt_integral=i_sqrt,
    )
    if check:
        check_constants(consts, f)
    return consts


def check_constants(c: LayerConstants, f: Reaction, n: int = 2048) -> None:
    problems = []
    if not c.p0 > c.theta0:
        problems.append(f"p0={c.p0} is not above theta0={c.theta0}")
    root_res = abs(c.e_p0 - math.sqrt(2.0 * c.mu0 * c.dF))
    if root_res > 1e-10:
        problems.append(f"root residual {root_res:.3g} exceeds 1e-10")
    if not c.C0 > 0:
        problems.append(f"C0={c.C0} is not positive")
    t = np.linspace(c.theta0, c.p0, n)
    fp = f.d(t)
    lo, hi = float(np.max(fp)) ** -0.5, float(np.min(fp)) ** -0.5
    ratio = c.mass_u * math.sqrt(c.mu0) / (c.p0 - c.theta0)
    if not (lo * (1 - 1e-9) <= ratio <= hi * (1 + 1e-9)):
        problems.append(f"normalised mass {ratio} outside [{lo}, {hi}]")
    if problems:
        raise InconsistentConstantsError("inconsistent constants: " + "; ".join(problems))


def compute_constants(instance: ProblemInstance, rule: str = "gauss") -> LayerConstants:
    return constants_from(instance.f, instance.e, instance.mu0, rule=rule)


# --------------------------------------------------------------------------
# predictions


def predict_boundary(instance: ProblemInstance, mode: str = "theorem1",
                     family: Optional[InstanceFamily] = None,
                     constants: Optional[LayerConstants] = None) -> BoundaryPrediction:
    """Two-term prediction of u(R) and u'(R).

    ``theorem1`` uses the curvature correction C0*H(R) alone.  ``perturbed``
    adds the first-order response of p0 to the ratio offset b(R)/a(R) - mu0.
    """
    if mode not in MODES:
        raise ModeError(f"unknown mode {mode!r}")
    if (mode == "theorem1" and family is not None and family.ratio_mode == "power_perturbed"
            and family.tau_star <= 1):
        raise ModeError("mode invalid: perturbation not negligible "
                        f"(tau_star={family.tau_star} <= 1); use mode 'perturbed'")
    c = constants or compute_constants(instance)
    H = curvature_term(instance)
    curv = c.C0 * H
    pert = 0.0
    exact = family is not None and family.ratio_mode == "exact"
    if mode == "perturbed" and not exact:
        pert = c.perturbation_coefficient * (ratio_at_boundary(instance) - instance.mu0)
    corr = curv + pert
    return BoundaryPrediction(u_R=c.p0 + corr, du_R=c.e_p0 + c.de_p0 * corr, mode=mode,
                              correction_u=corr, H=H, perturbation_u=pert)


def _sign(x: float) -> int:
    return int(np.sign(x))


def classify_regime(family: InstanceFamily, radius: float = 100.0,
                    constants: Optional[LayerConstants] = None) -> RegimeReport:
    """Which term dominates the second-order boundary correction."""
    if family.ratio_mode != "power_perturbed":
        raise ModeError("classify_regime needs a power_perturbed family")
    tau = family.tau_star
    if tau is None or not tau > 0:
        raise InvalidExponentError(f"invalid exponent tau_star={tau!r}")
    inst = family.at(radius)
    c = constants or compute_constants(inst)
    pert = c.perturbation_coefficient * family.mu_star * radius ** (-tau)
    curv = c.C0 * curvature_term(inst)
    if tau < 1:
        regime, lead = "perturbation_dominated", pert
        sign_u = _sign(c.perturbation_coefficient * family.mu_star)
    elif tau == 1:
        regime, lead = "balanced", pert + curv
        sign_u = _sign(lead)
    else:
        regime, lead = "curvature_dominated", curv
        sign_u = _sign(lead)
    return RegimeReport(
        tau_star=tau, mu_star=family.mu_star, radius=radius, regime=regime,
        leading_correction_u=lead, leading_correction_du=c.de_p0 * lead,
        decay_exponent=min(1.0, tau), sign_u=sign_u, sign_du=_sign(c.de_p0) * sign_u,
    )
