"""Finite-difference solver for the rescaled radial problem

    eps^2 (u'' + ((N-1)/s + alpha'/alpha) u') = (beta/alpha) f(u),  s in (0, 1)
    u'(0) = 0,   eps u'(1) = e(u(1)),

with eps = 1/R, alpha(s) = a(sR), beta(s) = b(sR) and primes in s.  The
production path (:func:`solve`) uses a piecewise-uniform mesh graded towards
s = 1 and damped Newton with continuation in eps.  :func:`oracle_solve` is an
independent uniform-mesh, flux-form discretisation with Richardson
extrapolation, used as ground truth in tests.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .asymptotics import solve_p0
from .coefficients import ProblemInstance, delta_F_array
from .errors import (
    InadmissibleTestFunctionError,
    NonConvergenceError,
    OutOfDomainError,
    SolutionRejectedError,
)
from .quadrature import gauss_panels, trapezoid_weights

log = logging.getLogger(__name__)

INVARIANT_TOL = 1e-8


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray
    layer_width: float
    coarse_count: int
    fine_count: int

    def __post_init__(self):
        s = self.nodes
        if s[0] != 0.0 or s[-1] != 1.0 or np.any(np.diff(s) <= 0):
            raise ValueError("mesh nodes must increase strictly from 0 to 1")
        if np.count_nonzero(s >= 1.0 - self.layer_width) < self.fine_count:
            raise ValueError("too few nodes inside the layer")


@dataclass(frozen=True)
class SolverConfig:
    coarse_count: int = 2000
    fine_count: int = 64000
    newton_tol: float = 1e-10
    max_newton_iters: int = 50
    continuation_steps: Optional[Sequence[float]] = None
    damping: float = 1.0
    layer_constant: Optional[float] = None  # K in sigma = K eps ln(1/eps)

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        steps = self.continuation_steps
        if steps is not None and np.any(np.diff(np.asarray(steps, dtype=float)) >= 0):
            raise ValueError("continuation_steps must be strictly decreasing")


@dataclass(frozen=True)
class SolutionProfile:
    mesh: Mesh
    u: np.ndarray
    du: np.ndarray
    eps: float
    instance: ProblemInstance
    residual: float = float("nan")
    bc_residual: float = float("nan")
    newton_iterations: tuple = ()
    continuation: tuple = ()
    error_estimate: Optional[float] = None

    @property
    def s(self) -> np.ndarray:
        return self.mesh.nodes

    @property
    def radius(self) -> float:
        return self.instance.radius

    @cached_property
    def _spline(self):
        return CubicHermiteSpline(self.mesh.nodes, self.u, self.du)

    def metadata(self) -> dict:
        inst = self.instance
        return dict(eps=self.eps, R=inst.radius, N=inst.dimension, mu0=inst.mu0,
                    k_star=inst.k_star, nodes=int(self.s.size),
                    layer_width=self.mesh.layer_width, residual=self.residual,
                    bc_residual=self.bc_residual,
                    newton_iterations=list(self.newton_iterations),
                    continuation=list(self.continuation),
                    error_estimate=self.error_estimate)


# --------------------------------------------------------------------------
# coefficient samples in the s variable


@dataclass(frozen=True)
class _Coeffs:
    alpha: np.ndarray
    beta: np.ndarray
    dalpha: np.ndarray
    dbeta: np.ndarray

    @property
    def ratio(self):
        return self.beta / self.alpha

    @property
    def dratio(self):
        return self.ratio * (self.dbeta / self.beta - self.dalpha / self.alpha)


def coefficient_samples(instance: ProblemInstance, s: np.ndarray) -> _Coeffs:
    R = instance.radius
    r = s * R
    return _Coeffs(instance.a(r), instance.b(r), R * instance.a.d1(r), R * instance.b.d1(r))


# --------------------------------------------------------------------------
# mesh


def decay_rate_estimate(instance: ProblemInstance, n: int = 2048) -> float:
    """Conservative decay rate sqrt(C1 C3) / 4 from sampled infima."""
    r = np.linspace(0.0, instance.radius, n)
    a, b = instance.a(r), instance.b(r)
    c1 = 0.5 * min(float(np.min(a / b)), float(np.min(b / a)))
    p0 = solve_p0(instance.f, instance.e, instance.mu0)
    theta0 = instance.theta0
    c3 = float(np.min(instance.f.d(np.linspace(theta0, theta0 + 2.0 * (p0 - theta0), n))))
    return math.sqrt(c1 * c3) / 4.0


def build_mesh(eps: float, coarse_count: int, fine_count: int, layer_constant: float) -> Mesh:
    sigma = min(0.5, layer_constant * eps * math.log(1.0 / eps))
    coarse = np.linspace(0.0, 1.0 - sigma, coarse_count + 1)
    fine = np.linspace(1.0 - sigma, 1.0, fine_count + 1)
    nodes = np.concatenate([coarse, fine[1:]])
    nodes[-1] = 1.0
    return Mesh(_frozen(nodes), sigma, coarse_count, fine_count)


# --------------------------------------------------------------------------
# graded-mesh discretisation


def _one_sided_weights(x: np.ndarray) -> np.ndarray:
    """Weights w with sum w_i g(x_i) ~ g'(0) for nodes x (exact for cubics)."""
    k = x.size
    V = np.vander(x, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs)


class _GradedSystem:
    """Residual and banded Jacobian of the graded-mesh scheme at fixed eps."""

    def __init__(self, instance: ProblemInstance, mesh: Mesh, eps: float):
        self.inst = instance
        self.eps = eps
        s = mesh.nodes
        self.s = s
        h = np.diff(s)
        hl, hr = h[:-1], h[1:]
        self.hl, self.hr = hl, hr
        # second derivative and centred first derivative weights, interior rows
        self.d2 = np.stack([2.0 / (hl * (hl + hr)), -2.0 / (hl * hr), 2.0 / (hr * (hl + hr))])
        self.d1 = np.stack([-hr / (hl * (hl + hr)), (hr - hl) / (hl * hr), hl / (hr * (hl + hr))])
        c = coefficient_samples(instance, s)
        self.q = c.ratio
        self.drift = (instance.dimension - 1) / s[1:-1] + c.dalpha[1:-1] / c.alpha[1:-1]
        self.h0 = h[0]
        # one-sided third-order derivative at s = 1 from the last four nodes
        self.bw = _one_sided_weights(s[-4:] - 1.0)
        self.N = instance.dimension

    def residual(self, u: np.ndarray) -> np.ndarray:
        e2, f = self.eps**2, self.inst.f
        G = np.empty_like(u)
        fu = f(u)
        G[0] = e2 * self.N * 2.0 * (u[1] - u[0]) / self.h0**2 - self.q[0] * fu[0]
        um, u0, up = u[:-2], u[1:-1], u[2:]
        lap = self.d2[0] * um + self.d2[1] * u0 + self.d2[2] * up
        grad = self.d1[0] * um + self.d1[1] * u0 + self.d1[2] * up
        G[1:-1] = e2 * (lap + self.drift * grad) - self.q[1:-1] * fu[1:-1]
        G[-1] = self.eps * (self.bw @ u[-4:]) - float(self.inst.e(u[-1]))
        return G

    def jacobian_banded(self, u: np.ndarray) -> np.ndarray:
        """Jacobian in solve_banded layout with (l, u) = (3, 1)."""
        n = u.size
        e2 = self.eps**2
        fp = self.inst.f.d(u)
        ab = np.zeros((5, n))
        # ab[1 + i - j, j] = J[i, j]
        diag = np.empty(n)
        sub = np.zeros(n)  # J[i, i-1] stored at ab[2, i-1]
        sup = np.zeros(n)  # J[i, i+1] stored at ab[0, i+1]
        diag[0] = -e2 * self.N * 2.0 / self.h0**2 - self.q[0] * fp[0]
        sup[1] = e2 * self.N * 2.0 / self.h0**2
        lo = e2 * (self.d2[0] + self.drift * self.d1[0])
        mid = e2 * (self.d2[1] + self.drift * self.d1[1]) - self.q[1:-1] * fp[1:-1]
        hi = e2 * (self.d2[2] + self.drift * self.d1[2])
        diag[1:-1] = mid
        sub[:n - 2] = lo          # rows 1..n-2, columns 0..n-3
        sup[2:] = hi              # rows 1..n-2, columns 2..n-1
        # last row: columns n-3, n-2, n-1
        diag[-1] = self.eps * self.bw[3] - float(self.inst.e.d(u[-1]))
        sub[n - 2] = self.eps * self.bw[2]
        ab[3, n - 3] = self.eps * self.bw[1]
        ab[4, n - 4] = self.eps * self.bw[0]
        ab[0] = sup
        ab[1] = diag
        ab[2] = sub
        return ab

    def rounding_floor(self, u: np.ndarray) -> float:
        """Residual level reachable in floating point: the eps^2/h^2 rows
        amplify rounding of u by their absolute coefficient sums."""
        scale = float(np.max(np.abs(self.jacobian_banded(u)).sum(axis=0)))
        return 16.0 * np.finfo(float).eps * scale * max(1.0, float(np.max(np.abs(u))))

    def derivative(self, u: np.ndarray) -> np.ndarray:
        du = np.empty_like(u)
        du[0] = 0.0
        du[1:-1] = self.d1[0] * u[:-2] + self.d1[1] * u[1:-1] + self.d1[2] * u[2:]
        du[-1] = self.bw @ u[-4:]
        return du


def _newton(residual: Callable, step: Callable, u0: np.ndarray, tol: float, max_iters: int,
            damping: float):
    """Damped Newton: halve the step until the max-norm residual decreases."""
    u = u0.copy()
    G = residual(u)
    res = float(np.max(np.abs(G)))
    it = 0
    while res > tol:
        if it >= max_iters:
            raise NonConvergenceError(f"nonconvergence after {it} Newton steps", res)
        delta = step(u, G)
        lam = damping
        for _ in range(21):
            trial = u + lam * delta
            G_trial = residual(trial)
            res_trial = float(np.max(np.abs(G_trial)))
            if np.isfinite(res_trial) and res_trial < res:
                break
            lam *= 0.5
        else:
            raise NonConvergenceError(f"nonconvergence: line search failed at step {it}", res)
        u, G, res = trial, G_trial, res_trial
        it += 1
    # one polishing step pushes the residual to rounding level
    delta = step(u, G)
    trial = u + delta
    G_trial = residual(trial)
    res_trial = float(np.max(np.abs(G_trial)))
    if np.isfinite(res_trial) and res_trial <= res:
        u, res = trial, res_trial
    return u, res, it


def _continuation_sequence(eps_target: float, steps) -> list:
    if steps is not None:
        seq = [float(x) for x in steps if x > eps_target]
        return seq + [eps_target]
    seq, x = [], 0.5
    while x > eps_target * (1 + 1e-12):
        seq.append(x)
        x *= 0.5
    return seq + [eps_target]


def _initial_guess(instance: ProblemInstance, s: np.ndarray, eps: float) -> np.ndarray:
    theta0 = instance.theta0
    p0 = solve_p0(instance.f, instance.e, instance.mu0)
    rate = math.sqrt(instance.mu0 * float(instance.f.d(p0)))
    return theta0 + (p0 - theta0) * np.exp(-(1.0 - s) * rate / eps)


def solve(instance: ProblemInstance, config: SolverConfig = SolverConfig()) -> SolutionProfile:
    """Solve the rescaled problem for eps = 1/R on a layer-graded mesh.

    Continuation runs from eps = 0.5 (or ``config.continuation_steps``) down to
    the target, warm-starting each step.  The coefficients are those of the
    target radius throughout; eps only scales the diffusion and the flux.
    """
    eps_t = instance.eps
    if eps_t > 0.5:
        raise ValueError(f"eps = 1/R = {eps_t} exceeds 0.5; not a perturbative regime")
    K = config.layer_constant or 4.0 / decay_rate_estimate(instance)
    pending = _continuation_sequence(eps_t, config.continuation_steps)
    done, iters = [], []
    u_prev, s_prev = None, None
    last_res = float("nan")
    failures = 0
    while pending:
        eps = pending[0]
        mesh = build_mesh(eps, config.coarse_count, config.fine_count, K)
        system = _GradedSystem(instance, mesh, eps)
        guess = (_initial_guess(instance, mesh.nodes, eps) if u_prev is None
                 else np.interp(mesh.nodes, s_prev, u_prev))

        def step(u, G, _sys=system):
            return solve_banded((3, 1), _sys.jacobian_banded(u), -G)

        try:
            tol = max(config.newton_tol, system.rounding_floor(guess))
            u, res, it = _newton(system.residual, step, guess, tol,
                                 config.max_newton_iters, config.damping)
        except NonConvergenceError as exc:
            last_res = exc.last_residual
            failures += 1
            prev = done[-1] if done else None
            if prev is None or failures > 8:
                raise NonConvergenceError(
                    f"nonconvergence at eps={eps:g} (R={1 / eps:g}); last residual "
                    f"{exc.last_residual:.3g}", exc.last_residual) from exc
            pending.insert(0, math.sqrt(prev * eps))
            log.debug("continuation step eps=%g failed; inserting %g", eps, pending[0])
            continue
        log.debug("eps=%.6g: %d Newton steps, residual %.3g", eps, it, res)
        pending.pop(0)
        done.append(eps)
        iters.append(it)
        u_prev, s_prev, last_res = u, mesh.nodes, res

    du = system.derivative(u_prev)
    bc = abs(eps_t * du[-1] - float(instance.e(u_prev[-1])))
    profile = SolutionProfile(mesh, _frozen(u_prev), _frozen(du), eps_t, instance,
                              residual=last_res, bc_residual=bc,
                              newton_iterations=tuple(iters), continuation=tuple(done))
    check_profile(profile, tol=max(INVARIANT_TOL, config.newton_tol))
    return profile


def check_profile(profile: SolutionProfile, tol: float = INVARIANT_TOL) -> None:
    """Raise SolutionRejectedError if a structural property fails."""
    inst = profile.instance
    u, du, s = profile.u, profile.du, profile.s
    problems = []
    if np.min(u) < inst.theta0 - tol:
        problems.append(f"u below theta0 by {inst.theta0 - np.min(u):.3g}")
    if np.min(np.diff(u)) < -tol:
        problems.append("u not nondecreasing")
    c = coefficient_samples(inst, s)
    flux = s ** (inst.dimension - 1) * c.alpha * du
    if np.min(np.diff(flux)) < -tol * max(1.0, float(np.max(np.abs(flux)))):
        problems.append("s^(N-1) alpha u' not nondecreasing")
    if profile.bc_residual > tol:
        problems.append(f"boundary residual {profile.bc_residual:.3g}")
    if problems:
        raise SolutionRejectedError("solution rejected: " + "; ".join(problems))


def evaluate(profile: SolutionProfile, s):
    """Piecewise-cubic Hermite values (u, u') at s in [0, 1]."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > 1.0) or not np.all(np.isfinite(s_arr)):
        raise OutOfDomainError(f"out of domain: s must lie in [0, 1], got {s!r}")
    sp_ = profile._spline
    u, du = np.atleast_1d(sp_(s_arr)), np.atleast_1d(sp_(s_arr, 1))
    # at a mesh node hand back the stored values, not a rounded re-evaluation
    flat = np.atleast_1d(s_arr)
    idx = np.clip(np.searchsorted(profile.s, flat), 0, profile.s.size - 1)
    hit = profile.s[idx] == flat
    u[hit], du[hit] = profile.u[idx[hit]], profile.du[idx[hit]]
    u, du = u.reshape(s_arr.shape), du.reshape(s_arr.shape)
    if np.ndim(s) == 0:
        return float(u), float(du)
    return u, du


# --------------------------------------------------------------------------
# independent oracle


class _FluxSystem:
    """Uniform-mesh flux-form scheme: eps^2 (s^(N-1) alpha u')' = s^(N-1) beta f(u).

    Uses only a and b (never their derivatives), half cells at both ends and
    the Neumann flux e(u)/eps injected at s = 1.
    """

    def __init__(self, instance: ProblemInstance, M: int, eps: float):
        self.inst, self.eps, self.M = instance, eps, M
        N = instance.dimension
        R = instance.radius
        s = np.linspace(0.0, 1.0, M + 1)
        h = 1.0 / M
        faces = 0.5 * (s[1:] + s[:-1])
        self.s, self.h = s, h
        self.kappa = faces ** (N - 1) * instance.a(faces * R)
        lo = np.concatenate([[0.0], faces])
        hi = np.concatenate([faces, [1.0]])
        self.vol = (hi**N - lo**N) / N
        self.src = instance.b(s * R)
        self.kappa_end = float(instance.a(R))

    def residual(self, u):
        e2 = self.eps**2
        flux = self.kappa * np.diff(u) / self.h
        div = np.zeros_like(u)
        div[:-1] += flux
        div[1:] -= flux
        div[-1] += self.kappa_end * float(self.inst.e(u[-1])) / self.eps
        return e2 * div - self.vol * self.src * self.inst.f(u)

    def jacobian(self, u):
        e2 = self.eps**2
        k = e2 * self.kappa / self.h
        main = np.zeros_like(u)
        main[:-1] -= k
        main[1:] -= k
        main -= self.vol * self.src * self.inst.f.d(u)
        main[-1] += e2 * self.kappa_end * float(self.inst.e.d(u[-1])) / self.eps
        return sp.diags([k, main, k], [-1, 0, 1], format="csc")

    def derivative(self, u):
        du = np.gradient(u, self.h, edge_order=2)
        du[0] = 0.0
        du[-1] = float(self.inst.e(u[-1])) / self.eps
        return du


def _flux_solve(instance: ProblemInstance, M: int, tol: float = 1e-12):
    eps_t = instance.eps
    u = None
    for eps in _continuation_sequence(eps_t, None):
        system = _FluxSystem(instance, M, eps)
        if u is None:
            guess = _initial_guess(instance, system.s, eps)
        else:
            guess = u

        def step(v, G, _sys=system):
            return spsolve(_sys.jacobian(v), -G)

        # residual rows carry a cell-volume factor ~ h; scale tolerance accordingly
        scale = float(abs(system.jacobian(guess)).sum(axis=1).max())
        floor = 16.0 * np.finfo(float).eps * scale * max(1.0, float(np.max(np.abs(guess))))
        u, res, _ = _newton(system.residual, step, guess, max(tol / M, floor), 60, 1.0)
    return system.s, u, system.derivative(u)


@dataclass(frozen=True)
class OracleResult:
    profile: SolutionProfile
    error_estimate: float
    coarse: np.ndarray = field(repr=False)
    fine: np.ndarray = field(repr=False)


def oracle_solve(instance: ProblemInstance, refinement: int = 16384) -> OracleResult:
    """Richardson-extrapolated uniform-mesh reference with ``refinement`` and
    ``2 * refinement`` intervals."""
    M = int(refinement)
    if M < 2:
        raise ValueError("refinement must be at least 2")
    if instance.eps > 0.5:
        raise ValueError("eps = 1/R exceeds 0.5")
    s1, u1, du1 = _flux_solve(instance, M)
    _, u2, du2 = _flux_solve(instance, 2 * M)
    u = (4.0 * u2[::2] - u1) / 3.0
    du = (4.0 * du2[::2] - du1) / 3.0
    err = float(np.max(np.abs(u - u2[::2])))
    mesh = Mesh(_frozen(s1), 1.0, M, M)
    bc = abs(instance.eps * du[-1] - float(instance.e(u[-1])))
    prof = SolutionProfile(mesh, _frozen(u), _frozen(du), instance.eps, instance,
                           bc_residual=bc, error_estimate=err)
    return OracleResult(prof, err, _frozen(u1), _frozen(u2[::2]))


def observed_order(instance: ProblemInstance, refinement: int = 4096, at: float = 1.0) -> float:
    """log2 of successive differences of u(at) on M, 2M, 4M uniform meshes."""
    M = int(refinement)
    vals = []
    for m in (M, 2 * M, 4 * M):
        s, u, _ = _flux_solve(instance, m)
        vals.append(float(np.interp(at, s, u)))
    return math.log2(abs(vals[0] - vals[1]) / abs(vals[1] - vals[2]))


# --------------------------------------------------------------------------
# diagnostics


def restrict_profile(profile: SolutionProfile, s0: float):
    """Nodes in [s0, 1] with s0 prepended (values interpolated there)."""
    s = profile.s
    keep = s > s0
    u0, du0 = evaluate(profile, s0)
    ss = np.concatenate([[s0], s[keep]])
    uu = np.concatenate([[u0], profile.u[keep]])
    dd = np.concatenate([[du0], profile.du[keep]])
    return ss, uu, dd


@dataclass(frozen=True)
class FirstIntegralTerms:
    lhs: float
    gradient_integral: float
    ratio_integral: float
    c_kstar: float
    full: float
    truncated: float


def first_integral_terms(profile: SolutionProfile) -> FirstIntegralTerms:
    inst = profile.instance
    eps, N, ks = profile.eps, inst.dimension, inst.k_star
    s, u, du = restrict_profile(profile, ks)
    c = coefficient_samples(inst, s)
    dF = delta_F_array(inst.f, u)
    w = trapezoid_weights(s)
    grad_int = float(w @ (eps**2 * ((N - 1) / s + c.dalpha / c.alpha) * du**2))
    ratio_int = float(w @ (dF * c.dratio))
    c_k = float(0.5 * eps**2 * du[0] ** 2 - c.ratio[0] * dF[0])
    e1 = float(inst.e(u[-1]))
    lhs = float(-0.5 * e1**2 + c.ratio[-1] * dF[-1])
    full = abs(lhs - (grad_int + ratio_int - c_k))
    truncated = float(abs(e1**2 - 2.0 * inst.mu0 * dF[-1]))
    return FirstIntegralTerms(lhs, grad_int, ratio_int, c_k, full, truncated)


def first_integral_residuals(profile: SolutionProfile):
    """(full, truncated) residuals of the first-integral identity at s = 1."""
    t = first_integral_terms(profile)
    return t.full, t.truncated


@dataclass(frozen=True)
class TestFunction:
    """Test function xi(r) supported in [support[0], support[1]]."""

    value: Callable
    deriv: Callable
    support: tuple

    __test__ = False  # not a pytest class


def bump(center: float, halfwidth: float, amplitude: float = 1.0) -> TestFunction:
    def value(r):
        x = (np.asarray(r, dtype=float) - center) / halfwidth
        inside = np.abs(x) < 1.0
        xi = np.where(inside, 1.0 - x**2, 1.0)
        return np.where(inside, amplitude * np.exp(-1.0 / xi), 0.0)

    def deriv(r):
        x = (np.asarray(r, dtype=float) - center) / halfwidth
        inside = np.abs(x) < 1.0
        xi = np.where(inside, 1.0 - x**2, 1.0)
        v = np.where(inside, amplitude * np.exp(-1.0 / xi), 0.0)
        return v * (-2.0 * x / xi**2) / halfwidth

    return TestFunction(value, deriv, (center - halfwidth, center + halfwidth))


def scaled(xi: TestFunction, factor: float) -> TestFunction:
    return TestFunction(lambda r: factor * xi.value(r), lambda r: factor * xi.deriv(r),
                        xi.support)


def stability_form(profile: SolutionProfile, xi: TestFunction, panels: int = 400) -> float:
    """Q_u[xi] = int_0^R (a xi'^2 + b f'(u) xi^2) r^(N-1) dr for compactly supported xi."""
    inst = profile.instance
    R = inst.radius
    lo, hi = xi.support
    if not (0.0 < lo < hi < R):
        raise InadmissibleTestFunctionError(
            f"inadmissible test function: support [{lo}, {hi}] must lie strictly inside (0, {R})")
    r, w = gauss_panels(lo, hi, panels)
    u, _ = evaluate(profile, r / R)
    integrand = (inst.a(r) * xi.deriv(r) ** 2 + inst.b(r) * inst.f.d(u) * xi.value(r) ** 2)
    return float(w @ (integrand * r ** (inst.dimension - 1)))
