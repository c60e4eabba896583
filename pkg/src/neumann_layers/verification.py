"""Compare numerical solutions with the boundary-layer asymptotics.

Every check here is a trend check over a sweep of radii: the asymptotic
remainders carry no rate, so "tends to zero" is read as "does not increase
over the last three radii".  Values below ``TREND_FLOOR`` count as zero,
since they are below the solver's own tolerance.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .asymptotics import (
    LayerConstants,
    compute_constants,
    predict_boundary,
    solve_p0,
)
from .bvp import (
    INVARIANT_TOL,
    SolutionProfile,
    SolverConfig,
    coefficient_samples,
    restrict_profile,
    evaluate,
    first_integral_terms,
    solve,
)
from .coefficients import (
    InstanceFamily,
    ProblemInstance,
    ProbeSpec,
    ratio_at_boundary,
    validate_assumptions,
)
from .errors import NeumannLayerError, PreconditionError, WindowExhaustedError
from .quadrature import trapezoid_weights

log = logging.getLogger(__name__)

TREND_FLOOR = INVARIANT_TOL
FULL_FIRST_INTEGRAL_TOL = 1e-6
DECAY_R_SQUARED = 0.99
UNDERFLOW_LEVEL = 1e-14
MIN_FIT_POINTS = 12
LAYER_WIDTHS_EXCLUDED = 10.0

CSV_COLUMNS = (
    "R", "u_R_numeric", "u_R_predicted", "du_R_numeric", "du_R_predicted",
    "scaled_residual_u", "scaled_residual_du", "truncated_first_integral",
    "lem3_lhs_A", "lem3_rhs_A", "lem3_lhs_B", "lem3_rhs_B",
    "mass_u_numeric", "mass_grad_numeric",
)


# --------------------------------------------------------------------------
# trend helpers


def nonincreasing(values: Sequence[float], floor: float = TREND_FLOOR) -> bool:
    """True if no step increases, treating pairs both below ``floor`` as equal."""
    v = [abs(x) for x in values]
    return all(b <= a or max(a, b) <= floor for a, b in zip(v, v[1:]))


def strictly_decreasing(values: Sequence[float], floor: float = TREND_FLOOR) -> bool:
    v = [abs(x) for x in values]
    return all(b < a or max(a, b) <= floor for a, b in zip(v, v[1:]))


def tends_to_zero(values: Sequence[float], leading: float, floor: float = TREND_FLOOR) -> bool:
    """Decreasing over the last three entries and finally below 20% of ``leading``."""
    tail = list(values)[-3:]
    return nonincreasing(tail, floor) and abs(tail[-1]) <= max(0.2 * abs(leading), floor)


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ln|y| against ln x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y, float)))
    return float(np.polyfit(lx, ly, 1)[0])


# --------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    M0_hat: float
    L0_hat: float
    r_squared: float
    window: tuple
    points: int

    def to_dict(self):
        return asdict(self)


def layer_width(instance: ProblemInstance) -> float:
    """Physical e-folding length 1/sqrt(mu0 f'(p0)) of the boundary layer."""
    p0 = solve_p0(instance.f, instance.e, instance.mu0)
    return 1.0 / math.sqrt(instance.mu0 * float(instance.f.d(p0)))


def _fit(x: np.ndarray, y: np.ndarray, window) -> DecayFit:
    keep = np.isfinite(y) & (y > UNDERFLOW_LEVEL)
    x, y = x[keep], y[keep]
    if x.size < MIN_FIT_POINTS:
        raise WindowExhaustedError(
            f"window exhausted: {x.size} usable samples in r in [{window[0]:g}, {window[1]:g}],"
            f" need {MIN_FIT_POINTS}")
    ly = np.log(y)
    slope, intercept = np.polyfit(x, ly, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-slope), float(math.exp(intercept)), r2, tuple(window), int(x.size))


def _window(profile: SolutionProfile):
    R = profile.radius
    lo, hi = 0.5 * R, R - LAYER_WIDTHS_EXCLUDED * layer_width(profile.instance)
    r = profile.s * R
    sel = (r >= lo) & (r <= hi)
    return sel, r, (lo, hi)


def fit_interior_decay(profile: SolutionProfile) -> DecayFit:
    """Fit ln(u(r) - theta0) = ln L0 - M0 (R - r) over the interior window."""
    sel, r, window = _window(profile)
    x = profile.radius - r[sel]
    y = profile.u[sel] - profile.instance.theta0
    return _fit(x, y, window)


def fit_gradient_decay(profile: SolutionProfile) -> DecayFit:
    """Same fit for (r/R)^(N-1) u'(r)."""
    sel, r, window = _window(profile)
    R, N = profile.radius, profile.instance.dimension
    x = R - r[sel]
    y = profile.s[sel] ** (N - 1) * profile.du[sel] / R
    return _fit(x, y, window)


# --------------------------------------------------------------------------
# functionals on one profile


@dataclass(frozen=True)
class Lem3Values:
    lhs_A: float
    rhs_A: float
    lhs_B: float
    rhs_B: float

    @property
    def gap_A(self) -> float:
        return abs(self.lhs_A - self.rhs_A)

    @property
    def gap_B(self) -> float:
        return abs(self.lhs_B - self.rhs_B)


def lem3_functionals(profile: SolutionProfile,
                     constants: Optional[LayerConstants] = None) -> Lem3Values:
    """Weighted gradient energy (A) and coefficient-variation energy (B) of the
    layer on [k*, 1], with their closed-form limits."""
    inst = profile.instance
    c = constants or compute_constants(inst)
    eps, N, mu0 = profile.eps, inst.dimension, inst.mu0
    terms = first_integral_terms(profile)
    # grad integral carries eps^2; lhs_A carries eps
    lhs_A = terms.gradient_integral / eps
    # F is measured from theta0, so the F(theta0) * beta(1)/alpha(1) term is zero
    lhs_B = (terms.ratio_integral - terms.c_kstar) / eps
    one = coefficient_samples(inst, np.array([1.0]))
    al, dal, dbe = float(one.alpha[0]), float(one.dalpha[0]), float(one.dbeta[0])
    rq = math.sqrt(mu0)
    rhs_A = rq * ((N - 1) + dal / al) * c.sqrt_integral
    rhs_B = (dbe / rq - rq * dal) / (2.0 * al) * c.sqrt_integral
    return Lem3Values(lhs_A, rhs_A, lhs_B, rhs_B)


def concentration_integrals(profile: SolutionProfile):
    """(I1, I2): integrals of u - theta0 and u'^2 over r in [k* R, R]."""
    inst = profile.instance
    s, u, du = restrict_profile(profile, inst.k_star)
    w = trapezoid_weights(s)
    R = profile.radius
    I1 = R * float(w @ (u - inst.theta0))
    I2 = float(w @ du**2) / R
    return I1, I2


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    family: InstanceFamily
    radii: tuple
    solver: SolverConfig = SolverConfig()
    mode: str = "theorem1"
    jobs: int = 1

    def __post_init__(self):
        r = [float(x) for x in self.radii]
        if not r:
            raise ValueError("radii must be non-empty")
        if any(x < 10 for x in r):
            raise ValueError("all radii must be >= 10")
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("radii must be strictly increasing")
        object.__setattr__(self, "radii", tuple(r))

    @property
    def exponent(self) -> float:
        if self.family.ratio_mode == "power_perturbed":
            return min(1.0, float(self.family.tau_star))
        return 1.0


@dataclass(frozen=True)
class SweepRow:
    R: float
    u_R_numeric: float
    u_R_predicted: float
    du_R_numeric: float
    du_R_predicted: float
    scaled_residual_u: float
    scaled_residual_du: float
    truncated_first_integral: float
    lem3_lhs_A: float
    lem3_rhs_A: float
    lem3_lhs_B: float
    lem3_rhs_B: float
    mass_u_numeric: float
    mass_grad_numeric: float
    full_first_integral: float = field(default=float("nan"), compare=False)


@dataclass
class VerificationReport:
    rows: list
    decay: list  # DecayFit or None per row
    decay_notes: list
    verdicts: dict
    constants: LayerConstants
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "metadata": dict(self.metadata),
            "constants": self.constants.to_dict(),
            "rows": [asdict(r) for r in self.rows],
            "decay": [d.to_dict() if d is not None else None for d in self.decay],
            "decay_notes": list(self.decay_notes),
            "verdicts": dict(self.verdicts),
            "passed": self.passed,
        }

    def csv_rows(self) -> list:
        return [[getattr(r, c) for c in CSV_COLUMNS] for r in self.rows]


def _validated(family: InstanceFamily, R: float) -> ProblemInstance:
    inst = family.at(R)
    report = validate_assumptions(inst, ProbeSpec(), family)
    if not report.passed:
        names = ", ".join(c.name for c in report.failures())
        raise PreconditionError(f"instance at R={R:g} fails assumptions: {names}")
    return inst


def _sweep_one(spec: SweepSpec, R: float, constants: LayerConstants):
    inst = _validated(spec.family, R)
    profile = solve(inst, spec.solver)
    pred = predict_boundary(inst, spec.mode, spec.family, constants)
    u_num = float(profile.u[-1])
    du_num = profile.eps * float(profile.du[-1])
    scale = R ** spec.exponent
    terms = first_integral_terms(profile)
    lem3 = lem3_functionals(profile, constants)
    I1, I2 = concentration_integrals(profile)
    row = SweepRow(
        R=R, u_R_numeric=u_num, u_R_predicted=pred.u_R, du_R_numeric=du_num,
        du_R_predicted=pred.du_R, scaled_residual_u=scale * abs(u_num - pred.u_R),
        scaled_residual_du=scale * abs(du_num - pred.du_R),
        truncated_first_integral=terms.truncated, lem3_lhs_A=lem3.lhs_A,
        lem3_rhs_A=lem3.rhs_A, lem3_lhs_B=lem3.lhs_B, lem3_rhs_B=lem3.rhs_B,
        mass_u_numeric=I1, mass_grad_numeric=I2, full_first_integral=terms.full,
    )
    try:
        fit, note = fit_interior_decay(profile), ""
    except WindowExhaustedError as exc:
        fit, note = None, str(exc)
    return row, fit, note


def _run_ordered(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def sweep(spec: SweepSpec) -> VerificationReport:
    """Solve at every radius and compare with the two-term predictions."""
    constants = compute_constants(_validated(spec.family, spec.radii[0]))

    def one(R):
        try:
            return _sweep_one(spec, R, constants)
        except NeumannLayerError as exc:
            raise type(exc)(f"sweep aborted at R={R:g}: {exc}") from exc

    results = _run_ordered(one, list(spec.radii), spec.jobs)
    rows = [r for r, _, _ in results]
    fits = [f for _, f, _ in results]
    notes = [n for _, _, n in results]
    last3 = slice(-3, None)
    gaps_A = [abs(r.lem3_lhs_A - r.lem3_rhs_A) for r in rows]
    gaps_B = [abs(r.lem3_lhs_B - r.lem3_rhs_B) for r in rows]
    verdicts = {
        "expansion_ok": nonincreasing([r.scaled_residual_u for r in rows][last3])
        and nonincreasing([r.scaled_residual_du for r in rows][last3]),
        "first_integral_ok": all(r.full_first_integral <= FULL_FIRST_INTEGRAL_TOL for r in rows),
        "decay_ok": all(f.r_squared >= DECAY_R_SQUARED for f in fits if f is not None),
    }
    fam = spec.family
    if fam.ratio_mode != "power_perturbed" or fam.tau_star > 1:
        # the energy limits assume b(R)/a(R) - mu0 = o(1/R)
        verdicts["lem3_A_ok"] = nonincreasing(gaps_A[last3])
        verdicts["lem3_B_ok"] = nonincreasing(gaps_B[last3])
    meta = dict(family=spec.family.name, params=dict(spec.family.params), mode=spec.mode,
                radii=list(spec.radii), exponent=spec.exponent,
                solver=_solver_meta(spec.solver))
    return VerificationReport(rows, fits, notes, verdicts, constants, meta)


def _solver_meta(cfg: SolverConfig) -> dict:
    d = asdict(cfg)
    if d["continuation_steps"] is not None:
        d["continuation_steps"] = list(d["continuation_steps"])
    return d


# --------------------------------------------------------------------------
# concentration


@dataclass
class ConcentrationTable:
    radii: list
    I1: list
    I2: list
    pointwise: list
    r0: float
    mass_u: float
    mass_grad: float
    verdicts: dict

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def relative_gaps(self):
        return ([abs(x - self.mass_u) / self.mass_u for x in self.I1],
                [abs(x - self.mass_grad) / self.mass_grad for x in self.I2])

    def to_dict(self):
        g1, g2 = self.relative_gaps()
        return dict(radii=self.radii, I1=self.I1, I2=self.I2, pointwise=self.pointwise,
                    r0=self.r0, mass_u=self.mass_u, mass_grad=self.mass_grad,
                    relative_gap_I1=g1, relative_gap_I2=g2, verdicts=self.verdicts,
                    passed=self.passed)


def concentration_check(family: InstanceFamily, radii: Sequence[float],
                        solver: SolverConfig = SolverConfig(), r0: float = 5.0,
                        jobs: int = 1) -> ConcentrationTable:
    """Layer integrals against the mass constants, plus decay of u(r0) - theta0."""
    radii = list(SweepSpec(family, tuple(radii), solver).radii)
    constants = compute_constants(_validated(family, radii[0]))

    def one(R):
        inst = _validated(family, R)
        if not r0 < R:
            raise ValueError(f"r0={r0} must lie inside the ball of radius {R}")
        p = solve(inst, solver)
        I1, I2 = concentration_integrals(p)
        return I1, I2, evaluate(p, r0 / R)[0] - inst.theta0

    out = _run_ordered(one, radii, jobs)
    I1 = [o[0] for o in out]
    I2 = [o[1] for o in out]
    pw = [o[2] for o in out]
    gap1 = [abs(x - constants.mass_u) for x in I1]
    gap2 = [abs(x - constants.mass_grad) for x in I2]
    verdicts = {
        "I1_converges": nonincreasing(gap1[-3:]),
        "I2_converges": nonincreasing(gap2[-3:]),
        "pointwise_decays": nonincreasing(pw, floor=0.0) and (len(pw) < 2 or pw[-1] < pw[0]),
    }
    return ConcentrationTable(radii, I1, I2, pw, r0, constants.mass_u, constants.mass_grad,
                              verdicts)


# --------------------------------------------------------------------------
# regime measurement


@dataclass
class RegimeMeasurement:
    radii: list
    offsets_u: list  # u(R) - p0
    offsets_du: list  # u'(R) - e(p0)
    exponent: float  # -slope of log |u(R) - p0| against log R
    expected_exponent: float
    predicted_sign_u: Optional[int]

    def to_dict(self):
        return asdict(self)


def measure_regime(family: InstanceFamily, radii: Sequence[float],
                   solver: SolverConfig = SolverConfig(), jobs: int = 1) -> RegimeMeasurement:
    """Measured decay exponent of |u(R) - p0| over a sweep of radii."""
    radii = list(SweepSpec(family, tuple(radii), solver).radii)
    c = compute_constants(_validated(family, radii[0]))

    def one(R):
        p = solve(_validated(family, R), solver)
        return float(p.u[-1]) - c.p0, p.eps * float(p.du[-1]) - c.e_p0

    out = _run_ordered(one, radii, jobs)
    du = [o[0] for o in out]
    dd = [o[1] for o in out]
    tau = family.tau_star if family.ratio_mode == "power_perturbed" else math.inf
    sign = None
    if tau < 1:
        # the ratio offset mu_star R^-tau dominates; p0 decreases in mu0
        sign = -int(np.sign(family.mu_star))
    return RegimeMeasurement(radii, du, dd, -loglog_slope(radii, du), min(1.0, tau), sign)


# --------------------------------------------------------------------------
# monotone comparisons


@dataclass
class ComparisonVerdict:
    case: str
    values: dict
    numeric: dict
    predicted: dict

    @property
    def passed(self) -> bool:
        return all(self.numeric.values())

    def to_dict(self):
        return dict(case=self.case, values=self.values, numeric=self.numeric,
                    predicted=self.predicted, passed=self.passed)


COMPARISON_CASES = ("I", "II_i", "II_ii")
_MAX_RADIUS_RATIO = 10.0


def _derivative_sum(inst: ProblemInstance) -> float:
    R = inst.radius
    return float(inst.a.d1(R)) / float(inst.a(R)) + float(inst.b.d1(R)) / float(inst.b(R))


def _exact_ratio(inst: ProblemInstance) -> bool:
    return abs(ratio_at_boundary(inst) - inst.mu0) <= 1e-12 * inst.mu0


def _check_preconditions(case: str, first: ProblemInstance, second: ProblemInstance,
                         c1: LayerConstants, c2: LayerConstants) -> None:
    bad = []
    if case not in COMPARISON_CASES:
        raise ValueError(f"unknown comparison case {case!r}")
    if not (_exact_ratio(first) and _exact_ratio(second)):
        bad.append("b(R)/a(R) must equal mu0 for both instances")
    if case == "I":
        if not first.radius < second.radius:
            bad.append("needs R1 < R2")
        elif second.radius / first.radius > _MAX_RADIUS_RATIO:
            bad.append(f"R2/R1 must stay below {_MAX_RADIUS_RATIO:g}")
        if first.mu0 != second.mu0:
            bad.append("both instances need the same mu0")
    else:
        if first.radius != second.radius:
            bad.append("both instances need the same radius")
        if case == "II_i" and not first.mu0 < second.mu0:
            bad.append("needs mu1 < mu2")
        if case == "II_ii":
            if first.mu0 != second.mu0:
                bad.append("needs equal ratios mu1 = mu2")
            if not _derivative_sum(first) > _derivative_sum(second):
                bad.append("needs a1'/a1 + b1'/b1 > a2'/a2 + b2'/b2 at R")
            if not (c1.de_p0 < 0 and c2.de_p0 < 0):
                bad.append("needs e'(p0) < 0")
    if bad:
        raise PreconditionError("case precondition violated: " + "; ".join(bad))


def compare_corollary_rk1(case: str, first: ProblemInstance, second: ProblemInstance,
                          solver: SolverConfig = SolverConfig(),
                          resolution: float = INVARIANT_TOL) -> ComparisonVerdict:
    """Check the monotone ordering of boundary values between two instances.

    Strict inequalities must hold by more than ``resolution`` (the solver's
    invariant tolerance); anything closer is numerically indistinguishable.
    In case I the derivative ordering is strict only when e'(p0) < 0.
    """
    c1, c2 = compute_constants(first), compute_constants(second)
    _check_preconditions(case, first, second, c1, c2)
    theta0 = first.theta0
    p1, p2 = solve(first, solver), solve(second, solver)
    u1, u2 = float(p1.u[-1]), float(p2.u[-1])
    d1, d2 = p1.eps * float(p1.du[-1]), p2.eps * float(p2.du[-1])
    q1, q2 = predict_boundary(first, constants=c1), predict_boundary(second, constants=c2)
    strict_du = case != "I" or c1.de_p0 < 0

    def orderings(a1, a2, b1, b2):
        du_ok = (b2 - b1 > resolution) if strict_du else (b2 - b1 >= -resolution)
        return {"u1(R) > u2(R)": a1 - a2 > resolution,
                "u2(R) > theta0": a2 - theta0 > resolution,
                "u1'(R) > 0": b1 > resolution,
                ("u1'(R) < u2'(R)" if strict_du else "u1'(R) <= u2'(R)"): du_ok}

    values = dict(R1=first.radius, R2=second.radius, mu1=first.mu0, mu2=second.mu0,
                  u1_R=u1, u2_R=u2, du1_R=d1, du2_R=d2, p0_1=c1.p0, p0_2=c2.p0,
                  u1_R_predicted=q1.u_R, u2_R_predicted=q2.u_R,
                  du1_R_predicted=q1.du_R, du2_R_predicted=q2.du_R)
    return ComparisonVerdict(case, values, orderings(u1, u2, d1, d2),
                             orderings(q1.u_R, q2.u_R, q1.du_R, q2.du_R))


# --------------------------------------------------------------------------
# plot data


def plot_series(report: VerificationReport) -> dict:
    """Two-column (x, y) series per check, keyed by a file-friendly name."""
    R = report.column("R")
    series = {
        "scaled_residual_u": report.column("scaled_residual_u"),
        "scaled_residual_du": report.column("scaled_residual_du"),
        "truncated_first_integral": report.column("truncated_first_integral"),
        "lem3_gap_A": [abs(r.lem3_lhs_A - r.lem3_rhs_A) for r in report.rows],
        "lem3_gap_B": [abs(r.lem3_lhs_B - r.lem3_rhs_B) for r in report.rows],
        "mass_u_numeric": report.column("mass_u_numeric"),
        "mass_grad_numeric": report.column("mass_grad_numeric"),
    }
    out = {k: list(zip(R, v)) for k, v in series.items()}
    fitted = [(x, f.M0_hat) for x, f in zip(R, report.decay) if f is not None]
    if fitted:
        out["decay_rate"] = fitted
    return out
