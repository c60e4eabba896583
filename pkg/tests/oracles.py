"""Independent reference values used by the tests.

Nothing here imports the package: the exact solutions come from modified
Bessel functions and the roots from scipy's Brent solver.
"""

import math

import numpy as np
from scipy import integrate, optimize
from scipy.special import ive


def exact_linear_profile(dimension, radius, r, ratio=1.0, slope=1.0, intercept=1.0,
                         flux_slope=0.0):
    """Exact solution of (r^(N-1) u')' = ratio * slope * r^(N-1) u on [0, R] with
    u'(R) = intercept - flux_slope * u(R) (a = 1, b = ratio, theta0 = 0).

    The radial solutions regular at 0 are c r^-nu I_nu(k r), nu = N/2 - 1.
    """
    nu = dimension / 2.0 - 1.0
    k = math.sqrt(ratio * slope)
    R = float(radius)
    r = np.asarray(r, dtype=float)
    # phi(r) / phi(R) and phi'(R) / phi(R), with exponential scaling removed
    phi_R = ive(nu, k * R)
    dphi_R = k * ive(nu + 1, k * R)
    with np.errstate(divide="ignore", invalid="ignore"):
        shape = np.where(r > 0, (R / np.maximum(r, 1e-300)) ** nu
                         * ive(nu, k * r) * np.exp(k * (r - R)) / phi_R, np.nan)
    # value at r = 0: lim r^-nu I_nu(kr) = (k/2)^nu / Gamma(nu+1)
    at0 = (k / 2.0) ** nu / math.gamma(nu + 1.0) * R**nu * math.exp(-k * R) / phi_R
    shape = np.where(r > 0, shape, at0)
    c = intercept / (dphi_R / phi_R + flux_slope)  # u(R)
    return c * shape


def exact_linear_boundary(dimension, radius, ratio=1.0, intercept=1.0, flux_slope=0.0):
    """(u(R), u'(R)) of :func:`exact_linear_profile`."""
    uR = float(exact_linear_profile(dimension, radius, [radius], ratio, 1.0, intercept,
                                    flux_slope)[0])
    return uR, intercept - flux_slope * uR


def brent_p0(f_primitive, e, mu0, hi=50.0):
    """Root of e(p) - sqrt(2 mu0 F(p)) by Brent's method, F measured from theta0 = 0."""
    return optimize.brentq(lambda p: e(p) - math.sqrt(2 * mu0 * f_primitive(p)), 1e-12, hi,
                           xtol=1e-15, rtol=1e-15)


def tanh_sinh_integral(g, a, b):
    """Reference integral by scipy's tanh-sinh rule (never evaluates the endpoints)."""
    res = integrate.tanhsinh(np.vectorize(g), a, b, atol=1e-14, rtol=1e-14)
    return float(res.integral)
