"""Small quadrature helpers that complement scipy.integrate.quad.

``adaptive_midpoint`` is an open rule (never samples the endpoints), used as
an independent second route for integrals with removable endpoint
singularities.
"""

from __future__ import annotations

import numpy as np

from .errors import QuadratureError


def adaptive_midpoint(g, a: float, b: float, tol: float = 1e-11, max_depth: int = 40) -> float:
    """Integrate g over [a, b] by adaptive trisection of the midpoint rule.

    Each panel compares the one-point midpoint value with the three-point
    value on its thirds (the centre sample is shared) and accepts the
    Richardson-corrected estimate ``M3 + (M3 - M1) / 8`` once the two agree.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    total = 0.0
    width0 = b - a
    stack = [(a, b, float(g(0.5 * (a + b))), 0)]
    while stack:
        lo, hi, gc, depth = stack.pop()
        w = hi - lo
        g1 = float(g(lo + w / 6.0))
        g3 = float(g(lo + 5.0 * w / 6.0))
        m1 = w * gc
        m3 = w / 3.0 * (g1 + gc + g3)
        local_tol = tol * w / width0
        if abs(m3 - m1) <= 8.0 * local_tol or depth >= max_depth:
            if depth >= max_depth and abs(m3 - m1) > 8.0 * local_tol:
                raise QuadratureError(
                    f"quadrature failure: midpoint refinement exhausted on [{lo}, {hi}]")
            total += m3 + (m3 - m1) / 8.0
            continue
        third = w / 3.0
        stack.append((lo, lo + third, g1, depth + 1))
        stack.append((lo + third, hi - third, gc, depth + 1))
        stack.append((hi - third, hi, g3, depth + 1))
    return sign * total


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    """Trapezoid weights on an arbitrary increasing grid."""
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    if x.size < 2:
        return w
    h = np.diff(x)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def gauss_panels(lo: float, hi: float, panels: int = 200, order: int = 10):
    """Nodes and weights of a composite Gauss-Legendre rule on [lo, hi]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
