"""Poincare ball primitives: conformal factor, distance, radius maps, radial measure, lift."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln


def sphere_area(N: int) -> float:
    """Surface area of the unit (N-1)-sphere, 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * math.exp(0.5 * N * math.log(math.pi) - gammaln(0.5 * N))


def conformal_factor(s):
    """h(s) = 2 / (1 - s^2) for a Euclidean radius s in [0, 1)."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s >= 1):
        raise ValueError("Euclidean radius must lie in [0, 1)")
    out = 2.0 / (1.0 - s * s)
    return out if out.ndim else float(out)


def _check_inside(x):
    x = np.asarray(x, dtype=float)
    if np.dot(x, x) >= 1.0:
        raise ValueError("point lies on or outside the unit sphere")
    return x


def geodesic_distance(x, y) -> float:
    """Hyperbolic distance between two points of the Poincare ball."""
    x = _check_inside(x)
    y = _check_inside(y)
    d2 = float(np.dot(x - y, x - y))
    den = (1.0 - np.dot(x, x)) * (1.0 - np.dot(y, y))
    # acosh(1 + z) = log1p(z + sqrt(z (z + 2))) is accurate for small z
    z = 2.0 * d2 / den
    return float(np.log1p(z + math.sqrt(z * (z + 2.0))))


def geodesic_to_euclidean(r):
    """Euclidean radius tanh(r/2) of the geodesic sphere of radius r about 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("geodesic radius must be nonnegative")
    out = np.tanh(0.5 * r)
    return out if out.ndim else float(out)


def euclidean_to_geodesic(s):
    """Inverse of :func:`geodesic_to_euclidean`: 2 artanh(s)."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s >= 1):
        raise ValueError("Euclidean radius must lie in [0, 1)")
    out = 2.0 * np.arctanh(s)
    return out if out.ndim else float(out)


def radial_measure_weight(N: int, r):
    """omega_{N-1} sinh^{N-1}(r): hyperbolic area of the geodesic sphere of radius r."""
    r = np.asarray(r, dtype=float)
    out = sphere_area(N) * np.sinh(r) ** (N - 1)
    return out if out.ndim else float(out)


def ball_volume_closed_form_3d(R: float) -> float:
    """Volume of the geodesic ball of radius R in B^3: 2 pi (sinh R cosh R - R)."""
    return 2.0 * math.pi * (math.sinh(R) * math.cosh(R) - R)


def lift_factor(N: int, r):
    """h^{(N-2)/2} evaluated at the Euclidean radius tanh(r/2); equals (2 cosh^2(r/2))^{(N-2)/2}."""
    r = np.asarray(r, dtype=float)
    return (2.0 * np.cosh(0.5 * r) ** 2) ** (0.5 * (N - 2))


def conformal_lift(r, u, N: int):
    """Map a radial profile u(r) on B^N to v(s) = h(s)^{(N-2)/2} u(2 artanh s).

    Returns (s, v) sampled on the induced Euclidean grid s = tanh(r/2).
    """
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.tanh(0.5 * r), lift_factor(N, r) * u


def conformal_unlift(s, v, N: int):
    """Inverse of :func:`conformal_lift`: returns (r, u)."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    r = 2.0 * np.arctanh(s)
    return r, v / lift_factor(N, r)
