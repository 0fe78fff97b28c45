"""Aubin-Talenti bubbles on the Euclidean unit ball, their integrals and energy levels.

U_eps(x) = (N(N-2))^{(N-2)/4} (eps / (eps^2 + |x|^2))^{(N-2)/2} solves -Lap U = U^{2*-1}
on R^N with int |grad U|^2 = int U^{2*} = S^{N/2} for every eps.

Interior bubbles are cut off by psi(|x|) (1 on |x| <= rho, 0 on |x| >= 2 rho);
boundary bubbles are centred at x_eps with |x_eps| = 1 - eps^gamma - 2 eps^zeta and
cut off at radii eps^zeta, 2 eps^zeta about the centre.  Cutoff deviations are
computed from annulus and tail integrals so that O(eps^k) differences are never
obtained by subtracting two O(1) numbers.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .geometry import sphere_area

QUAD_RTOL = 1e-6
DEFAULT_SCHEDULE = (1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3)
INTEGRALS = ("grad2", "lp2star", "l2", "weighted_l2", "weighted_lq")


class Kind(str, enum.Enum):
    Interior = "Interior"
    Boundary = "Boundary"


class QuadratureError(RuntimeError):
    pass


def zeta_choice(q: float) -> float:
    """Cutoff exponent 1 - (1/3 + 3(1-q)/(4(2-3q)))/2 used for the boundary bubble (N=5)."""
    return 1.0 - 0.5 * (1.0 / 3.0 + 3.0 * (1.0 - q) / (4.0 * (2.0 - 3.0 * q)))


def boundary_exponent(q: float, N: int = 5, gamma_b: float = 0.5, zeta: Optional[float] = None) -> float:
    """beta (1 - gamma) + (zeta - 1)(N - (q+1)(N-2)) with beta = N - (q+1)(N-2)/2."""
    zeta = zeta_choice(q) if zeta is None else zeta
    beta = N - (q + 1) * (N - 2) / 2.0
    return beta * (1 - gamma_b) + (zeta - 1) * (N - (q + 1) * (N - 2))


@dataclass(frozen=True)
class BubbleSpec:
    kind: Kind
    N: int
    epsilon: float
    q: float
    lam: float
    rho_cutoff: float = 0.3
    zeta: Optional[float] = None
    gamma_b: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if int(self.N) != self.N or self.N < 3:
            raise ValueError("N must be an integer >= 3")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.q > 0:
            raise ValueError("q must be positive")
        if self.kind is Kind.Interior:
            if not (0 < self.rho_cutoff < 1.0 / 3.0):
                raise ValueError("interior cutoff radius must lie in (0, 1/3)")
        else:
            if self.zeta is None or self.gamma_b is None:
                raise ValueError("boundary bubbles need zeta and gamma_b")
            if not (0 < self.gamma_b < self.zeta < 1):
                raise ValueError("boundary bubbles need 0 < gamma_b < zeta < 1")
            if self.center_radius <= 0:
                raise ValueError("epsilon too large: the cutoff ball does not fit inside the unit ball")

    @property
    def inner_radius(self) -> float:
        return self.rho_cutoff if self.kind is Kind.Interior else self.epsilon ** self.zeta

    @property
    def center_radius(self) -> float:
        if self.kind is Kind.Interior:
            return 0.0
        return 1.0 - self.epsilon ** self.gamma_b - 2.0 * self.epsilon ** self.zeta

    def with_epsilon(self, eps: float) -> "BubbleSpec":
        return BubbleSpec(self.kind, self.N, eps, self.q, self.lam, self.rho_cutoff, self.zeta, self.gamma_b)

    @classmethod
    def boundary_default(cls, N: int, epsilon: float, q: float, lam: float) -> "BubbleSpec":
        return cls(Kind.Boundary, N, epsilon, q, lam, zeta=zeta_choice(q), gamma_b=0.5)


# ----------------------------------------------------------------------------- profiles


def _amp(N):
    return (N * (N - 2)) ** ((N - 2) / 4.0)


def talenti(s, eps, N):
    s = np.asarray(s, dtype=float)
    return _amp(N) * (eps / (eps * eps + s * s)) ** ((N - 2) / 2.0)


def talenti_d(s, eps, N):
    s = np.asarray(s, dtype=float)
    return -_amp(N) * eps ** ((N - 2) / 2.0) * (N - 2) * s * (eps * eps + s * s) ** (-N / 2.0)


def smoothstep(t):
    """Quintic C^2 step 6t^5 - 15t^4 + 10t^3 clipped to [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def smoothstep_d(t):
    inside = (t > 0) & (t < 1)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * t * t * (1 - t) ** 2, 0.0)


def cutoff(s, a):
    """1 on [0, a], 0 beyond 2a, quintic in between."""
    return 1.0 - smoothstep((np.asarray(s, dtype=float) - a) / a)


def cutoff_d(s, a):
    return -smoothstep_d((np.asarray(s, dtype=float) - a) / a) / a


def make_bubble(spec: BubbleSpec):
    """Callable v(x) for points x of shape (..., N) in the unit ball."""
    N, eps, a = spec.N, spec.epsilon, spec.inner_radius
    center = np.zeros(N)
    center[0] = spec.center_radius

    def v(x):
        x = np.asarray(x, dtype=float)
        d = np.linalg.norm(x - center, axis=-1)
        return cutoff(d, a) * talenti(d, eps, N)

    v.center = center
    v.support_radius = 2 * a
    return v


# ----------------------------------------------------------------------------- quadrature


@lru_cache(maxsize=16)
def _gl(n):
    return leggauss(n)


def _panels(a: float, b: float, scale: float, n_geo: int = 48):
    """Panel edges on [a, b], geometric from max(a, 1e-3 scale) so the eps-core is resolved."""
    if b <= a:
        return np.array([a, b])
    lo = max(a, 1e-3 * scale)
    if lo >= b:
        return np.array([a, b])
    geo = np.geomspace(lo, b, n_geo)
    return np.unique(np.concatenate([[a], geo]))


def _composite(f, edges, n):
    x, w = _gl(n)
    a, b = edges[:-1, None], edges[1:, None]
    pts = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    return float(np.sum(0.5 * (b - a) * w[None, :] * f(pts)))


def _integrate(f, edges, n=16, rtol=QUAD_RTOL, what=""):
    hist = []
    prev = _composite(f, edges, n)
    for k in range(6):
        n *= 2
        cur = _composite(f, edges, n)
        hist.append((n, cur))
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise QuadratureError(f"quadrature for {what} did not converge: {hist}")


def _radial_integral(g, a, b, eps, N, what=""):
    om = sphere_area(N)
    edges = _panels(a, b, eps)
    return om * _integrate(lambda s: g(s) * s ** (N - 1), edges, what=what)


def _tail_integral(g, a, N, what=""):
    """int_a^inf g(s) s^{N-1} ds via s = a / tau."""
    om = sphere_area(N)
    edges = np.geomspace(1e-8, 1.0, 40)
    edges = np.concatenate([[0.0], edges])

    def h(tau):
        tau = np.maximum(tau, 1e-300)
        s = a / tau
        return g(s) * s ** (N - 1) * a / (tau * tau)

    return om * _integrate(h, edges, what=what)


def sobolev_constant(N: int, R: float = 1e4) -> float:
    """S from S^{N/2} = int_{R^N} |grad U|^2 for U = U_1 centred at 0.

    Quadrature on [0, R] plus the tail int_R^inf, which for |U'|^2 ~ c^2 s^{2-2N}
    is evaluated in closed form from the exact expansion
    |U'|^2 s^{N-1} = A^2 (N-2)^2 s^{N+1} (1 + s^2)^{-N}.
    """
    if N < 3:
        raise ValueError("N must be >= 3")
    A = _amp(N)
    om = sphere_area(N)

    def g(s):
        return A * A * (N - 2) ** 2 * s ** (N + 1) * (1.0 + s * s) ** (-N)

    edges = _panels(0.0, R, 1.0, n_geo=80)
    core = om * _integrate(g, edges, what="S core")
    # (1 + s^2)^{-N} = s^{-2N} (1 + s^{-2})^{-N}: series in s^{-2}
    tail = 0.0
    coef = 1.0
    for k in range(8):
        e = N + 1 - 2 * N - 2 * k  # exponent of s
        tail += coef * R ** (e + 1) / (-(e + 1))
        coef *= -(N + k) / (k + 1)
    tail *= om * A * A * (N - 2) ** 2
    return (core + tail) ** (2.0 / N)


def sobolev_constant_closed_form(N: int) -> float:
    """pi N (N-2) (Gamma(N/2)/Gamma(N))^{2/N}."""
    return math.pi * N * (N - 2) * math.exp((2.0 / N) * (math.lgamma(N / 2.0) - math.lgamma(N)))


# ----------------------------------------------------------------------------- bubble integrals


def _h(s):
    return 2.0 / (1.0 - s * s)


def _beta(N, q):
    return N - (q + 1) * (N - 2) / 2.0


def _radial_parts(spec: BubbleSpec):
    """Translation-invariant integrals about the bubble centre (grad2, lp2star, l2, deviations)."""
    N, eps, a = spec.N, spec.epsilon, spec.inner_radius
    ps = 2.0 * N / (N - 2)
    U = lambda s: talenti(s, eps, N)
    dU = lambda s: talenti_d(s, eps, N)
    full = S_half(N)

    def grad_cut2(s):
        return (cutoff_d(s, a) * U(s) + cutoff(s, a) * dU(s)) ** 2

    ann_grad = _radial_integral(grad_cut2, a, 2 * a, eps, N, "grad annulus")
    tail_grad = _tail_integral(lambda s: dU(s) ** 2, a, N, "grad tail")
    grad_dev = ann_grad - tail_grad
    ann_p = _radial_integral(lambda s: (cutoff(s, a) ** ps - 1.0) * U(s) ** ps, a, 2 * a, eps, N, "2* annulus")
    tail_p = _tail_integral(lambda s: U(s) ** ps, 2 * a, N, "2* tail")
    p_dev = ann_p - tail_p
    l2 = (_radial_integral(lambda s: U(s) ** 2, 0.0, a, eps, N, "l2 core")
          + _radial_integral(lambda s: (cutoff(s, a) * U(s)) ** 2, a, 2 * a, eps, N, "l2 annulus"))
    return {"grad2": full + grad_dev, "grad2_dev": grad_dev, "lp2star": full + p_dev, "lp2star_dev": p_dev,
            "l2": l2}


def _weighted_interior(spec: BubbleSpec):
    N, eps, a, q = spec.N, spec.epsilon, spec.inner_radius, spec.q
    beta = _beta(N, q)
    v = lambda s: cutoff(s, a) * talenti(s, eps, N)
    wl2 = _radial_integral(lambda s: _h(s) ** 2 * v(s) ** 2, 0.0, 2 * a, eps, N, "h^2 v^2")
    wlq = _radial_integral(lambda s: _h(s) ** beta * v(s) ** (q + 1), 0.0, 2 * a, eps, N, "h^beta v^{q+1}")
    return wl2, wlq


def _weighted_boundary(spec: BubbleSpec, n_theta: int = 48):
    """Integrals with weights depending on |x|, in polar coordinates about the off-centre x_eps."""
    N, eps, a, q = spec.N, spec.epsilon, spec.inner_radius, spec.q
    beta = _beta(N, q)
    c = spec.center_radius
    om2 = sphere_area(N - 1)
    th, wth = _gl(n_theta)
    # theta panels on [0, pi]
    tedges = np.linspace(0.0, math.pi, 9)
    ta, tb = tedges[:-1, None], tedges[1:, None]
    T = (0.5 * (tb - ta) * th[None, :] + 0.5 * (ta + tb)).ravel()
    WT = (0.5 * (tb - ta) * wth[None, :]).ravel()
    sinw = WT * np.sin(T) ** (N - 2)
    cosT = np.cos(T)

    def weight_avg(s, power):
        s = np.asarray(s, dtype=float)
        r2 = c * c + s[..., None] ** 2 + 2 * c * s[..., None] * cosT
        return om2 * np.sum(sinw * (2.0 / (1.0 - r2)) ** power, axis=-1)

    v = lambda s: cutoff(s, a) * talenti(s, eps, N)
    edges = _panels(0.0, 2 * a, eps)
    wl2 = _integrate(lambda s: weight_avg(s, 2.0) * v(s) ** 2 * s ** (N - 1), edges, what="h^2 v^2 boundary")
    wlq = _integrate(lambda s: weight_avg(s, beta) * v(s) ** (q + 1) * s ** (N - 1), edges,
                     what="h^beta v^{q+1} boundary")
    return wl2, wlq


@lru_cache(maxsize=8)
def S_half(N: int) -> float:
    return sobolev_constant(N) ** (N / 2.0)


def bubble_integrals(spec: BubbleSpec) -> dict:
    """grad2, lp2star, l2, weighted_l2 (h^2 v^2), weighted_lq (h^beta v^{q+1}) plus the two cutoff deviations."""
    out = _radial_parts(spec)
    if spec.kind is Kind.Interior:
        wl2, wlq = _weighted_interior(spec)
    else:
        wl2, wlq = _weighted_boundary(spec)
    out["weighted_l2"] = wl2
    out["weighted_lq"] = wlq
    return out


# ----------------------------------------------------------------------------- estimates and fits


@dataclass
class BubbleEstimate:
    spec: BubbleSpec
    epsilon_schedule: list
    integral_values: list           # one dict per epsilon
    fitted_order: dict = field(default_factory=dict)
    log_factor_detected: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.epsilon_schedule, dtype=float)
        if len(e) < 6 or np.any(np.diff(e) >= 0) or e[0] / e[-1] < 100:
            raise ValueError("schedule must be strictly decreasing with >= 6 points spanning >= 2 decades")

    def column(self, name):
        return np.array([d[name] for d in self.integral_values])

    def to_csv(self, path):
        cols = ["epsilon"] + list(INTEGRALS) + ["grad2_dev", "lp2star_dev"]
        rows = [[e] + [d[c] for c in cols[1:]] for e, d in zip(self.epsilon_schedule, self.integral_values)]
        np.savetxt(path, np.array(rows), delimiter=",", header=",".join(cols), comments="", fmt="%.17g")

    def summary(self) -> dict:
        return {"spec": {k: (v.value if isinstance(v, enum.Enum) else v) for k, v in self.spec.__dict__.items()},
                "epsilon_schedule": list(self.epsilon_schedule), "fitted_order": self.fitted_order,
                "log_factor_detected": self.log_factor_detected}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def estimate(spec: BubbleSpec, schedule=DEFAULT_SCHEDULE, pool=None) -> BubbleEstimate:
    specs = [spec.with_epsilon(e) for e in schedule]
    vals = list(pool.map(bubble_integrals, specs)) if pool is not None else [bubble_integrals(s) for s in specs]
    est = BubbleEstimate(spec, list(schedule), vals)
    for name in ("grad2", "lp2star", "l2", "weighted_l2", "weighted_lq"):
        try:
            est.fitted_order[name], est.log_factor_detected[name] = fit_order(est, name)
        except ValueError:
            pass
    return est


def fit_order(est: BubbleEstimate, integral: str, drop: int = 2, log_gain: float = 0.25):
    """Slope of log|value - limit| against log eps; log factor by comparing residuals.

    The limit is S^{N/2} for grad2 and lp2star (whose deviations are stored
    directly) and 0 otherwise.  The slope always comes from the pure power
    model.  A |log eps| factor is reported when the model with that factor has
    residual below ``log_gain`` times the pure power residual; slowly decaying
    corrections (relative O(eps^{1/2})) can trigger it too.
    """
    eps = np.asarray(est.epsilon_schedule, dtype=float)[drop:]
    if integral in ("grad2", "lp2star"):
        y = np.abs(est.column(integral + "_dev"))[drop:]
    else:
        y = np.abs(est.column(integral))[drop:]
    if len(eps) < 4 or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError(f"degenerate regression for {integral}")
    x = np.log(eps)
    ly = np.log(y)
    A = np.column_stack([np.ones_like(x), x])
    c1, r1, *_ = np.linalg.lstsq(A, ly, rcond=None)
    c2, r2, *_ = np.linalg.lstsq(A, ly - np.log(np.abs(x)), rcond=None)
    res1 = float(np.sum((A @ c1 - ly) ** 2))
    res2 = float(np.sum((A @ c2 - (ly - np.log(np.abs(x)))) ** 2))
    return float(c1[1]), bool(res2 < log_gain * res1)


# ----------------------------------------------------------------------------- energy level of the lifted functional


def level_scalar_model(N: int) -> float:
    """max_t (t^2/2 - t^{2*}/2*) = 1/N, attained at t = 1."""
    ps = 2.0 * N / (N - 2)
    t = 1.0
    return t * t / 2 - t ** ps / ps


def lifted_fibering(vals: dict, N: int, q: float, lam: float):
    """Phi(t) = t^2/2 (grad2 - lam~ int h^2 v^2) - t^{2*}/2* int v^{2*} + t^{q+1}/(q+1) int h^beta v^{q+1}."""
    lam_t = lam - N * (N - 2) / 4.0
    A = vals["grad2"] - lam_t * vals["weighted_l2"]
    B = vals["lp2star"]
    C = vals["weighted_lq"]
    ps = 2.0 * N / (N - 2)

    def phi(t):
        return 0.5 * t * t * A - t ** ps / ps * B + t ** (q + 1) / (q + 1) * C

    def dphi_over_t(t):
        return A - t ** (ps - 2) * B + t ** (q - 1) * C

    return phi, dphi_over_t


def energy_threshold_check(spec: BubbleSpec, vals: Optional[dict] = None):
    """J~(t_eps v_eps) against (1/N) S^{N/2}; t_eps is the unique positive critical point of t -> J~(t v_eps)."""
    N, q = spec.N, spec.q
    if not q < 1:
        raise ValueError("the lifted energy check needs q < 1")
    if N == 5 and q <= 1.0 / 3.0 and spec.kind is not Kind.Boundary:
        raise ValueError("for N = 5 and q <= 1/3 the boundary bubble is required")
    vals = vals or bubble_integrals(spec)
    phi, g = lifted_fibering(vals, N, q, spec.lam)
    lo, hi = 1e-3, 1e3
    if not (g(lo) > 0 > g(hi)):
        raise ValueError("t_eps bracket failure")
    t = brentq(g, lo, hi, xtol=1e-14, rtol=1e-14)
    level = S_half(N) / N
    e = phi(t)
    return float(e), bool(e < level), float(t)
