"""Conformal lift to the Euclidean ball, boundary decay audits and the Pohozaev balance.

With v = h^{(N-2)/2} u, h = 2/(1-|x|^2), a radial solution of the hyperbolic
equation solves -Lap v - lt h^2 v = h^a v^p - h^b v^q on the unit ball
(lt = lambda - N(N-2)/4, a = N - (p+1)(N-2)/2, b = N - (q+1)(N-2)/2).
Testing with x.grad v and with v gives

    lt I(h^2 v^2) = -a/(p+1) I(h^a v^{p+1}) + b/(q+1) I(h^b v^{q+1}) + F/2,

where I(f) = int f (1+|x|^2)/(1-|x|^2) dx and F = int_{S^{N-1}} (dv/dnu)^2 >= 0.
All integrals are radial and evaluated on the lifted grid s = tanh(r/2).
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .closed_forms import (ProblemParams, Verdict, classify_regime, conformal_exponents, critical_exponent)
from .geometry import conformal_lift, sphere_area
from .radial import RadialFunction
from .solvers import Outcome, default_a_grid, shoot, _is_over, _is_under

DECAY_FLOOR = 1e-12
ANNULUS_SCHEDULE = tuple(np.geomspace(1e-1, 1e-3, 9))


class Marker(str, enum.Enum):
    CompactSupport = "CompactSupport"


class Variant(str, enum.Enum):
    Interior = "Interior"
    CriticalLambda = "CriticalLambda"


class DecayAuditError(ValueError):
    pass


@dataclass
class LiftedProfile:
    """v sampled at s_i = tanh(r_i/2); r is kept so that integrals use the r-trapezoid."""

    N: int
    r: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @classmethod
    def from_radial(cls, u: RadialFunction) -> "LiftedProfile":
        s, v = conformal_lift(u.r, u.values, u.grid.N)
        return cls(u.grid.N, np.asarray(u.r, dtype=float), s, v)

    @property
    def h(self) -> np.ndarray:
        # 2/(1-s^2) = 2 cosh^2(r/2), exact for large r
        return 2.0 * np.cosh(0.5 * self.r) ** 2

    def dv_ds(self) -> np.ndarray:
        """dv/ds = h dv/dr with second-order differences in r."""
        return self.h * np.gradient(self.v, self.r, edge_order=2)

    def _ds_weights(self) -> np.ndarray:
        """Trapezoid weights in r for int f omega s^{N-1} ds, using ds/dr = (1-s^2)/2."""
        w = np.zeros_like(self.r)
        dr = np.diff(self.r)
        w[:-1] += 0.5 * dr
        w[1:] += 0.5 * dr
        return w * sphere_area(self.N) * self.s ** (self.N - 1) / (2.0 * np.cosh(0.5 * self.r) ** 2)

    def integral(self, f) -> float:
        """int_B f dx for a radial integrand sampled on the lifted nodes."""
        return float(np.dot(self._ds_weights(), f))


def lift(u: RadialFunction) -> LiftedProfile:
    return LiftedProfile.from_radial(u)


# ----------------------------------------------------------------------------- decay


def _positive_support_end(u: np.ndarray, floor: float) -> int:
    """Index of the last node with u above floor (-1 if none)."""
    idx = np.nonzero(u > floor)[0]
    return int(idx[-1]) if len(idx) else -1


def lift_and_decay_audit(u: RadialFunction, params: ProblemParams, window: float = 0.2,
                         floor: float = DECAY_FLOOR, boundary_layer: float = 0.2):
    """Exponent k in v ~ (1-|x|^2)^k fitted on a ``window`` fraction of the grid.

    The last ``boundary_layer`` fraction of the nodes is excluded: there the
    Dirichlet truncation at r_max bends the discrete profile down (when the slow
    indicial root is 0 the correction is an additive constant ~ u(r_max)).
    Returns Marker.CompactSupport when u vanishes (below ``floor``) before the
    fit window.
    """
    lp = lift(u)
    M = len(lp.r) - 1
    end = _positive_support_end(u.values, floor)
    hi = int(round((1.0 - boundary_layer) * M))
    lo = int(round((1.0 - boundary_layer - window) * M))
    if end < lo:
        return Marker.CompactSupport
    hi = min(hi, end)
    sl = slice(lo, hi + 1)
    if hi - lo < 3:
        return Marker.CompactSupport
    # log(1 - s^2) = -2 log cosh(r/2), exact for large r
    x = -2.0 * (np.logaddexp(0.5 * lp.r[sl], -0.5 * lp.r[sl]) - math.log(2.0))
    y = np.log(lp.v[sl])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def decay_lower_bound(params: ProblemParams) -> float:
    """(1 + sqrt(1 - 4 lt))/2 for q > 1; the sublinear case has compact support."""
    lt, _, _ = conformal_exponents(params.N, params.p, params.q if params.q is not None else 2.0, params.lam)
    return 0.5 * (1.0 + math.sqrt(max(1.0 - 4.0 * lt, 0.0)))


@dataclass
class AnnulusReport:
    epsilons: list
    integrals: list
    slope: Optional[float]
    exact_zero: list
    slope_above_one: Optional[bool]


def annulus_gradient_audit(v: LiftedProfile, params: ProblemParams, schedule: Sequence[float] = ANNULUS_SCHEDULE
                           ) -> AnnulusReport:
    """int_{1-2e < |x| < 1-e} |grad v|^2 dx along a schedule of e, with its log-log slope."""
    lt, _, _ = conformal_exponents(params.N, params.p, params.q if params.q is not None else 2.0, params.lam)
    q = params.q
    if q is not None and ((q < 1 and lt > 1e-12) or (q > 1 and lt >= 0)):
        raise ValueError("annulus audit needs lambda <= N(N-2)/4 (q<1) or lambda < N(N-2)/4 (q>1)")
    s_max = float(v.s[-1])
    floor = DECAY_FLOOR * max(float(np.max(np.abs(v.v))), 1e-300)
    eps = [float(e) for e in schedule if 1.0 - e <= s_max]
    # |dv/ds|^2 s^{N-1} omega ds -> cumulative integral in s
    g = v.dv_ds() ** 2
    f = g * sphere_area(v.N) * v.s ** (v.N - 1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(v.s))])
    vals, zeros = [], []
    for e in eps:
        a, b = 1.0 - 2.0 * e, 1.0 - e
        val = float(np.interp(b, v.s, cum) - np.interp(a, v.s, cum))
        ia, ib = np.searchsorted(v.s, a), np.searchsorted(v.s, b, side="right")
        # beyond the support the regularized solve leaves values far below the decay floor
        zero = bool(np.all(np.abs(v.v[max(ia - 1, 0):min(ib + 1, len(v.v))]) <= floor))
        vals.append(0.0 if zero else val)
        zeros.append(zero)
    pos = [(e, x) for e, x in zip(eps, vals) if x > 0]
    slope = None
    if len(pos) >= 3:
        le, lx = np.log([p[0] for p in pos]), np.log([p[1] for p in pos])
        slope = float(np.polyfit(le, lx, 1)[0])
    return AnnulusReport(eps, vals, slope, zeros, None if slope is None else slope > 1.0)


# ----------------------------------------------------------------------------- Pohozaev


@dataclass
class PohozaevReport:
    lhs: float
    rhs_terms: tuple          # (-a/(p+1), I_p, b/(q+1), I_q)
    residual: float
    relative_residual: float
    boundary_flux: Optional[float]
    decay_fit: object
    annulus_orders: Optional[float]
    variant: str
    coefficients: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decay_fit"] = self.decay_fit.value if isinstance(self.decay_fit, Marker) else self.decay_fit
        d["rhs_terms"] = list(self.rhs_terms)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _one_sided_end_derivative(x: np.ndarray, y: np.ndarray) -> float:
    """Third-order one-sided derivative at the last node from the last four samples."""
    xs, ys = x[-4:], y[-4:]
    V = np.vander(xs - xs[-1], 4, increasing=True)
    coef = np.linalg.solve(V, ys)
    return float(coef[1])


def boundary_flux(v: LiftedProfile) -> float:
    """omega s^{N-1} (dv/ds)^2 at the outer grid radius (the sphere |x| = 1 in the limit)."""
    d = _one_sided_end_derivative(v.s, v.v)
    return sphere_area(v.N) * float(v.s[-1]) ** (v.N - 1) * d * d


def pohozaev_terms(v: LiftedProfile, params: ProblemParams) -> dict:
    N, p, q = v.N, params.p, params.q
    lt, a, b = conformal_exponents(N, p, q if q is not None else 2.0, params.lam)
    h = v.h
    g = np.cosh(v.r)  # (1+s^2)/(1-s^2)
    av = np.abs(v.v)
    I2 = v.integral(h ** 2 * g * av ** 2)
    Ip = v.integral(h ** a * g * av ** (p + 1))
    Iq = v.integral(h ** b * g * av ** (q + 1)) if q is not None else 0.0
    return {"lt": lt, "alpha": a, "beta": b, "I2": I2, "Ip": Ip, "Iq": Iq}


def pohozaev_residual(v, params: ProblemParams, variant: Variant | str = Variant.Interior,
                      u: Optional[RadialFunction] = None) -> PohozaevReport:
    """Both sides of the lifted Pohozaev identity on a radial profile.

    ``v`` is a LiftedProfile or a RadialFunction (lifted here).  The decay audit
    runs first; the Interior variant needs a boundary exponent above 1 (or
    compact support), the CriticalLambda variant above 1/2, and adds F/2.
    """
    variant = Variant(variant)
    if isinstance(v, RadialFunction):
        u, v = v, lift(v)
    if u is None:
        r, vv = v.r, v.v
        from .geometry import lift_factor
        from .radial import build_grid
        grid = build_grid(v.N, float(r[-1]), len(r) - 1)
        if not np.allclose(grid.nodes, r):
            raise ValueError("lifted profile must come from a uniform radial grid")
        u = RadialFunction(grid, vv / lift_factor(v.N, r))
    fit = lift_and_decay_audit(u, params)
    need = 1.0 if variant is Variant.Interior else 0.5
    if not isinstance(fit, Marker) and fit <= need:
        raise DecayAuditError(f"boundary exponent {fit:.3f} <= {need}: the identity is not justified")
    t = pohozaev_terms(v, params)
    p, q = params.p, params.q
    ca = -t["alpha"] / (p + 1)
    cb = t["beta"] / (q + 1) if q is not None else 0.0
    flux = boundary_flux(v)
    lhs = t["lt"] * t["I2"]
    rhs = ca * t["Ip"] + cb * t["Iq"]
    if variant is Variant.CriticalLambda:
        rhs += 0.5 * flux
    res = lhs - rhs
    scale = max(abs(lhs), abs(ca * t["Ip"]), abs(cb * t["Iq"]), 1e-300)
    ann = None
    try:
        ann = annulus_gradient_audit(v, params).slope
    except ValueError:
        pass
    return PohozaevReport(lhs, (ca, t["Ip"], cb, t["Iq"]), res, res / scale if scale > 1e-300 else 0.0,
                          flux, fit, ann, variant.value,
                          {"lambda_tilde": t["lt"], "alpha": t["alpha"], "beta": t["beta"]})


# ----------------------------------------------------------------------------- nonexistence evidence


@dataclass
class NonexistenceReport:
    params: dict
    window: str
    heights: list
    outcomes: list
    decays_found: bool
    bracket_found: bool
    contradiction: bool
    sign_structure: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _certified_window(params: ProblemParams) -> str:
    N, p, q, lam = params.N, params.p, params.q, params.lam
    thr = N * (N - 2) / 4.0
    l1 = (N - 1) ** 2 / 4.0
    pc = critical_exponent(N) - 1.0
    if q is not None and p >= pc * (1 - 1e-12) and q < pc and q != 1:
        if lam <= thr + 1e-12:
            return "PohozaevObstruction"
    if lam > l1 and classify_regime(params).verdict is Verdict.NotExists:
        return "AboveSpectralGap"
    return "Uncertified"


def sign_structure(params: ProblemParams) -> dict:
    lt, a, b = conformal_exponents(params.N, params.p, params.q if params.q is not None else 2.0, params.lam)
    return {"lambda_tilde": lt, "alpha": a, "beta": b,
            "lambda_tilde_nonpositive": lt <= 1e-12, "alpha_nonpositive": a <= 1e-12, "beta_positive": b > 0}


def nonexistence_evidence(params: ProblemParams, heights=None, r_stop: float = 40.0,
                          require_certified: bool = True) -> NonexistenceReport:
    """Shooting sweep over initial heights; reports Decays outcomes and over/undershoot brackets.

    A bracket (adjacent overshoot and undershoot) implies a decaying solution
    between the two heights.  Either finding is flagged as a contradiction.
    """
    window = _certified_window(params)
    if require_certified and window == "Uncertified":
        raise ValueError(f"{params} is not in a certified nonexistence window")
    heights = default_a_grid(40) if heights is None else np.asarray(heights, dtype=float)
    shots = [shoot(float(a), params, r_stop) for a in heights]
    outs = [s.outcome for s in shots]
    decays = any(o is Outcome.Decays for o in outs)
    bracket = any((_is_over(a) and _is_under(b)) or (_is_under(a) and _is_over(b)) for a, b in zip(outs[:-1], outs[1:]))
    return NonexistenceReport(params.to_dict(), window, [float(a) for a in heights], [o.value for o in outs],
                              decays, bracket, decays or bracket, sign_structure(params))
