"""Energy functional, fibering map, Nehari projection and constrained minimization.

The discrete energy is the conservative form

    J(u) = 1/2 (sum_k m_k (du_k)^2 - lam sum_i w_i u_i^2)
           - 1/(p+1) sum_i w_i |u_i|^{p+1} + 1/(q+1) sum_i w_i |u_i|^{q+1},

with midpoint gradient masses m_k and trapezoid weights w_i; its exact nodal
gradient is used both for descent and for the finite-difference gradient check.
"""
from __future__ import annotations

import enum
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .closed_forms import Criticality, ProblemParams, lambda1, p_criticality
from .geometry import radial_measure_weight
from .radial import RadialFunction, RadialGrid, pde_residual
from .solvers import _regularization, default_grid, newton_solve

PHI2_DEADBAND = 1e-10


class NehariClass(str, enum.Enum):
    Nminus = "Nminus"
    Nzero = "Nzero"
    Nplus = "Nplus"


class Mode(str, enum.Enum):
    Subcritical = "Subcritical"
    CriticalViaApproximation = "CriticalViaApproximation"


class NehariError(RuntimeError):
    pass


def _check_space(params: ProblemParams):
    if params.q is not None and params.q > 1 and params.lam >= lambda1(params.N):
        raise ValueError(f"lambda={params.lam} >= lambda_1: ||.||_lambda is not a norm")


def _edge_masses(grid: RadialGrid) -> np.ndarray:
    r = grid.nodes
    dr = np.diff(r)
    return radial_measure_weight(grid.N, 0.5 * (r[1:] + r[:-1])) / dr


@dataclass
class Norms:
    quad: float      # ||u||_lambda^2
    p_pow: float     # int |u|^{p+1}
    q_pow: float     # int |u|^{q+1}

    def as_tuple(self):
        return self.quad, self.p_pow, self.q_pow


def norms(u: RadialFunction, params: ProblemParams) -> Norms:
    grid = u.grid
    v = u.values
    du = np.diff(v)
    grad2 = float(np.dot(_edge_masses(grid), du * du))
    l2 = float(np.dot(grid.weights, v * v))
    au = np.abs(v)
    B = float(np.dot(grid.weights, au ** (params.p + 1)))
    C = 0.0 if params.q is None else float(np.dot(grid.weights, au ** (params.q + 1)))
    return Norms(grad2 - params.lam * l2, B, C)


def _energy_from(nr: Norms, params: ProblemParams) -> float:
    p, q = params.p, params.q
    e = 0.5 * nr.quad - nr.p_pow / (p + 1)
    if q is not None:
        e += nr.q_pow / (q + 1)
    return e


def energy(u: RadialFunction, params: ProblemParams) -> float:
    """J_{p,q}(u) by quadrature."""
    _check_space(params)
    return _energy_from(norms(u, params), params)


def reduced_energies(nr: Norms, params: ProblemParams):
    """The two Nehari-reduced forms of J (they equal J only on the Nehari set)."""
    p, q = params.p, params.q
    qq = q if q is not None else 1.0
    by_norm = (0.5 - 1 / (p + 1)) * nr.quad + (1 / (qq + 1) - 1 / (p + 1)) * nr.q_pow
    by_pow = (0.5 - 1 / (p + 1)) * nr.p_pow + (1 / (qq + 1) - 0.5) * nr.q_pow
    return by_norm, by_pow


def energy_gradient(u: RadialFunction, params: ProblemParams) -> np.ndarray:
    """Exact nodal gradient of the discrete J; the Dirichlet entry is zero."""
    grid = u.grid
    v = u.values
    m = _edge_masses(grid)
    flux = m * np.diff(v)
    g = np.zeros_like(v)
    g[:-1] -= flux
    g[1:] += flux
    w = grid.weights
    g -= params.lam * w * v
    av = np.abs(v)
    g -= w * av ** params.p * np.sign(v)
    if params.q is not None:
        g += w * av ** params.q * np.sign(v)
    g[-1] = 0.0
    return g


def fibering(u: RadialFunction, t: float, params: ProblemParams, nr: Optional[Norms] = None):
    """(Phi_u(t), Phi_u'(t), Phi_u''(t)) from the three cached integrals."""
    if not t > 0:
        raise ValueError("t must be positive")
    nr = nr or norms(u, params)
    A, B, C = nr.as_tuple()
    p = params.p
    q = params.q if params.q is not None else 1.0
    if params.q is None:
        C = 0.0
    phi = 0.5 * t * t * A - t ** (p + 1) / (p + 1) * B + t ** (q + 1) / (q + 1) * C
    d1 = t * A - t ** p * B + t ** q * C
    d2 = A - p * t ** (p - 1) * B + q * t ** (q - 1) * C
    return phi, d1, d2


@dataclass
class NehariPoint:
    profile: RadialFunction
    t_projection: float
    phi_second_at_one: float
    energy: float
    norms: tuple
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"t_projection": self.t_projection, "phi_second_at_one": self.phi_second_at_one,
                "energy": self.energy, "norms": list(self.norms), "grid": self.profile.grid.meta(),
                "profile_ref": self.meta.get("profile_ref"), "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float)


def _scan_roots(nr: Norms, params: ProblemParams, n: int = 400):
    """Sign changes of Phi'(t)/t over a log-spaced t scan."""
    ts = np.logspace(-6, 6, n)
    A, B, C = nr.as_tuple()
    q = params.q if params.q is not None else 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        g = A - ts ** (params.p - 1) * B + ts ** (q - 1) * C
    s = np.sign(g[np.isfinite(g)])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def project_to_nehari(u: RadialFunction, params: ProblemParams) -> NehariPoint:
    """Scale u onto the Nehari set: the positive root of Phi_u'(t)/t."""
    _check_space(params)
    nr = norms(u, params)
    A, B, C = nr.as_tuple()
    if not (B > 0 and math.isfinite(B)):
        raise NehariError("degenerate profile: int |u|^{p+1} is not positive")
    q = params.q if params.q is not None else 1.0
    Cq = C if params.q is not None else 0.0

    def g(t):
        return A - t ** (params.p - 1) * B + t ** (q - 1) * Cq

    if params.q is not None and params.q > 1 and _scan_roots(nr, params) > 1:
        raise NehariError("several sign changes of Phi'(t)/t: quadrature is unreliable")
    lo, hi = 1.0, 1.0
    k = 0
    while g(lo) <= 0 and k < 200:
        lo *= 0.5
        k += 1
    k = 0
    while g(hi) >= 0 and k < 200:
        hi *= 2.0
        k += 1
    if not (g(lo) > 0 > g(hi)):
        raise NehariError("no positive root of Phi'(t) found")
    t1 = brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    prof = RadialFunction(u.grid, t1 * u.values, u.decay_tag, dict(u.meta))
    nr1 = Norms(t1 * t1 * A, t1 ** (params.p + 1) * B, t1 ** (q + 1) * Cq)
    _, _, d2 = fibering(prof, 1.0, params, nr1)
    return NehariPoint(prof, float(t1), float(d2), _energy_from(nr1, params), nr1.as_tuple())


def classify(point: NehariPoint, tol: float = PHI2_DEADBAND) -> NehariClass:
    scale = max(abs(point.norms[0]), point.norms[1], 1e-300)
    d2 = point.phi_second_at_one
    if abs(d2) <= tol * scale:
        raise NehariError("Phi''(1) vanishes: the degenerate Nehari part should be empty")
    return NehariClass.Nminus if d2 < 0 else NehariClass.Nplus


# ----------------------------------------------------------------------------- minimization


def _h1_bands(grid: RadialGrid, K: float):
    """Tridiagonal (stiffness + K * mass) on nodes 0..M-1 in solve_banded layout."""
    m = _edge_masses(grid)
    M = grid.M
    diag = np.zeros(M)
    diag += m[:M]
    diag[1:] += m[:M - 1]
    diag += K * np.maximum(grid.weights[:M], 0.0)
    off = -m[:M - 1]
    ab = np.zeros((3, M))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return ab


def bump(grid: RadialGrid, width: float = 1.0, height: float = 1.0) -> RadialFunction:
    v = height * np.exp(-(grid.nodes / width) ** 2)
    v[-1] = 0.0
    return RadialFunction(grid, v)


@dataclass
class MinimizeResult:
    point: NehariPoint
    m_pq: float
    iterations: int
    history: list
    converged: bool
    residual: float
    notes: dict = field(default_factory=dict)


def _descend(params: ProblemParams, init: RadialFunction, tol: float, max_iter: int, K: float,
             on_iterate=None):
    grid = init.grid
    ab = _h1_bands(grid, K)
    pt = project_to_nehari(init, params)
    J = pt.energy
    hist = [J]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        u = pt.profile
        g = energy_gradient(u, params)
        d = np.zeros_like(g)
        d[:-1] = solve_banded((1, 1), ab, g[:-1])
        slope = float(np.dot(g, d))
        if slope <= 0 or not math.isfinite(slope):
            converged = True
            break
        alpha = 1.0
        accepted = None
        while alpha > 1e-12:
            cand = RadialFunction(grid, u.values - alpha * d)
            try:
                trial = project_to_nehari(cand, params)
            except NehariError:
                alpha *= 0.5
                continue
            if trial.energy <= J - 1e-4 * alpha * slope:
                accepted = trial
                break
            alpha *= 0.5
        if accepted is None:
            converged = True
            break
        if not math.isfinite(accepted.energy) or accepted.energy < -1e12:
            raise NehariError("energy not bounded below along the iterates")
        dec = J - accepted.energy
        pt, J = accepted, accepted.energy
        hist.append(J)
        if on_iterate is not None:
            on_iterate(pt)
        if dec < tol * max(1.0, abs(J)):
            converged = True
            break
    return pt, hist, converged, it


def default_init(params: ProblemParams, grid: RadialGrid) -> RadialFunction:
    """Barrier midpoint when a strategy applies and builds, else a Gaussian bump."""
    from .barriers import build_pair, default_strategy
    strat = default_strategy(params)
    if strat is not None:
        try:
            pair = build_pair(params, strat, grid=grid)
            if pair.verified.get("ordering_ok"):
                return RadialFunction(grid, 0.5 * (pair.sub.values + pair.super.values))
        except Exception:
            pass
    return bump(grid)


def minimize(params: ProblemParams, init: Optional[RadialFunction] = None, mode: Mode | str = Mode.Subcritical,
             tol: float = 1e-12, max_iter: int = 5000, grid: Optional[RadialGrid] = None,
             polish: bool = True, on_iterate=None, n_approx: int = 8) -> MinimizeResult:
    """Projected (H^1-preconditioned) gradient descent on the Nehari set.

    Returns the minimizing NehariPoint and its energy m_pq.  With ``polish`` the
    minimizer is handed to Newton on the finite-difference rows, which removes
    the O(h^2) gap between the variational and the residual stencils.
    """
    mode = Mode(mode)
    _check_space(params)
    t0 = time.perf_counter()
    if grid is None:
        grid = init.grid if init is not None else default_grid(params.N, min(params.lam, 0.0))
    if init is None:
        init = bump(grid)
    notes: dict = {"mode": mode.value}
    K = 1.0 + max(0.0, -params.lam)
    if mode is Mode.Subcritical:
        if p_criticality(params.N, params.p) is not Criticality.Subcritical:
            raise ValueError("Subcritical mode needs p < 2*-1")
        pt, hist, conv, it = _descend(params, init, tol, max_iter, K, on_iterate)
    else:
        if p_criticality(params.N, params.p) is not Criticality.Critical:
            raise ValueError("CriticalViaApproximation needs p = 2*-1")
        cur = init
        hist, it, conv = [], 0, False
        seq = []
        for n in range(1, n_approx + 1):
            pn = params.p - 2.0 ** (-n)
            sub = ProblemParams(params.N, pn, params.q, params.lam)
            pt_n, h, conv, k = _descend(sub, cur, tol, max_iter, K)
            seq.append({"p_n": pn, "m": pt_n.energy})
            hist += h
            it += k
            cur = pt_n.profile
        pt = project_to_nehari(cur, params)
        notes["approximation"] = seq
        from .bubbles import sobolev_constant
        S = sobolev_constant(params.N)
        level = S ** (params.N / 2) / params.N
        notes["compactness_level"] = level
        notes["below_compactness_level"] = bool(pt.energy < level)
        if pt.energy >= level - 1e-6 * level:
            notes["warning"] = "m estimate at or above (1/N) S^{N/2}"
            warnings.warn("Nehari level at or above the compactness threshold", RuntimeWarning)
    d = _regularization(params)
    res, _ = pde_residual(pt.profile, params, d) if params.q is None or params.q > 1 or \
        np.all(pt.profile.values >= 0) else (math.inf, None)
    notes["variational_residual"] = res
    notes["variational_energy"] = pt.energy
    if polish:
        rep = newton_solve(pt.profile, params, tol=1e-11)
        if rep.converged and rep.solution.sup() > 1e-4:
            pol = project_to_nehari(rep.solution, params)
            notes["polish_t"] = pol.t_projection
            pt = pol
            res = rep.final_residual
        else:
            notes["polish_failed"] = rep.final_residual
    pt.meta.update(notes)
    notes["wall_time"] = time.perf_counter() - t0
    return MinimizeResult(pt, pt.energy, it, hist, conv, float(res), notes)


def minimize_multistart(params: ProblemParams, n_starts: int = 5, seed: int = 0,
                        grid: Optional[RadialGrid] = None, **kw) -> MinimizeResult:
    """Run minimize from Gaussian bumps of random width/height and keep the lowest level."""
    rng = np.random.default_rng(seed)
    if grid is None:
        grid = default_grid(params.N, min(params.lam, 0.0))
    best = None
    levels = []
    for _ in range(n_starts):
        init = bump(grid, width=float(rng.uniform(0.5, 3.0)), height=float(rng.uniform(0.5, 5.0)))
        res = minimize(params, init, grid=grid, **kw)
        levels.append(res.m_pq)
        if best is None or res.m_pq < best.m_pq:
            best = res
    best.notes["multistart_levels"] = levels
    return best


def gradient_check(u: RadialFunction, params: ProblemParams, n_dirs: int = 20, seed: int = 0,
                   h: float = 1e-5):
    """Relative error of <grad J, d> against central differences of J along random directions."""
    rng = np.random.default_rng(seed)
    g = energy_gradient(u, params)
    errs = []
    for _ in range(n_dirs):
        d = rng.standard_normal(u.values.shape) * np.maximum(np.abs(u.values), 1e-3)
        d[-1] = 0.0
        d /= np.max(np.abs(d))
        jp = energy(RadialFunction(u.grid, u.values + h * d), params)
        jm = energy(RadialFunction(u.grid, u.values - h * d), params)
        fd = (jp - jm) / (2 * h)
        an = float(np.dot(g, d))
        errs.append(abs(fd - an) / max(abs(an), abs(fd), 1e-300))
    return max(errs), errs
