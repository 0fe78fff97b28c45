"""Explicit sub/supersolution pairs and their residual-sign verification.

Most subsolutions are truncations min(U, eps) of a pure-power profile U.  The
pieces satisfy their inequalities separately on {U < eps} and {U >= eps}; the
corner itself carries a positive singular part of -Lap, which the verifier
reports as ``kink_defect`` instead of hiding it.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .closed_forms import (Criticality, ProblemParams, critical_exponent, decay_exponent, lambda1,
                           lambda_pq, p_criticality, pohozaev_threshold)
from .radial import RadialFunction, RadialGrid, apply_operator, build_grid, source_terms
from .solvers import MonotonicityError, default_grid, pure_power_ground_state, monotone_iterate

KINK_CELLS = 1
ABS_TOL = 1e-8          # absorbs the O(1e-10) residual of the numerically computed profiles
SUPPORT_FLOOR = 1e-9


class Strategy(str, enum.Enum):
    A1 = "A1"
    CritPos = "CritPos"
    A2_SmallNeg = "A2_SmallNeg"
    LowerEndpoint = "LowerEndpoint"
    A3_Interior = "A3_Interior"
    A4_CritNeg = "A4_CritNeg"
    CritEndpoint = "CritEndpoint"
    A5_Supercrit = "A5_Supercrit"
    A6_SupercritNeg = "A6_SupercritNeg"
    C1_QltP_Crit = "C1_QltP_Crit"
    CompactSupport = "CompactSupport"


class Side(str, enum.Enum):
    Sub = "Sub"
    Super = "Super"


class HypothesisError(ValueError):
    """Parameters outside the window where the strategy applies."""


class InfeasibleError(ValueError):
    """No free constant satisfies the strategy's inequality."""


@dataclass
class BarrierPair:
    sub: RadialFunction
    super: RadialFunction
    strategy: Strategy
    params: ProblemParams
    chosen_parameters: dict
    verified: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"strategy": self.strategy.value, "params": self.params.to_dict(),
                "chosen_parameters": self.chosen_parameters, "verified": self.verified,
                "diagnostics": self.diagnostics,
                "grid": self.sub.grid.meta()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float)


# ----------------------------------------------------------------------------- verification


def _derivative_weights(x0: float, xs: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at x0 from samples at xs."""
    n = len(xs)
    A = np.vander(xs - x0, n, increasing=True).T
    b = np.zeros(n)
    b[order] = math.factorial(order)
    return np.linalg.solve(A, b)


def _one_sided_operator(u: np.ndarray, grid: RadialGrid, i: int, direction: int, lam: float) -> float:
    """-u'' - (N-1) coth(r) u' - lam u at node i using only nodes on one side."""
    idx = np.arange(i, i + 4 * direction, direction)
    idx = idx[(idx >= 0) & (idx <= grid.M)]
    r = grid.nodes
    xs = r[idx]
    d1 = _derivative_weights(r[i], xs, 1) @ u[idx]
    d2 = _derivative_weights(r[i], xs, 2) @ u[idx]
    c = (grid.N - 1) / math.tanh(r[i]) if r[i] > 0 else 0.0
    if r[i] == 0:
        return -grid.N * d2 - lam * u[i]
    return -d2 - c * d1 - lam * u[i]


def kink_nodes(candidate: RadialFunction):
    """Indices next to the corner of a truncation min(U, level), with the side each belongs to."""
    level = candidate.meta.get("truncation_level")
    if level is None:
        return []
    v = candidate.values
    plateau = v >= level * (1 - 1e-15)
    out = []
    for i in range(candidate.grid.M):
        if plateau[i] != plateau[i + 1]:
            # each node is evaluated with a stencil pointing away from the corner
            out.append((i, -1))
            if i + 1 < candidate.grid.M:
                out.append((i + 1, 1))
    # widen by KINK_CELLS on each side along the same orientation
    extra = []
    for j, d in out:
        for k in range(1, KINK_CELLS):
            jj = j - k * d
            if 0 <= jj < candidate.grid.M:
                extra.append((jj, d))
    return sorted(set(out + extra))


def barrier_residual(candidate: RadialFunction, params: ProblemParams) -> np.ndarray:
    """Lu - lam u - (u^p - u^q) at rows 0..M-1 (standard stencil everywhere)."""
    Lu = apply_operator(candidate, params.lam).values
    g, _ = source_terms(candidate.values, params.p, params.q, 0.0)
    return (Lu - g)[:-1]


def verify_barrier(candidate: RadialFunction, params: ProblemParams, side: Side | str,
                   tol: float = ABS_TOL, details: bool = False):
    """Sign check of the barrier residual.

    Sub: residual <= tol; Super: residual >= -tol.  Nodes within one cell of a
    truncation corner use one-sided stencils from their own piece and are held
    to tol_kink = 10 dr.  Returns (ok, worst_violation, worst_node); with
    ``details`` a dict with the raw two-sided defect at the corner is appended.
    """
    side = Side(side)
    sign = 1.0 if side is Side.Sub else -1.0
    res = barrier_residual(candidate, params)
    raw = res.copy()
    kinks = kink_nodes(candidate)
    dr = float(np.max(candidate.grid.spacing))
    tol_kink = 10.0 * dr
    allowed = np.full(res.shape, tol)
    g_all, _ = source_terms(candidate.values, params.p, params.q, 0.0)
    for j, d in kinks:
        res[j] = _one_sided_operator(candidate.values, candidate.grid, j, d, params.lam) - g_all[j]
        allowed[j] = tol_kink
    viol = sign * res - allowed
    k = int(np.argmax(viol))
    worst = float(sign * res[k])
    ok = bool(viol[k] <= 0)
    if not details:
        return ok, worst, k
    kink_idx = [j for j, _ in kinks]
    defect = float(np.max(sign * raw[kink_idx])) if kink_idx else 0.0
    return ok, worst, k, {"kink_nodes": kink_idx, "kink_defect": defect, "tol_kink": tol_kink,
                          "worst_away_from_kink": float(np.max(np.delete(sign * raw, kink_idx)))
                          if len(kink_idx) < len(raw) else 0.0}


# ----------------------------------------------------------------------------- construction helpers


def _truncate(profile: RadialFunction, level: float) -> RadialFunction:
    vals = np.minimum(profile.values, level)
    return RadialFunction(profile.grid, vals, profile.decay_tag,
                          {"truncation_level": float(level), "branch_decay": profile.decay_tag})


def _fit_under(branch: RadialFunction, eps: float, lo: float, sup: RadialFunction, max_halvings: int = 30):
    """Truncate at eps, halving the distance to the feasible floor lo until sub <= super."""
    tries = 0
    while np.any(np.minimum(branch.values, eps) > sup.values + 1e-12) and tries < max_halvings:
        eps = 0.5 * (eps + lo) if eps - lo > 1e-9 * eps else lo
        tries += 1
    return _truncate(branch, eps), eps, tries


def _profile(N, p, lam, grid) -> RadialFunction:
    rep = pure_power_ground_state(N, p, lam, grid=grid, check_drift=False)
    return rep.solution


def _scale_to_dominate(sub: RadialFunction, base: RadialFunction, factor: float = 1.1):
    """L = factor * max(sub / base), the deterministic 'L large enough' rule."""
    m = (base.values > 0) & (sub.values > 0)
    ratio = float(np.max(sub.values[m] / base.values[m])) if m.any() else 1.0
    L = factor * ratio
    return L, RadialFunction(base.grid, L * base.values, base.decay_tag, {"scale": L})


def subcritical_companion(N: int, p: float) -> float:
    """Deterministic subcritical exponent r: the midpoint of (1, min(p, 2*-1))."""
    top = min(p, critical_exponent(N) - 1.0)
    return 0.5 * (1.0 + top)


def _largest_truncation(shift: float, r: float, params: ProblemParams, cap: float = 1e3,
                        n: int = 4000):
    """Feasible truncation levels for a sub min(U_{mu,r}, eps) with shift = mu - lam.

    Region inequality on {U < eps}: shift + s^{r-1} <= s^{p-1} - s^{q-1} for all s < eps.
    Plateau inequality: -lam eps <= eps^p - eps^q.
    Returns (lo, hi) of the feasible eps, or None.
    """
    p, q, lam = params.p, params.q, params.lam
    s = np.logspace(-12, math.log10(cap), n)
    region = shift + s ** (r - 1) - (s ** (p - 1) - s ** (q - 1)) <= 0
    plateau = -lam * s <= s ** p - s ** q
    # eps feasible iff region holds on (0, eps) and plateau holds at eps
    region_prefix = np.logical_and.accumulate(region)
    feas = region_prefix & plateau
    if not feas.any():
        return None
    idx = np.flatnonzero(feas)
    # contiguous block containing the largest feasible level
    hi_i = idx[-1]
    lo_i = hi_i
    while lo_i - 1 >= 0 and feas[lo_i - 1]:
        lo_i -= 1
    return float(s[lo_i]), float(s[hi_i])


def _half_rule(lo: float, hi: float) -> float:
    eps = 0.5 * hi
    return eps if eps >= lo else 0.5 * (lo + hi)


def _root_on(fun: Callable[[float], float], a: float, b: float) -> float:
    return brentq(fun, a, b, xtol=1e-15, rtol=1e-14, maxiter=500)


def _require(cond: bool, msg: str, exc=HypothesisError):
    if not cond:
        raise exc(msg)


def _finish(pair: BarrierPair) -> BarrierPair:
    ok_sub, w_sub, n_sub, d_sub = verify_barrier(pair.sub, pair.params, Side.Sub, details=True)
    ok_sup, w_sup, n_sup, d_sup = verify_barrier(pair.super, pair.params, Side.Super, details=True)
    order = bool(np.all(pair.sub.values <= pair.super.values + 1e-12))
    pair.verified = {"sub_ok": ok_sub, "super_ok": ok_sup, "ordering_ok": order}
    pair.diagnostics.update({
        "sub_worst": w_sub, "sub_worst_node": n_sub, "sub_kink_defect": d_sub["kink_defect"],
        "super_worst": w_sup, "super_worst_node": n_sup,
        "ordering_gap": float(np.max(pair.sub.values - pair.super.values)),
        "sub_decay": pair.sub.decay_tag, "super_decay": pair.super.decay_tag,
    })
    return pair


# ----------------------------------------------------------------------------- strategies


def _gate_p_lt_q(params: ProblemParams):
    _require(params.q is not None and params.q > params.p, "strategy needs p < q")


def _a1(params: ProblemParams, grid, dr):
    N, p, q, lam = params.N, params.p, params.q, params.lam
    _gate_p_lt_q(params)
    _require(p_criticality(N, p) is Criticality.Subcritical, "strategy A1 needs 1 < p < 2*-1")
    _require(0 <= lam < lambda1(N), f"strategy A1 needs 0 <= lambda < lambda_1 = {lambda1(N)}")
    # plateau: eps^{p-1} - eps^{q-1} >= -lam; largest such eps
    if lam == 0:
        hi = 1.0
    else:
        hi = _root_on(lambda e: e ** (p - 1) - e ** (q - 1) + lam, 1.0, 1e6)
    eps = 0.5 * hi
    lam_s = lam - 2.0 * eps ** (q - 1)
    _require(lam - lam_s > eps ** (q - 1), "lambda - lambda' > eps^{q-1} violated", InfeasibleError)
    grid = grid or default_grid(N, lam, dr)
    sup = _profile(N, p, lam, grid)
    sub = _truncate(_profile(N, p, lam_s, grid), eps)
    return sub, sup, {"eps": eps, "lambda_prime": lam_s, "eps_max": hi}


def _critpos_sub(params: ProblemParams, grid, r: float, sup: Optional[RadialFunction] = None):
    lam = params.lam
    lam_ss = lam - 1.5
    feas = _largest_truncation(lam_ss - lam, r, params, cap=1.0)
    _require(feas is not None, "no eps in (0,1) with -lam eps <= eps^p - eps^q and the region bound",
             InfeasibleError)
    eps = _half_rule(*feas)
    branch = _profile(params.N, r, lam_ss, grid)
    shrinks = 0
    if sup is not None:
        sub, eps, shrinks = _fit_under(branch, eps, feas[0], sup)
    else:
        sub = _truncate(branch, eps)
    return sub, {"eps": eps, "lambda_double_prime": lam_ss, "r": r, "eps_window": list(feas),
                 "eps_shrinks": shrinks}


def _critpos(params: ProblemParams, grid, dr):
    N, p, lam = params.N, params.p, params.lam
    _gate_p_lt_q(params)
    _require(N >= 4 and p_criticality(N, p) is Criticality.Critical,
             "strategy CritPos needs N >= 4 and p = 2*-1")
    l1, thr = lambda1(N), pohozaev_threshold(N)
    _require(0 <= lam < l1, f"strategy CritPos needs 0 <= lambda < lambda_1 = {l1}")
    lam_p = 0.5 * (max(thr, lam) + l1)
    grid = grid or default_grid(N, lam_p, dr)
    sup = _profile(N, p, lam_p, grid)
    sub, chosen = _critpos_sub(params, grid, subcritical_companion(N, p), sup)
    chosen["lambda_prime"] = lam_p
    return sub, sup, chosen


def _a2(params: ProblemParams, grid, dr):
    N, p, q, lam = params.N, params.p, params.q, params.lam
    _gate_p_lt_q(params)
    _require(p_criticality(N, p) is Criticality.Subcritical, "strategy A2 needs 1 < p < 2*-1")
    lpq, t = lambda_pq(p, q)
    _require(lam < 0, "strategy A2 needs lambda < 0")
    _require(lam >= -lpq, f"eps^(p-1) - eps^(q-1) = -lambda has no root in (0, t_pq]: lambda < -lambda_pq = {-lpq}",
             InfeasibleError)
    fun = lambda e: e ** (p - 1) - e ** (q - 1) + lam
    eps = t if fun(t) <= 0 else _root_on(fun, 1e-300, t)
    lam_s = lam - eps ** (q - 1)
    grid = grid or default_grid(N, lam, dr)
    sup = _profile(N, p, lam, grid)
    sub = _truncate(_profile(N, p, lam_s, grid), eps)
    return sub, sup, {"eps": eps, "lambda_prime": lam_s, "t_pq": t}


def _lower_endpoint(params: ProblemParams, grid, dr):
    N, p, q, lam = params.N, params.p, params.q, params.lam
    _gate_p_lt_q(params)
    _require(p_criticality(N, p) is Criticality.Subcritical, "strategy LowerEndpoint needs 1 < p < 2*-1")
    lpq, t = lambda_pq(p, q)
    _require(abs(lam + lpq) <= 1e-12 * max(1, lpq), f"strategy LowerEndpoint needs lambda = -lambda_pq = {-lpq}")
    lam_s = -lpq - t ** (q - 1)
    grid = grid or default_grid(N, 0.0, dr)
    sub = _truncate(_profile(N, p, lam_s, grid), t)
    L, sup = _scale_to_dominate(sub, _profile(N, p, 0.0, grid))
    return sub, sup, {"t_pq": t, "lambda_prime": lam_s, "L": L}


def _a3(params: ProblemParams, grid, dr, max_iter=20000):
    N, p, q, lam = params.N, params.p, params.q, params.lam
    _gate_p_lt_q(params)
    _require(p_criticality(N, p) is Criticality.Subcritical, "strategy A3 needs 1 < p < 2*-1")
    lpq, _ = lambda_pq(p, q)
    _require(-lpq < lam < 0, f"strategy A3 needs -lambda_pq < lambda < 0")
    lam0 = 1.0 + lam
    _require(lam0 < lambda1(N), "lambda_0 = 1 + lambda must stay below lambda_1")
    grid = grid or default_grid(N, lam0, dr)
    endpoint = params.with_lambda(-lpq)
    inner = build_pair(endpoint, Strategy.LowerEndpoint, grid=grid)
    try:
        rep = monotone_iterate(inner.sub, inner.super, endpoint, max_iter=max_iter)
    except MonotonicityError as exc:
        raise InfeasibleError(f"the endpoint solution V_M could not be computed: {exc}") from None
    if not rep.converged or rep.solution.sup() < 1e-4:
        raise InfeasibleError("the endpoint solution V_M could not be computed: iteration did not converge "
                              "to a nontrivial profile")
    sub = rep.solution
    L, sup = _scale_to_dominate(sub, _profile(N, p, lam0, grid))
    return sub, sup, {"lambda_0": lam0, "L": L}


def _crit_neg_super(params: ProblemParams, grid, sub: RadialFunction):
    N = params.N
    lam0 = 0.5 * (pohozaev_threshold(N) + lambda1(N))
    L, sup = _scale_to_dominate(sub, _profile(N, params.p, lam0, grid))
    return sup, {"lambda_0": lam0, "L": L}


def _crit_neg_gate(params: ProblemParams, name: str):
    _gate_p_lt_q(params)
    _require(params.N >= 4 and p_criticality(params.N, params.p) is Criticality.Critical,
             f"strategy {name} needs N >= 4 and p = 2*-1")


def _a4(params: ProblemParams, grid, dr, max_k: int = 40):
    N, p, q, lam = params.N, params.p, params.q, params.lam
    _crit_neg_gate(params, "A4")
    lpq, _ = lambda_pq(p, q)
    _require(-lpq < lam < 0, "strategy A4 needs -lambda_pq < lambda < 0")
    r = None
    for k in range(1, max_k + 1):
        cand = p - 2.0 ** (-k)
        if cand <= 1:
            continue
        if lambda_pq(cand, p)[0] < lpq + lam:
            r = cand
            break
    _require(r is not None, f"no r = p - 2^-k (k <= {max_k}) satisfies lambda_(r,p) < lambda_pq + lambda",
             InfeasibleError)
    lrq, trq = lambda_pq(r, q)
    lam_s = -lrq - trq ** (q - 1)
    grid = grid or default_grid(N, 0.5 * (pohozaev_threshold(N) + lambda1(N)), dr)
    sub = _truncate(_profile(N, r, lam_s, grid), trq)
    sup, extra = _crit_neg_super(params, grid, sub)
    return sub, sup, {"r": r, "t_rq": trq, "lambda_prime": lam_s, **extra}


def _crit_endpoint(params: ProblemParams, grid, dr):
    N, p, q, lam = params.N, params.p, params.q, params.lam
    _crit_neg_gate(params, "CritEndpoint")
    lpq, t = lambda_pq(p, q)
    _require(-lpq - 1e-12 <= lam < 0, "strategy CritEndpoint needs -lambda_pq <= lambda < 0")
    r = subcritical_companion(N, p)
    lam_s = -lpq - t ** (r - 1) - t ** (q - 1)
    grid = grid or default_grid(N, 0.5 * (pohozaev_threshold(N) + lambda1(N)), dr)
    sub = _truncate(_profile(N, r, lam_s, grid), t)
    sup, extra = _crit_neg_super(params, grid, sub)
    return sub, sup, {"r": r, "t_pq": t, "lambda_prime": lam_s, **extra}


def _supercrit_gate(params: ProblemParams, name: str):
    _gate_p_lt_q(params)
    _require(p_criticality(params.N, params.p) is not Criticality.Subcritical,
             f"strategy {name} needs q > p >= 2*-1")


def _a5(params: ProblemParams, grid, dr):
    N, p, lam = params.N, params.p, params.lam
    _supercrit_gate(params, "A5")
    _require(0 <= lam < lambda1(N), "strategy A5 needs 0 <= lambda < lambda_1")
    r = subcritical_companion(N, p)
    grid = grid or default_grid(N, lam, dr)
    sup = _profile(N, r, lam, grid)
    sub, chosen = _critpos_sub(params, grid, r, sup)
    return sub, sup, chosen


def _a6(params: ProblemParams, grid, dr):
    N, p, q, lam = params.N, params.p, params.q, params.lam
    _supercrit_gate(params, "A6")
    lpq, _ = lambda_pq(p, q)
    l1 = lambda1(N)
    _require(-lpq - 1e-12 <= lam < 0, "strategy A6 needs -lambda_pq <= lambda < 0")
    _require(lam + 1 < l1, "no lambda_0 in (0, lambda_1) with lambda_0 - lambda >= 1")
    r = subcritical_companion(N, p)
    lam0 = 0.5 * (lam + 1 + l1)
    grid = grid or default_grid(N, lam0, dr)
    sub, chosen = _critpos_sub(params, grid, r)
    L, sup = _scale_to_dominate(sub, _profile(N, r, lam0, grid))
    chosen.update({"lambda_0": lam0, "L": L})
    return sub, sup, chosen


def _c1(params: ProblemParams, grid, dr, gap: Optional[float] = None):
    """Truncated-profile sub under U_{lambda,p} for 1 < q < p.

    For critical p (N >= 4) lambda_0 is taken in (N(N-2)/4, lambda).
    For subcritical p the same construction is used with lambda_0 = lambda - gap.
    """
    N, p, q, lam = params.N, params.p, params.q, params.lam
    _require(q is not None and 1 < q < p, "strategy C1 needs 1 < q < p")
    crit = p_criticality(N, p)
    _require(crit is not Criticality.Supercritical, "strategy C1 needs p <= 2*-1")
    l1, thr = lambda1(N), pohozaev_threshold(N)
    _require(lam < l1, "strategy C1 needs lambda < lambda_1")
    if crit is Criticality.Critical:
        _require(N >= 4 and thr < lam, "strategy C1 with critical p needs N >= 4 and lambda > N(N-2)/4")
        # stay close to lambda: profiles concentrate as lambda_0 approaches N(N-2)/4
        lam0 = lam - 0.1 * (lam - thr)
    else:
        lam0 = lam - (4.0 if gap is None else gap)
    # eps^{q-1} < lam - lam0 and -lam <= eps^{p-1} - eps^{q-1}
    hi_region = (lam - lam0) ** (1.0 / (q - 1))
    s = np.logspace(-12, math.log10(hi_region), 4000)[:-1]
    feas = -lam <= s ** (p - 1) - s ** (q - 1)
    _require(feas.any(), "no eps with eps^{q-1} < lambda - lambda_0 and -lambda <= eps^{p-1} - eps^{q-1}",
             InfeasibleError)
    lo, hi = float(s[np.flatnonzero(feas)[0]]), float(s[np.flatnonzero(feas)[-1]])
    eps = _half_rule(lo, hi)
    grid = grid or default_grid(N, lam, dr)
    sup = _profile(N, p, lam, grid)
    branch = _profile(N, p, lam0, grid)
    sub, eps, shrinks = _fit_under(branch, eps, lo, sup)
    return sub, sup, {"eps": eps, "lambda_0": lam0, "eps_window": [lo, hi], "eps_shrinks": shrinks}


def compact_support_barrier(params: ProblemParams, radius: float = 1.0, M: int = 2000):
    """Local supersolution eps * d^gamma, gamma = 2/(1-q), on the geodesic ball of given radius.

    Returned as a profile in the distance from its own center; eps is half the
    largest value with eps^{q-1} >= C_R + max(lam,0) R^2 + eps^{p-1} R^{(p-1)gamma+2}.
    """
    N, p, q, lam = params.N, params.p, params.q, params.lam
    _require(q is not None and q < 1 < p, "compact-support barrier needs 0 < q < 1 < p")
    gamma = 2.0 / (1.0 - q)
    R = radius
    C_R = gamma * ((gamma - 1) + (N - 1) * R / math.tanh(R))

    def slack(e):
        return e ** (q - 1) - C_R - max(lam, 0.0) * R ** 2 - e ** (p - 1) * R ** ((p - 1) * gamma + 2)

    _require(slack(1e-300 ** 0.5) > 0, "eps^{q-1} cannot dominate C_R", InfeasibleError)
    e_hi = _root_on(slack, 1e-150, 1e3) if slack(1e3) < 0 else 1e3
    eps = 0.5 * e_hi
    grid = build_grid(N, R, M)
    sup = RadialFunction(grid, eps * grid.nodes ** gamma, meta={"center": "far point", "gamma": gamma})
    sub = RadialFunction(grid, np.zeros_like(grid.nodes))
    return sub, sup, {"gamma": gamma, "eps": eps, "radius": R, "C_R": C_R}


_BUILDERS = {
    Strategy.A1: _a1,
    Strategy.CritPos: _critpos,
    Strategy.A2_SmallNeg: _a2,
    Strategy.LowerEndpoint: _lower_endpoint,
    Strategy.A3_Interior: _a3,
    Strategy.A4_CritNeg: _a4,
    Strategy.CritEndpoint: _crit_endpoint,
    Strategy.A5_Supercrit: _a5,
    Strategy.A6_SupercritNeg: _a6,
    Strategy.C1_QltP_Crit: _c1,
}


def build_pair(params: ProblemParams, strategy: Strategy | str, grid: Optional[RadialGrid] = None,
               dr: float = 0.01, **options) -> BarrierPair:
    """Construct and verify the sub/supersolution pair of the given strategy."""
    strategy = Strategy(strategy)
    if strategy is Strategy.CompactSupport:
        sub, sup, chosen = compact_support_barrier(params, **options)
    else:
        sub, sup, chosen = _BUILDERS[strategy](params, grid, dr, **options)
    return _finish(BarrierPair(sub, sup, strategy, params, chosen))


def default_strategy(params: ProblemParams) -> Optional[Strategy]:
    """Strategy whose hypotheses cover params, or None."""
    N, p, q, lam = params.N, params.p, params.q, params.lam
    if q is None:
        return None
    crit = p_criticality(N, p)
    l1 = lambda1(N)
    if q > p:
        lpq, _ = lambda_pq(p, q)
        if lam >= l1 or lam < -lpq - 1e-12:
            return None
        if crit is Criticality.Subcritical:
            if lam >= 0:
                return Strategy.A1
            if abs(lam + lpq) <= 1e-12:
                return Strategy.LowerEndpoint
            return Strategy.A2_SmallNeg
        if crit is Criticality.Critical and N >= 4:
            return Strategy.CritPos if lam >= 0 else Strategy.CritEndpoint
        return Strategy.A5_Supercrit if lam >= 0 else Strategy.A6_SupercritNeg
    if 1 < q < p and crit is not Criticality.Supercritical and lam < l1:
        if crit is Criticality.Critical and not (N >= 4 and lam > pohozaev_threshold(N)):
            return None
        return Strategy.C1_QltP_Crit
    return None


def compact_support_probe(u: RadialFunction, params: Optional[ProblemParams] = None,
                          floor: float = SUPPORT_FLOOR, tail_factor: float = 4.0) -> float:
    """Radius beyond which |u| stays below ``floor``; inf for an exponential tail.

    A profile that crosses the floor at the linear decay rate c(N, lambda) (within
    ``tail_factor``) is an exponential tail that merely underflowed the floor, not
    a support edge.  The Dirichlet node itself is ignored.
    """
    vals = np.abs(u.values[:-1])
    above = np.flatnonzero(vals > floor)
    if above.size == 0:
        return 0.0
    last = int(above[-1])
    if last >= u.grid.M - 1:
        return math.inf
    N = u.grid.N
    lam = 0.0 if params is None else params.lam
    c = decay_exponent(N, min(lam, lambda1(N)))
    k = min(last + 4, u.grid.M - 1)
    if vals[k] > 0:
        rate = math.log(vals[last] / vals[k]) / (u.grid.nodes[k] - u.grid.nodes[last])
        if rate < tail_factor * c:
            return math.inf
    return float(u.grid.nodes[last])
