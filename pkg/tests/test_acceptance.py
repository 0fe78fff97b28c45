"""Acceptance criteria 1-11.  Each test prints one PASS/FAIL line and then asserts it.

Run alone with ``pytest -v tests/test_acceptance.py``; the lines appear on the
terminal as the criteria finish.  Criterion 4 takes about three minutes.
"""
import json
import math
import time

import numpy as np
import pytest

from hypscalar.barriers import build_pair, compact_support_probe
from hypscalar.bubbles import (DEFAULT_SCHEDULE, BubbleSpec, Kind, boundary_exponent, energy_threshold_check,
                               estimate, fit_order, sobolev_constant, zeta_choice)
from hypscalar.cartography import (RunConfig, WindowError, load_map, payload_bytes, save_map, sweep,
                                   threshold_bisect)
from hypscalar.closed_forms import ProblemParams, decay_exponent, lambda1, lambda_pq
from hypscalar.nehari import bump, energy, gradient_check, minimize
from hypscalar.pohozaev import nonexistence_evidence, pohozaev_residual, sign_structure
from hypscalar.radial import RadialFunction, build_grid, fit_decay_rate
from hypscalar.solvers import (MonotonicityError, default_grid, ground_state_by_shooting,
                               pure_power_ground_state, monotone_iterate, solve_linear_shifted)


@pytest.fixture
def report(capsys):
    def emit(n, checks: dict, elapsed: float, limit: float):
        checks = {**checks, f"runtime {elapsed:.1f}s < {limit:g}s": elapsed < limit}
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += "  failed: " + "; ".join(failed)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


# ----------------------------------------------------------------------------- 1


def _grid_max(p, q, n=10 ** 6):
    t = np.linspace(0.0, 1.0, n + 1)[1:]
    return float(np.max(t ** (p - 1) - t ** (q - 1)))


def _facts_suite():
    """Monotonicity, bounds and limits of lambda_pq and t_pq on a 20x20 grid of p < q."""
    ps = np.linspace(1.1, 5.0, 20)
    qs = np.linspace(1.3, 9.0, 20)
    ok = all(0 < x < 1 for p in ps for q in qs if q > p for x in lambda_pq(p, q))
    for p in ps:
        vals = [lambda_pq(p, q)[0] for q in qs if q > p]
        ok &= bool(np.all(np.diff(vals) > 0))
    for q in qs:
        vals = [lambda_pq(p, q)[0] for p in ps if p < q]
        ok &= bool(np.all(np.diff(vals) < 0))
    up = [lambda_pq(2.0, q)[0] for q in (10, 100, 1e3, 1e5)]
    ok &= bool(np.all(np.diff(up) > 0)) and 1 - up[-1] < 1e-3
    down = [lambda_pq(p, 3.0)[0] for p in (2.9, 2.99, 2.999, 2.9999)]
    ok &= bool(np.all(np.diff(down) < 0)) and down[-1] < 1e-3
    near1 = np.array([lambda_pq(p, 3.0) for p in (1.1, 1.01, 1.001, 1.0001)])
    ok &= bool(np.all(np.diff(near1[:, 0]) > 0) and np.all(np.diff(near1[:, 1]) < 0))
    ok &= 1 - near1[-1, 0] < 1e-2 and near1[-1, 1] < 1e-2
    ok &= abs(lambda_pq(2.0, 2.0 + 1e-7)[1] - math.exp(-1)) < 1e-6
    return ok


def test_criterion_01_closed_form_threshold(report):
    t0 = time.perf_counter()
    l23, l24 = lambda_pq(2.0, 3.0)[0], lambda_pq(2.0, 4.0)[0]
    checks = {
        "lambda_23 = 1/4": abs(l23 - 0.25) < 1e-15,
        "lambda_24 = 2/(3 sqrt 3)": abs(l24 - 2 / (3 * math.sqrt(3))) < 1e-15,
        "lambda_23 vs grid oracle": abs(l23 - _grid_max(2.0, 3.0)) < 1e-9,
        "lambda_24 vs grid oracle": abs(l24 - _grid_max(2.0, 4.0)) < 1e-9,
        "20x20 monotonicity/limit suite": _facts_suite(),
    }
    report(1, checks, time.perf_counter() - t0, 5)


# ----------------------------------------------------------------------------- 2


def test_criterion_02_profile(report):
    t0 = time.perf_counter()
    rep = pure_power_ground_state(3, 3.0, 0.0)
    u = rep.solution
    fit = fit_decay_rate(u)
    checks = {
        "converged": rep.converged,
        f"residual {rep.final_residual:.2e} < 1e-8": rep.final_residual < 1e-8,
        f"decay {fit:.4f} within 5% of 2": abs(fit / decay_exponent(3, 0.0) - 1) < 0.05,
        "radially decreasing": bool(np.all(np.diff(u.values) <= 0)),
    }
    report(2, checks, time.perf_counter() - t0, 30)


# ----------------------------------------------------------------------------- 3


def test_criterion_03_monotone_iteration(report):
    t0 = time.perf_counter()
    pp = ProblemParams(3, 2.0, 4.0, 0.5)
    checks = {}
    pair = build_pair(pp, "A1")
    hist = []
    try:
        rep = monotone_iterate(pair.sub, pair.super, pp, history=hist)
        sol = rep.solution.values
        steps = [np.min(b - a) for a, b in zip([pair.sub.values] + hist[:-1], hist)]
        checks["A1 iterates nondecreasing"] = min(steps) >= 0
        checks["A1 solution sandwiched"] = bool(np.all(pair.sub.values <= sol) and np.all(sol <= pair.super.values))
        checks[f"A1 residual {rep.final_residual:.2e} < 1e-7"] = rep.final_residual < 1e-7
    except MonotonicityError as exc:
        checks[f"A1 iteration ({exc})"] = False
    lam, t = lambda_pq(2.0, 4.0)
    g = build_grid(3, 10.0, 200)
    c = RadialFunction(g, np.full(g.M + 1, t))
    cp = ProblemParams(3, 2.0, 4.0, -lam)
    rc = monotone_iterate(c, c, cp)
    exact = float(np.max(np.abs(rc.solution.values - t)))
    checks[f"t_pq fixed point (residual {rc.final_residual:.1e}, drift {exact:.1e})"] = \
        rc.final_residual < 1e-12 and exact < 1e-12
    report(3, checks, time.perf_counter() - t0, 60)


# ----------------------------------------------------------------------------- 4


def test_criterion_04_cartography(report):
    t0 = time.perf_counter()
    cfg = RunConfig(methods=("shooting",))
    checks = {}
    target_lo = -lambda_pq(2.0, 4.0)[0]
    try:
        lo = threshold_bisect(3, 2.0, 4.0, (-1.0, 0.0), cfg, "lower")
        checks[f"lower boundary {lo.numeric_boundary:.4f} vs {target_lo:.5f}"] = \
            abs(lo.numeric_boundary - target_lo) <= 0.02
    except WindowError as exc:
        checks[f"lower boundary ({str(exc)[:90]})"] = False
    try:
        up = threshold_bisect(3, 2.0, 4.0, (0.5, 1.5), cfg, "upper")
        checks[f"upper boundary {up.numeric_boundary:.4f} vs 1"] = abs(up.numeric_boundary - lambda1(3)) <= 0.02
    except WindowError as exc:
        checks[f"upper boundary ({str(exc)[:90]})"] = False
    report(4, checks, time.perf_counter() - t0, 600)


# ----------------------------------------------------------------------------- 5


def test_criterion_05_nonexistence(report):
    t0 = time.perf_counter()
    checks = {}
    for args in [(3, 5.0, 2.0, 0.0), (3, 5.0, 2.0, 0.5), (3, 5.0, 2.0, 0.75), (3, 2.0, 4.0, 1.2)]:
        pp = ProblemParams(*args)
        rep = nonexistence_evidence(pp)
        sweep_ok = len(rep.heights) == 40 and min(rep.heights) == pytest.approx(1e-3) \
            and max(rep.heights) == pytest.approx(1e3)
        checks[f"{args}: 40-point sweep, no decaying solution"] = sweep_ok and not rep.contradiction
        if args[1] == 5.0:
            s = sign_structure(pp)
            checks[f"{args}: sign structure"] = \
                s["lambda_tilde_nonpositive"] and s["alpha_nonpositive"] and s["beta_positive"]
    report(5, checks, time.perf_counter() - t0, 300)


# ----------------------------------------------------------------------------- 6


def test_criterion_06_compact_support(report):
    t0 = time.perf_counter()
    sub = ground_state_by_shooting(ProblemParams(3, 3.0, 0.5, 0.0))
    u = sub.solution
    R = compact_support_probe(u, ProblemParams(3, 3.0, 0.5, 0.0))
    ctl = ground_state_by_shooting(ProblemParams(3, 3.0, 2.0, 0.0)).solution
    fit = fit_decay_rate(ctl)
    checks = {
        "sublinear solution converged": sub.converged,
        "nonnegative": bool(np.all(u.values >= 0)),
        f"support radius {R:.3f} < r_max": R < u.grid.r_max,
        "stays below 1e-9 beyond it": bool(np.all(u.values[u.r > R] < 1e-9)),
        "control has no compact support": compact_support_probe(ctl) == math.inf,
        f"control decay {fit:.4f} within 10% of 2": abs(fit / decay_exponent(3, 0.0) - 1) < 0.10,
    }
    report(6, checks, time.perf_counter() - t0, 120)


# ----------------------------------------------------------------------------- 7


def test_criterion_07_pohozaev_balance(report):
    t0 = time.perf_counter()
    pp = ProblemParams(3, 3.0, 2.0, 0.0)
    u = ground_state_by_shooting(pp, grid=default_grid(3, 0.0, 0.0025)).solution
    good = abs(pohozaev_residual(u, pp).relative_residual)
    fake = RadialFunction(u.grid, u.sup() * np.exp(-u.r ** 2))
    bad = abs(pohozaev_residual(fake, pp).relative_residual)
    checks = {
        f"relative residual {good:.2e} < 1e-4": good < 1e-4,
        f"fabricated profile {bad:.2e} >= 10x": bad >= 10 * good,
    }
    report(7, checks, time.perf_counter() - t0, 60)


# ----------------------------------------------------------------------------- 8


def test_criterion_08_interior_bubbles(report):
    t0 = time.perf_counter()
    est = estimate(BubbleSpec(Kind.Interior, 5, 1e-2, 0.5, 0.0))
    g2, l2, wq = (fit_order(est, k)[0] for k in ("grad2", "l2", "weighted_lq"))
    est4 = estimate(BubbleSpec(Kind.Interior, 4, 1e-2, 0.5, 0.0))
    checks = {
        f"grad2 slope {g2:.3f} ~ 3": abs(g2 / 3 - 1) < 0.15,
        f"l2 slope {l2:.3f} ~ 2": abs(l2 / 2 - 1) < 0.10,
        f"weighted_lq slope {wq:.3f} ~ 2.25": abs(wq / 2.25 - 1) < 0.10,
        "N=4 l2 log factor detected": bool(fit_order(est4, "l2")[1]),
    }
    report(8, checks, time.perf_counter() - t0, 300)


# ----------------------------------------------------------------------------- 9


def test_criterion_09_boundary_bubble(report):
    t0 = time.perf_counter()
    N, q, gam, lam = 5, 0.3, 0.5, 6.0
    zeta = 1 - 0.5 * (1 / 3 + 3 * (1 - q) / (4 * (2 - 3 * q)))
    beta = N - (q + 1) * (N - 2) / 2
    lhs = beta * (1 - gam) + (zeta - 1) * (N - (q + 1) * (N - 2))
    checks = {
        "zeta choice": abs(zeta_choice(q) - zeta) < 1e-15,
        "exponent identity (closed form)": abs(boundary_exponent(q, N, gam, zeta) - (3 * q + 25) / 24) < 1e-12
        and abs(lhs - (3 * q + 25) / 24) < 1e-12,
    }
    S = sobolev_constant(N)
    spec = BubbleSpec.boundary_default(N, 1e-3, q, lam)
    e, below, _ = energy_threshold_check(spec)
    level = S ** (N / 2) / N
    checks[f"J(t v) = {e:.4f} < S^(N/2)/N = {level:.4f}"] = below and e < level
    ts = [energy_threshold_check(spec.with_epsilon(x))[2] for x in DEFAULT_SCHEDULE]
    checks[f"t_eps in [{min(ts):.4f}, {max(ts):.4f}] within [0.1, 10]"] = 0.1 <= min(ts) and max(ts) <= 10
    report(9, checks, time.perf_counter() - t0, 600)


# ----------------------------------------------------------------------------- 10


def test_criterion_10_cross_method(report):
    t0 = time.perf_counter()
    pp = ProblemParams(3, 2.0, 1.5, 0.0)
    res = minimize(pp)
    m = res.m_pq
    checks = {}
    try:
        pair = build_pair(pp, "C1_QltP_Crit")
        rep = monotone_iterate(pair.sub, pair.super, pp)
        em = energy(rep.solution, pp)
        checks[f"Nehari {m:.6f} vs monotone {em:.6f}"] = abs(m - em) <= 1e-3 * abs(m)
    except (MonotonicityError, ValueError, RuntimeError) as exc:
        checks[f"monotone iteration ({type(exc).__name__}: {exc})"] = False
    # away from critical points: at the minimizer <grad J, d> vanishes and a relative error is undefined
    err, errs = gradient_check(bump(res.point.profile.grid), pp, n_dirs=20, h=1e-4)
    checks[f"gradient check {err:.1e} < 1e-5 on {len(errs)} directions"] = err < 1e-5 and len(errs) == 20
    report(10, checks, time.perf_counter() - t0, 300)


# ----------------------------------------------------------------------------- 11


def _manufactured_error(M, N=3, R=5.0):
    k = math.pi / (2 * R)
    g = build_grid(N, R, M)
    r = g.nodes
    u = np.cos(k * r)
    d1, d2 = -k * np.sin(k * r), -k * k * np.cos(k * r)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(r > 0, d1 / np.tanh(r), d2)
    f = -d2 - (N - 1) * c + u
    v = solve_linear_shifted(1.0, RadialFunction(g, f))
    return float(np.max(np.abs(v.values - u)))


def test_criterion_11_infrastructure(report, tmp_path):
    t0 = time.perf_counter()
    base = {"dimension": 3, "p_range": [2.0], "q_range": [4.0], "lambda_range": [0.95, 1.0],
            "side": "lower", "methods": ["shooting"], "bisect_width": 0.01}
    a = save_map(sweep(RunConfig.from_mapping(base)), tmp_path / "a", started=0.0)
    b = save_map(sweep(RunConfig.from_mapping(base)), tmp_path / "b", started=1e6)
    c = save_map(sweep(RunConfig.from_mapping({**base, "parallelism": 2})), tmp_path / "c", started=2e6)
    pc = json.loads(payload_bytes(c))
    pc["payload"]["config"]["parallelism"] = 1
    checks = {
        "repeat sweep byte-identical": payload_bytes(a) == payload_bytes(b),
        "parallel sweep identical": json.loads(payload_bytes(a)) == pc,
        "threshold map round trip": load_map(a) == load_map(b) and load_map(a).payload() == json.loads(
            payload_bytes(a))["payload"],
    }
    u = ground_state_by_shooting(ProblemParams(3, 3.0, 2.0, 0.0)).solution
    back = RadialFunction.load(u.save(tmp_path / "profile", ProblemParams(3, 3.0, 2.0, 0.0)))
    checks["profile round trip"] = back == u
    cfg = RunConfig.from_mapping(base)
    checks["config round trip"] = RunConfig(**cfg.to_dict()) == cfg
    e = [_manufactured_error(M) for M in (100, 200, 400)]
    orders = np.log2(np.array(e[:-1]) / np.array(e[1:]))
    checks[f"manufactured orders {np.round(orders, 3).tolist()} in [1.8, 2.2]"] = \
        bool(np.all((orders >= 1.8) & (orders <= 2.2)))
    report(11, checks, time.perf_counter() - t0, 120)
