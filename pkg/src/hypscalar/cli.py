"""Command line interface.  Every subcommand takes ``--config`` (YAML or JSON) and ``--out``.

Exit codes: 0 success, 2 when a numeric verdict contradicts the theory verdict,
1 on errors.
"""
from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .cartography import (RunConfig, WindowError, _clean, dumps, run_document, save_map, sweep,
                          threshold_bisect)

EXIT_OK, EXIT_ERROR, EXIT_CONTRADICTION = 0, 1, 2


def _load(path) -> RunConfig:
    return RunConfig.from_file(path) if path else RunConfig()


def _outdir(cfg: RunConfig, out) -> Path:
    d = Path(out or cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(out: Path, name: str, payload: dict, started: float) -> Path:
    path = out / f"{name}.json"
    path.write_text(dumps(run_document(payload, started, time.time())))
    return path


def _finish(payload: dict, contradiction: bool, path: Path):
    click.echo(json.dumps(_jsonable(payload), indent=2, sort_keys=True))
    click.echo(f"written: {path}")
    sys.exit(EXIT_CONTRADICTION if contradiction else EXIT_OK)


def _default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if hasattr(x, "value"):
        return x.value
    raise TypeError(f"not serializable: {type(x)}")


def _jsonable(d):
    """Plain JSON types; non-finite floats become null / "inf" / "-inf"."""
    return _clean(json.loads(json.dumps(d, default=_default)))


def _guarded(fn):
    """Run a command body; any exception becomes exit code 1 with a message on stderr."""
    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except SystemExit:
            raise
        except Exception as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(EXIT_ERROR)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


config_opt = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                          help="YAML or JSON run configuration.")
out_opt = click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                       help="Output directory (default: output_dir from the config).")


@click.group()
def main():
    """Positive solutions of -Lap u - lambda u = u^p - u^q on hyperbolic space."""


@main.command()
@config_opt
@out_opt
@_guarded
def constants(config_path, out):
    """Closed-form thresholds, exponents and the regime verdict."""
    from .closed_forms import (classify_regime, conformal_exponents, critical_exponent, decay_exponent, lambda1,
                               lambda_pq, necessary_lower_bound, pohozaev_threshold)
    t0 = time.time()
    cfg = _load(config_path)
    N = cfg.dimension
    payload = {"N": N, "lambda_1": lambda1(N), "pohozaev_threshold": pohozaev_threshold(N),
               "critical_exponent": critical_exponent(N)}
    if cfg.p is not None and cfg.q is not None and cfg.q > cfg.p:
        lam, t = lambda_pq(cfg.p, cfg.q)
        payload.update({"lambda_pq": lam, "t_pq": t, "necessary_lower_bound": necessary_lower_bound(N, cfg.p, cfg.q)})
    if cfg.p is not None and cfg.lam is not None:
        params = cfg.params()
        payload["regime"] = classify_regime(params).to_dict()
        if cfg.q is not None:
            lt, a, b = conformal_exponents(N, cfg.p, cfg.q, cfg.lam)
            payload["conformal"] = {"lambda_tilde": lt, "alpha": a, "beta": b}
        if cfg.lam <= lambda1(N):
            payload["decay_rate"] = decay_exponent(N, cfg.lam)
    path = _write(_outdir(cfg, out), "constants", _jsonable(payload), t0)
    _finish(payload, False, path)


@main.command()
@config_opt
@out_opt
@_guarded
def solve(config_path, out):
    """Detect and store a positive radial solution (barrier, shooting, variational in the configured order)."""
    from .cartography import Verdict, exists_detector
    from .closed_forms import Verdict as Theory, classify_regime
    t0 = time.time()
    cfg = _load(config_path)
    params = cfg.params()
    verdict, ev = exists_detector(params, cfg)
    theory = classify_regime(params).verdict
    odir = _outdir(cfg, out)
    payload = {"params": params.to_dict(), "verdict": verdict.value, "theory": theory.value,
               "method": ev.method, "residual": ev.residual, "height": ev.height, "trace": ev.trace,
               "note": ev.note}
    contradiction = (verdict is Verdict.Found and theory is Theory.NotExists) or \
                    (verdict is Verdict.NotFound and theory is Theory.Exists)
    payload["contradiction"] = contradiction
    path = _write(odir, "solve", _jsonable(payload), t0)
    _finish(payload, contradiction, path)


@main.command("barrier-verify")
@config_opt
@out_opt
@_guarded
def barrier_verify(config_path, out):
    """Build the barrier pair for the regime (or barrier.strategy) and verify it."""
    from .barriers import InfeasibleError, Strategy, build_pair, default_strategy
    t0 = time.time()
    cfg = _load(config_path)
    params = cfg.params()
    opts = dict(cfg.options.get("barrier", {}))
    strat = opts.pop("strategy", None)
    strat = Strategy(strat) if strat else default_strategy(params)
    if strat is None:
        raise ValueError("no barrier strategy covers these parameters")
    odir = _outdir(cfg, out)
    try:
        pair = build_pair(params, strat, dr=opts.pop("dr", cfg.dr), **opts)
    except InfeasibleError as exc:
        payload = {"strategy": strat.value, "params": params.to_dict(), "infeasible": str(exc)}
        path = _write(odir, "barrier", payload, t0)
        _finish(payload, True, path)
        return
    pair.sub.save(odir / "barrier_sub", params)
    pair.super.save(odir / "barrier_super", params)
    payload = _jsonable(pair.to_dict())
    path = _write(odir, "barrier", payload, t0)
    _finish(payload, not all(pair.verified.values()), path)


@main.command("nehari-min")
@config_opt
@out_opt
@_guarded
def nehari_min(config_path, out):
    """Minimize the energy on the Nehari manifold (nehari.mode, nehari.tol, nehari.max_iter)."""
    from .nehari import Mode, minimize
    t0 = time.time()
    cfg = _load(config_path)
    params = cfg.params()
    opts = dict(cfg.options.get("nehari", {}))
    mode = Mode(opts.pop("mode", "Subcritical"))
    grid = cfg.grid_for(params)
    res = minimize(params, mode=mode, grid=grid, **opts)
    odir = _outdir(cfg, out)
    res.point.profile.save(odir / "nehari_profile", params)
    payload = {"params": params.to_dict(), "m_pq": res.m_pq, "iterations": res.iterations,
               "converged": res.converged, "residual": res.residual, "point": res.point.to_dict(),
               "notes": res.notes}
    payload = _jsonable(payload)
    path = _write(odir, "nehari", payload, t0)
    _finish(payload, bool(res.notes.get("warning")), path)


@main.command("bubble-scan")
@config_opt
@out_opt
@_guarded
def bubble_scan(config_path, out):
    """Bubble integrals over an epsilon schedule, fitted orders and the lifted energy check."""
    from .bubbles import DEFAULT_SCHEDULE, BubbleSpec, Kind, energy_threshold_check, estimate, zeta_choice
    t0 = time.time()
    cfg = _load(config_path)
    o = dict(cfg.options.get("bubble", {}))
    kind = Kind(o.get("kind", "Interior"))
    q = float(o.get("q", cfg.q if cfg.q is not None else 0.5))
    lam = float(o.get("lambda", cfg.lam if cfg.lam is not None else cfg.dimension * (cfg.dimension - 2) / 4 + 0.1))
    schedule = tuple(o.get("epsilon_schedule", DEFAULT_SCHEDULE))
    if kind is Kind.Boundary:
        spec = BubbleSpec(kind, cfg.dimension, schedule[0], q, lam, zeta=float(o.get("zeta", zeta_choice(q))),
                          gamma_b=float(o.get("gamma_b", 0.5)))
    else:
        spec = BubbleSpec(kind, cfg.dimension, schedule[0], q, lam, rho_cutoff=float(o.get("rho_cutoff", 0.3)))
    est = estimate(spec, schedule)
    odir = _outdir(cfg, out)
    est.to_csv(odir / "bubble_scan.csv")
    payload = est.summary()
    contradiction = False
    if q < 1:
        checks = []
        for e, vals in zip(schedule, est.integral_values):
            en, below, t = energy_threshold_check(spec.with_epsilon(e), vals)
            checks.append({"epsilon": e, "energy": en, "below_threshold": below, "t_eps": t})
        payload["energy_checks"] = checks
    payload = _jsonable(payload)
    path = _write(odir, "bubble_scan", payload, t0)
    _finish(payload, contradiction, path)


@main.command("pohozaev-check")
@config_opt
@out_opt
@_guarded
def pohozaev_check(config_path, out):
    """Pohozaev balance on a stored profile (pohozaev.profile) or a fresh solve; optional nonexistence sweep."""
    from .pohozaev import Variant, nonexistence_evidence, pohozaev_residual
    from .radial import RadialFunction
    from .solvers import ground_state_by_shooting
    t0 = time.time()
    cfg = _load(config_path)
    params = cfg.params()
    o = dict(cfg.options.get("pohozaev", {}))
    payload = {"params": params.to_dict()}
    contradiction = False
    if o.get("evidence", False):
        rep = nonexistence_evidence(params)
        payload["nonexistence"] = rep.to_dict()
        contradiction = rep.contradiction
    else:
        if "profile" in o:
            u = RadialFunction.load(o["profile"])
        else:
            rep = ground_state_by_shooting(params, grid=cfg.grid_for(params), tol=cfg.tol)
            if rep.solution is None or not rep.converged:
                raise RuntimeError("no solution to audit")
            u = rep.solution
        report = pohozaev_residual(u, params, Variant(o.get("variant", "Interior")))
        payload["pohozaev"] = report.to_dict()
        contradiction = abs(report.relative_residual) > float(o.get("tolerance", 1e-3))
    payload = _jsonable(payload)
    path = _write(_outdir(cfg, out), "pohozaev", payload, t0)
    _finish(payload, contradiction, path)


@main.command("threshold-map")
@config_opt
@out_opt
@_guarded
def threshold_map(config_path, out):
    """Bisect lambda for the existence boundary at fixed (N, p, q) over lambda_range."""
    from .cartography import Axis, ThresholdMap
    t0 = time.time()
    cfg = _load(config_path)
    if cfg.p is None or cfg.lambda_range is None:
        raise ValueError("threshold-map needs p, q and lambda_range")
    odir = _outdir(cfg, out)
    try:
        entry = threshold_bisect(cfg.dimension, cfg.p, cfg.q, cfg.lambda_range, cfg)
    except WindowError as exc:
        payload = {"error": str(exc), "config": cfg.to_dict()}
        path = _write(odir, "threshold_map", _jsonable(payload), t0)
        _finish(payload, True, path)
        return
    tmap = ThresholdMap(Axis.LambdaAtFixedPQ, [entry], cfg.to_dict())
    path = save_map(tmap, odir, "threshold_map", t0)
    gap = entry.gap
    _finish(tmap.payload(), gap is not None and abs(gap) > 0.05, path)


@main.command("sweep")
@config_opt
@out_opt
@_guarded
def sweep_cmd(config_path, out):
    """Threshold bisection over a (p, q) grid; JSON document plus aggregate CSV."""
    t0 = time.time()
    cfg = _load(config_path)
    tmap = sweep(cfg)
    path = save_map(tmap, _outdir(cfg, out), "sweep", t0)
    bad = any(e.error or (e.gap is not None and abs(e.gap) > 0.05) for e in tmap.entries)
    bad = bad or bool(tmap.check_monotone())
    _finish(tmap.payload(), bad, path)


def run(argv=None):
    """Console entry point: click usage errors exit with 1 so that 2 keeps its contradiction meaning."""
    try:
        rv = main.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(EXIT_ERROR)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_ERROR)
    sys.exit(rv if isinstance(rv, int) else EXIT_OK)


if __name__ == "__main__":
    run()
