"""Existence detection, lambda-bisection of numeric thresholds, (p, q) sweeps and run persistence."""
from __future__ import annotations

import csv
import datetime as _dt
import enum
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .closed_forms import (Criticality, ProblemParams, lambda1, lambda_pq, p_criticality, pohozaev_threshold)
from .radial import pde_residual
from .solvers import default_grid, ground_state_by_shooting, monotone_iterate, _regularization

FOUND_MIN_HEIGHT = 1e-4
FOUND_TOL = 1e-7
NEAR_THRESHOLD = 1e-2
METHODS = ("barrier", "shooting", "nehari")
SECTIONS = ("barrier", "nehari", "bubble", "pohozaev", "solve")


class Verdict(str, enum.Enum):
    Found = "Found"
    NotFound = "NotFound"


class Axis(str, enum.Enum):
    LambdaAtFixedPQ = "LambdaAtFixedPQ"
    PQGrid = "PQGrid"


class WindowError(ValueError):
    pass


# ----------------------------------------------------------------------------- configuration


def _expand_range(spec) -> list:
    """[a, b, ...] literal list, or {start, stop, num} for an inclusive linspace."""
    if spec is None:
        return []
    if isinstance(spec, dict):
        return [float(x) for x in np.linspace(spec["start"], spec["stop"], int(spec["num"]))]
    if isinstance(spec, (int, float)):
        return [float(spec)]
    return [float(x) for x in spec]


@dataclass
class RunConfig:
    dimension: int = 3
    p: Optional[float] = None
    q: Optional[float] = None
    lam: Optional[float] = None
    lambda_range: Optional[tuple] = None
    p_range: list = field(default_factory=list)
    q_range: list = field(default_factory=list)
    r_max: Optional[float] = None
    nodes: Optional[int] = None
    dr: float = 0.01
    tol: float = 1e-9
    found_tol: float = FOUND_TOL
    methods: tuple = METHODS
    bisect_width: float = 1e-2
    scan_step: Optional[float] = None
    side: str = "lower"
    output_dir: str = "runs"
    parallelism: int = 1
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p_range = _expand_range(self.p_range)
        self.q_range = _expand_range(self.q_range)
        if self.lambda_range is not None:
            self.lambda_range = tuple(float(x) for x in self.lambda_range)
            if len(self.lambda_range) != 2 or not self.lambda_range[0] < self.lambda_range[1]:
                raise ValueError("lambda_range must be an increasing pair")
        self.methods = tuple(self.methods)
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"unknown or empty methods: {bad}")
        if self.scan_step is None:
            self.scan_step = 2.0 * self.bisect_width
        for name in ("dr", "tol", "found_tol", "bisect_width", "scan_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.side not in ("lower", "upper"):
            raise ValueError("side must be 'lower' or 'upper'")
        if self.r_max is not None and not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if self.nodes is not None and self.nodes < 10:
            raise ValueError("nodes must be >= 10")

    @classmethod
    def from_mapping(cls, d: dict) -> "RunConfig":
        """Flat keys or the documented nested layout (grid.*, solver.*, sweep.*)."""
        d = dict(d)
        flat = {"options": {k: d.pop(k) for k in SECTIONS if k in d}}
        for group in ("grid", "solver", "sweep"):
            sub = d.pop(group, None) or {}
            for k, v in sub.items():
                key = {"method": "methods"}.get(k, k)
                flat[key] = v
        flat.update(d)
        if "lambda" in flat:
            flat["lam"] = flat.pop("lambda")
        if "N" in flat:
            flat["dimension"] = flat.pop("N")
        if isinstance(flat.get("methods"), str):
            flat["methods"] = [flat["methods"]]
        known = set(cls.__dataclass_fields__)
        unknown = set(flat) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**flat)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() in (".yaml", ".yml"):
            import yaml
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["lambda_range"] = None if self.lambda_range is None else list(self.lambda_range)
        return d

    def params(self) -> ProblemParams:
        if self.p is None or self.lam is None:
            raise ValueError("config needs p and lambda")
        return ProblemParams(self.dimension, self.p, self.q, self.lam)

    def grid_for(self, params: ProblemParams):
        if self.r_max is not None and self.nodes is not None:
            from .radial import build_grid
            return build_grid(params.N, self.r_max, self.nodes)
        return default_grid(params.N, params.lam, self.dr)


# ----------------------------------------------------------------------------- detector


@dataclass
class Evidence:
    method: Optional[str]
    residual: Optional[float]
    height: Optional[float] = None
    trace: list = field(default_factory=list)
    note: str = ""


def theory_boundaries(params: ProblemParams) -> list:
    """Endpoints of the known existence windows for this exponent pair."""
    N, p, q = params.N, params.p, params.q
    out = [lambda1(N)]
    if q is not None and q > p:
        out.append(-lambda_pq(p, q)[0])
    if p_criticality(N, p) is not Criticality.Subcritical:
        out.append(pohozaev_threshold(N))
    return out


def _near_boundary(params: ProblemParams) -> bool:
    return any(abs(params.lam - b) <= NEAR_THRESHOLD for b in theory_boundaries(params))


def _accept(u, params: ProblemParams, found_tol: float):
    """(ok, residual, height, note): positive, nontrivial, small residual, tail consistent with the regime."""
    if u is None:
        return False, None, None, "no profile"
    height = float(np.max(u.values))
    if not height > FOUND_MIN_HEIGHT:
        return False, None, height, "trivial profile"
    if np.min(u.values) < -1e-12 * height:
        return False, None, height, "sign change"
    res, _ = pde_residual(u, params, _regularization(params))
    if not res < found_tol:
        return False, res, height, "residual above tolerance"
    tail = u.values[int(0.9 * u.grid.M):]
    if np.max(np.abs(tail)) > 1e-3 * height:
        return False, res, height, "no decay before r_max"
    return True, res, height, ""


def _try_barrier(params, cfg, grid):
    from .barriers import InfeasibleError, HypothesisError, build_pair, default_strategy
    strat = default_strategy(params)
    if strat is None:
        return None, "no barrier strategy covers the regime"
    try:
        pair = build_pair(params, strat, grid=grid, dr=cfg.dr)
    except (HypothesisError, InfeasibleError, RuntimeError, ValueError) as exc:
        return None, f"{strat.value}: {exc}"
    if not pair.verified:
        return None, f"{strat.value}: pair failed verification"
    try:
        rep = monotone_iterate(pair.sub, pair.super, params, tol=cfg.tol)
    except Exception as exc:  # MonotonicityError, SolverError
        return None, f"{strat.value}: {type(exc).__name__}: {exc}"
    return rep.solution, strat.value


def _try_shooting(params, cfg, grid):
    try:
        rep = ground_state_by_shooting(params, grid=grid, tol=cfg.tol)
    except Exception as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return rep.solution, rep.notes.get("status", "")


def _nehari_applies(params: ProblemParams) -> bool:
    q = params.q
    if q is None or q > params.p:
        return False
    if p_criticality(params.N, params.p) is not Criticality.Subcritical:
        return False
    return q < 1 or params.lam < lambda1(params.N)


def _try_nehari(params, cfg, grid):
    if not _nehari_applies(params):
        return None, "variational route not applicable"
    from .nehari import minimize
    try:
        res = minimize(params, grid=grid, tol=min(cfg.tol, 1e-12))
    except Exception as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return res.point.profile, f"m={res.m_pq:.10g}"


_LEGS = {"barrier": _try_barrier, "shooting": _try_shooting, "nehari": _try_nehari}


def _detect_job(args):
    return exists_detector(*args)


def exists_detector(params: ProblemParams, config: Optional[RunConfig] = None):
    """(Verdict, Evidence): first method in the configured order that yields an accepted solution.

    Within NEAR_THRESHOLD of a theory boundary a NotFound is re-tried once with
    doubled r_max and halved tolerances.
    """
    cfg = config or RunConfig()
    trace = []

    def run(cfg_, grid):
        for m in cfg_.methods:
            u, note = _LEGS[m](params, cfg_, grid)
            ok, res, height, why = _accept(u, params, cfg_.found_tol)
            trace.append({"method": m, "accepted": ok, "residual": res, "note": note or why, "r_max": grid.r_max})
            if ok:
                return Verdict.Found, Evidence(m, res, height, trace)
        return None

    grid = cfg.grid_for(params)
    out = run(cfg, grid)
    if out is None and _near_boundary(params):
        from .radial import build_grid
        cfg2 = RunConfig(**{**cfg.to_dict(), "tol": cfg.tol / 2, "found_tol": cfg.found_tol / 2,
                            "r_max": None, "nodes": None})
        grid2 = build_grid(params.N, 2 * grid.r_max, 2 * grid.M)
        out = run(cfg2, grid2)
    if out is not None:
        return out
    note = ""
    if abs(params.lam - lambda1(params.N)) <= NEAR_THRESHOLD:
        note = "NotFound refers to the H^1 energy framework"
    return Verdict.NotFound, Evidence(None, None, None, trace, note)


# ----------------------------------------------------------------------------- bisection


@dataclass
class ThresholdEntry:
    p: float
    q: Optional[float]
    N: int
    window: tuple
    side: str
    numeric_boundary: Optional[float]
    theory_boundary: float
    gap: Optional[float]
    evaluations: list
    error: str = ""

    def key(self):
        return (self.N, self.p, -1.0 if self.q is None else self.q)


def theory_boundary_for(N: int, p: float, q: Optional[float], side: str) -> float:
    """-lambda_pq (p<q, lower), lambda_1 (upper), N(N-2)/4 (critical/supercritical lower)."""
    if side == "upper":
        return lambda1(N)
    if q is not None and q > p:
        return -lambda_pq(p, q)[0]
    if p_criticality(N, p) is not Criticality.Subcritical:
        return pohozaev_threshold(N)
    return -math.inf


def threshold_bisect(N: int, p: float, q: Optional[float], lambda_window, config: Optional[RunConfig] = None,
                     side: Optional[str] = None) -> ThresholdEntry:
    """Bisection on lambda to the configured width between a Found and a NotFound verdict.

    Endpoints are evaluated first.  If they agree, the window is scanned with
    spacing ``scan_step``; for side="lower" the bracket is (last NotFound, first
    Found), for side="upper" (last Found, first NotFound after it).  A window
    with a uniform verdict raises WindowError naming the endpoint verdicts.
    """
    cfg = config or RunConfig()
    side = side or cfg.side
    lo, hi = float(lambda_window[0]), float(lambda_window[1])
    if not lo < hi:
        raise ValueError("lambda window must be increasing")
    evals = {}

    def verdict(lam):
        lam = float(lam)
        if lam not in evals:
            v, ev = exists_detector(ProblemParams(N, p, q, lam), cfg)
            evals[lam] = (v, ev)
        return evals[lam][0]

    vl, vh = verdict(lo), verdict(hi)
    pts = [lo, hi]
    if vl == vh:
        n = max(int(math.ceil((hi - lo) / cfg.scan_step)), 2)
        pts = [float(x) for x in np.linspace(lo, hi, n + 1)]
        inner = pts[1:-1]
        if cfg.parallelism > 1:
            jobs = [(ProblemParams(N, p, q, x), cfg) for x in inner]
            with ProcessPoolExecutor(max_workers=cfg.parallelism) as ex:
                for x, out in zip(inner, ex.map(_detect_job, jobs)):
                    evals[x] = out
        else:
            for x in inner:
                verdict(x)
    seq = [(x, evals[x][0]) for x in pts]
    bracket = None
    if side == "lower":
        for (a, va), (b, vb) in zip(seq[:-1], seq[1:]):
            if va is Verdict.NotFound and vb is Verdict.Found:
                bracket = (a, b)
                break
    else:
        for (a, va), (b, vb) in zip(seq[:-1], seq[1:]):
            if va is Verdict.Found and vb is Verdict.NotFound:
                bracket = (a, b)
    if bracket is None:
        raise WindowError(f"no {side} verdict change in [{lo}, {hi}]: endpoints {vl.value} / {vh.value}, "
                          f"scan {[v.value for _, v in seq]}")
    a, b = bracket
    while b - a > cfg.bisect_width:
        m = 0.5 * (a + b)
        vm = verdict(m)
        inside = vm is Verdict.Found
        if side == "lower":
            a, b = (a, m) if inside else (m, b)
        else:
            a, b = (m, b) if inside else (a, m)
    lam_star = 0.5 * (a + b)
    theory = theory_boundary_for(N, p, q, side)
    gap = lam_star - theory if math.isfinite(theory) else None
    ev = [{"lambda": lam, "verdict": v.value, "method": e.method, "residual": e.residual}
          for lam, (v, e) in sorted(evals.items())]
    return ThresholdEntry(p, q, N, (lo, hi), side, lam_star, theory, gap, ev)


# ----------------------------------------------------------------------------- sweeps


@dataclass
class ThresholdMap:
    axis: Axis
    entries: list
    config: dict

    def __post_init__(self):
        self.axis = Axis(self.axis)
        self.entries = sorted(self.entries, key=lambda e: e.key())

    @property
    def numeric_boundary(self) -> dict:
        return {_pq_key(e): e.numeric_boundary for e in self.entries}

    @property
    def theory_boundary(self) -> dict:
        return {_pq_key(e): e.theory_boundary for e in self.entries}

    @property
    def gap(self) -> dict:
        return {_pq_key(e): e.gap for e in self.entries}

    def payload(self) -> dict:
        return {"axis": self.axis.value, "config": self.config,
                "entries": [_entry_to_dict(e) for e in self.entries]}

    @classmethod
    def from_payload(cls, d: dict) -> "ThresholdMap":
        ents = [ThresholdEntry(**{**e, "window": tuple(e["window"])}) for e in d["entries"]]
        return cls(Axis(d["axis"]), ents, d["config"])

    def __eq__(self, other):
        return isinstance(other, ThresholdMap) and self.payload() == other.payload()

    def check_monotone(self) -> list:
        """(p, q, lambda) where a NotFound sits between two Found verdicts in lambda order."""
        bad = []
        for e in self.entries:
            vs = [x for x in e.evaluations]
            for i in range(1, len(vs) - 1):
                if vs[i]["verdict"] == "NotFound" and any(v["verdict"] == "Found" for v in vs[:i]) \
                        and any(v["verdict"] == "Found" for v in vs[i + 1:]):
                    bad.append((e.p, e.q, vs[i]["lambda"]))
        return bad


def _pq_key(e: ThresholdEntry) -> str:
    return f"N={e.N},p={e.p:.12g},q={'none' if e.q is None else format(e.q, '.12g')}"


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def _entry_to_dict(e: ThresholdEntry) -> dict:
    d = asdict(e)
    d["window"] = list(e.window)
    if isinstance(d["theory_boundary"], float) and not math.isfinite(d["theory_boundary"]):
        d["theory_boundary"] = None
    return d


def _sweep_job(args):
    N, p, q, window, cfg_dict, side = args
    cfg = RunConfig(**{**cfg_dict, "lambda_range": tuple(cfg_dict["lambda_range"]) if cfg_dict["lambda_range"] else None})
    try:
        return threshold_bisect(N, p, q, window, cfg, side)
    except Exception as exc:
        return ThresholdEntry(p, q, N, tuple(window), side, None, theory_boundary_for(N, p, q, side), None, [],
                              f"{type(exc).__name__}: {exc}")


def sweep(config: RunConfig) -> ThresholdMap:
    """Threshold bisection over the configured (p, q) grid; pairs with p >= q are skipped for side='lower'."""
    N = config.dimension
    ps = config.p_range or ([config.p] if config.p is not None else [])
    qs = config.q_range or ([config.q] if config.q is not None else [None])
    if not ps:
        raise ValueError("sweep needs p or p_range")
    window = config.lambda_range or (-1.0, lambda1(N))
    jobs = []
    for p in ps:
        for q in qs:
            if q is not None and q == p:
                continue
            if q is not None and q == 1:
                continue
            jobs.append((N, float(p), None if q is None else float(q), tuple(window), config.to_dict(), config.side))
    jobs.sort(key=lambda j: (j[1], -1.0 if j[2] is None else j[2]))
    if config.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.parallelism) as ex:
            entries = list(ex.map(_sweep_job, jobs))
    else:
        entries = [_sweep_job(j) for j in jobs]
    axis = Axis.PQGrid if len(jobs) > 1 else Axis.LambdaAtFixedPQ
    return ThresholdMap(axis, entries, config.to_dict())


# ----------------------------------------------------------------------------- persistence


def run_document(result_payload: dict, started: float, finished: float) -> dict:
    """Payload plus a sidecar holding everything time-dependent."""
    return {"payload": _clean(result_payload),
            "sidecar": {"started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
                        "finished": _dt.datetime.fromtimestamp(finished, _dt.timezone.utc).isoformat(),
                        "wall_time": finished - started}}


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)


def save_map(tmap: ThresholdMap, out_dir, name: str = "threshold_map", started: Optional[float] = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time() if started is None else started
    doc = run_document(tmap.payload(), started, time.time())
    path = out / f"{name}.json"
    path.write_text(dumps(doc))
    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "p", "q", "side", "lambda_num", "theory", "gap", "error"])
        for e in tmap.entries:
            w.writerow([e.N, repr(e.p), "" if e.q is None else repr(e.q), e.side,
                        "" if e.numeric_boundary is None else repr(e.numeric_boundary),
                        repr(e.theory_boundary), "" if e.gap is None else repr(e.gap), e.error])
    return path


def _unclean(x):
    if x == "inf":
        return math.inf
    if x == "-inf":
        return -math.inf
    if isinstance(x, dict):
        return {k: _unclean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_unclean(v) for v in x]
    return x


def load_map(path) -> ThresholdMap:
    doc = json.loads(Path(path).read_text())
    payload = _unclean(doc["payload"])
    for e in payload["entries"]:
        if e["theory_boundary"] is None:
            e["theory_boundary"] = -math.inf
    return ThresholdMap.from_payload(payload)


def payload_bytes(path) -> bytes:
    """The JSON document without its sidecar, re-serialized canonically."""
    doc = json.loads(Path(path).read_text())
    doc.pop("sidecar", None)
    return dumps(doc).encode()
