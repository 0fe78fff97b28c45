"""Radial grids, the discrete operator -u'' - (N-1) coth(r) u' - lambda u, quadrature, residuals.

Unknowns live on nodes 0 = r_0 < ... < r_M = R_max.  The last node carries the
homogeneous Dirichlet condition, so equations are written for rows 0..M-1.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .closed_forms import ProblemParams
from .geometry import radial_measure_weight, sphere_area

COTH_SERIES_CUTOFF = 1e-6
Q_REGULARIZATION = 1e-8


class Spacing(str, enum.Enum):
    Uniform = "Uniform"
    Graded = "Graded"


@dataclass(frozen=True, eq=False)
class RadialGrid:
    N: int
    nodes: np.ndarray
    weights: np.ndarray
    policy: Spacing = Spacing.Uniform

    @property
    def M(self) -> int:
        return len(self.nodes) - 1

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    def meta(self) -> dict:
        return {"N": self.N, "r_max": self.r_max, "M": self.M, "policy": self.policy.value}

    def __eq__(self, other):
        return (isinstance(other, RadialGrid) and self.N == other.N and self.policy == other.policy
                and np.array_equal(self.nodes, other.nodes))


def build_grid(N: int, r_max: float, M: int, policy: Spacing | str = Spacing.Uniform,
               grading: float = 2.0) -> RadialGrid:
    """Grid on [0, r_max] with M cells.

    Graded grids use r = r_max sinh(k x)/sinh(k), x uniform on [0, 1], which
    clusters nodes near the origin.
    """
    policy = Spacing(policy)
    if not (r_max > 0 and math.isfinite(r_max)):
        raise ValueError(f"r_max must be positive, got {r_max}")
    if M < 16:
        raise ValueError(f"need at least 16 cells, got M={M}")
    x = np.linspace(0.0, 1.0, M + 1)
    if policy is Spacing.Uniform:
        nodes = r_max * x
    else:
        nodes = r_max * np.sinh(grading * x) / math.sinh(grading)
    nodes[0] = 0.0
    nodes[-1] = r_max
    return RadialGrid(N, nodes, trapezoid_weights(N, nodes), policy)


def trapezoid_weights(N: int, nodes: np.ndarray) -> np.ndarray:
    dr = np.diff(nodes)
    cell = np.zeros_like(nodes)
    cell[:-1] += 0.5 * dr
    cell[1:] += 0.5 * dr
    return radial_measure_weight(N, nodes) * cell


@dataclass(eq=False)
class RadialFunction:
    grid: RadialGrid
    values: np.ndarray
    decay_tag: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.nodes.shape:
            raise ValueError("values and grid nodes have different lengths")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("profile values must be finite")

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def copy(self, values=None) -> "RadialFunction":
        return RadialFunction(self.grid, self.values.copy() if values is None else values,
                              self.decay_tag, dict(self.meta))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __eq__(self, other):
        return (isinstance(other, RadialFunction) and self.grid == other.grid
                and np.array_equal(self.values, other.values) and self.decay_tag == other.decay_tag)

    # serialization: two-column CSV plus a JSON envelope
    def save(self, stem, params: Optional[ProblemParams] = None) -> Path:
        stem = Path(stem)
        csv_path = stem.with_suffix(".csv")
        np.savetxt(csv_path, np.column_stack([self.grid.nodes, self.values]), delimiter=",",
                   header="r,u", comments="", fmt="%.17g")
        env = {"grid": self.grid.meta(), "decay_tag": self.decay_tag, "meta": self.meta,
               "params": None if params is None else params.to_dict(), "data": csv_path.name}
        json_path = stem.with_suffix(".json")
        json_path.write_text(json.dumps(env, indent=2, sort_keys=True))
        return json_path

    @classmethod
    def load(cls, json_path) -> "RadialFunction":
        json_path = Path(json_path)
        env = json.loads(json_path.read_text())
        data = np.loadtxt(json_path.parent / env["data"], delimiter=",", skiprows=1, ndmin=2)
        g = env["grid"]
        nodes = data[:, 0]
        grid = RadialGrid(int(g["N"]), nodes, trapezoid_weights(int(g["N"]), nodes), Spacing(g["policy"]))
        return cls(grid, data[:, 1], env.get("decay_tag"), env.get("meta", {}))


def coth(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = np.abs(r) < COTH_SERIES_CUTOFF
    with np.errstate(divide="ignore"):
        out[small] = 1.0 / r[small] + r[small] / 3.0
    out[~small] = 1.0 / np.tanh(r[~small])
    return out


def operator_bands(grid: RadialGrid, lam: float = 0.0):
    """Tridiagonal coefficients of -u'' - (N-1) coth(r) u' - lam u on rows 0..M-1.

    Returns (lower, diag, upper), each of length M; lower[0] and the coupling of
    row M-1 to the Dirichlet node are kept for completeness (upper[M-1]).
    Row 0 uses the symmetric expansion u'(0) = 0, giving -N u''(0).
    """
    r = grid.nodes
    N = grid.N
    M = grid.M
    hm = np.empty(M)
    hp = np.empty(M)
    hp[:] = r[1:] - r[:-1]
    hm[1:] = r[1:M] - r[0:M - 1]
    hm[0] = hp[0]
    lower = np.zeros(M)
    diag = np.zeros(M)
    upper = np.zeros(M)
    # interior rows i = 1..M-1, nonuniform central differences
    i = np.arange(1, M)
    a, b = hm[i], hp[i]
    c = (N - 1) * coth(r[i])
    d2m = 2.0 / (a * (a + b))
    d2p = 2.0 / (b * (a + b))
    d2c = -2.0 / (a * b)
    d1m = -b / (a * (a + b))
    d1p = a / (b * (a + b))
    d1c = (b - a) / (a * b)
    lower[i] = -(d2m + c * d1m)
    diag[i] = -(d2c + c * d1c) - lam
    upper[i] = -(d2p + c * d1p)
    # origin row: -N * 2 (u_1 - u_0) / h^2
    h0 = hp[0]
    diag[0] = 2.0 * N / h0 ** 2 - lam
    upper[0] = -2.0 * N / h0 ** 2
    return lower, diag, upper


def apply_operator(u: RadialFunction, lam: float) -> RadialFunction:
    """(-u'' - (N-1) coth(r) u' - lam u) at rows 0..M-1; the Dirichlet row M is returned as 0."""
    lo, di, up = operator_bands(u.grid, lam)
    v = u.values
    out = np.zeros_like(v)
    out[:-1] = di * v[:-1] + up * v[1:]
    out[1:-1] += lo[1:] * v[:-2]
    return RadialFunction(u.grid, out, meta={"boundary_rows": [u.grid.M]})


def integrate(f: RadialFunction | np.ndarray, power: float = 1.0, grid: Optional[RadialGrid] = None) -> float:
    """Sum_i w_i |f_i|^power with hyperbolic trapezoid weights."""
    if isinstance(f, RadialFunction):
        grid, vals = f.grid, f.values
    else:
        vals = np.asarray(f, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        vals_p = np.abs(vals) ** power
    if not np.all(np.isfinite(vals_p)):
        bad = int(np.argmax(~np.isfinite(vals_p)))
        raise OverflowError(f"|f|^{power} overflows at node {bad}")
    return float(np.dot(grid.weights, vals_p))


def signed_power(u, e):
    return np.sign(u) * np.abs(u) ** e


def source_terms(u, p: float, q: Optional[float], delta: float = 0.0):
    """u^p - u^q (odd extensions) and its derivative.

    For q < 1 and ``delta > 0`` the defocusing power is regularized as
    sign(u) ((|u| + delta)^q - delta^q), which is Lipschitz at 0.
    """
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    f = signed_power(u, p)
    df = p * au ** (p - 1)
    if q is not None:
        if q < 1 and delta > 0:
            f = f - np.sign(u) * ((au + delta) ** q - delta ** q)
            df = df - q * (au + delta) ** (q - 1)
        else:
            f = f - signed_power(u, q)
            with np.errstate(divide="ignore"):
                dq = q * au ** (q - 1)
            df = df - np.where(au > 0, dq, 0.0 if q > 1 else np.inf)
    return f, df


def full_nonlinearity(u, params: ProblemParams, delta: float = 0.0):
    """f(s) = lambda s + s^p - s^q and f'(s)."""
    g, dg = source_terms(u, params.p, params.q, delta)
    return params.lam * np.asarray(u, dtype=float) + g, params.lam + dg


def pde_residual(u: RadialFunction, params: ProblemParams, delta: float = 0.0):
    """Sup-norm residual of -Lap u - lam u - (u^p - u^q) over rows 0..M-1, and the per-node vector."""
    if params.q is not None and params.q < 1 and np.any(u.values < 0):
        raise ValueError("negative values with q < 1: fractional power undefined")
    Lu = apply_operator(u, params.lam).values
    g, _ = source_terms(u.values, params.p, params.q, delta)
    res = Lu - g
    res[-1] = 0.0
    return float(np.max(np.abs(res[:-1]))), res


def fit_decay_rate(u: RadialFunction, window=(0.35, 0.75), floor: float = 1e-13) -> float:
    """Least-squares slope of -log u against r over a fractional window of the grid.

    Since 1 - |x|^2 = cosh^{-2}(r/2) ~ 4 e^{-r}, this rate equals the boundary
    exponent in (1 - |x|^2) units.
    """
    r = u.r
    lo, hi = window[0] * r[-1], window[1] * r[-1]
    m = (r >= lo) & (r <= hi) & (u.values > floor)
    if m.sum() < 3:
        raise ValueError("not enough positive samples in the fit window")
    slope, _ = np.polyfit(r[m], np.log(u.values[m]), 1)
    return float(-slope)


def surface_area(N: int) -> float:
    return sphere_area(N)
