"""Closed-form constants and the existence-regime classifier.

Everything here is a pure function of (N, p, q, lambda).  The equation is

    -Delta_B u - lambda u = |u|^{p-1} u - |u|^{q-1} u    on the Poincare ball B^N.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple


class Ordering(str, enum.Enum):
    PltQ = "PltQ"
    QltOneLtP = "QltOneLtP"
    OneLtQltP = "OneLtQltP"


class Criticality(str, enum.Enum):
    Subcritical = "Subcritical"
    Critical = "Critical"
    Supercritical = "Supercritical"


class Verdict(str, enum.Enum):
    Exists = "Exists"
    NotExists = "NotExists"
    OpenEndpoint = "OpenEndpoint"
    AssumptionRequired = "AssumptionRequired"


# relative tolerance used to decide p == 2*-1 and lambda at a window endpoint
_CRIT_TOL = 1e-12


@dataclass(frozen=True)
class ProblemParams:
    """(N, p, q, lambda).  ``q=None`` drops the defocusing term entirely."""

    N: int
    p: float
    q: Optional[float]
    lam: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ValueError(f"dimension must be an integer >= 3, got {self.N}")
        vals = [self.p, self.lam] + ([] if self.q is None else [self.q])
        if not all(math.isfinite(float(v)) for v in vals):
            raise ValueError("parameters must be finite")
        if self.p <= 1:
            raise ValueError(f"focusing exponent must exceed 1, got p={self.p}")
        if self.q is not None:
            if self.q <= 0:
                raise ValueError(f"defocusing exponent must be positive, got q={self.q}")
            if self.q == 1:
                raise ValueError("q = 1 (logarithmic limit) is not supported")
            if self.q == self.p:
                raise ValueError("q = p cancels the nonlinearity")

    def with_lambda(self, lam: float) -> "ProblemParams":
        return ProblemParams(self.N, self.p, self.q, float(lam))

    @property
    def criticality(self) -> Criticality:
        return p_criticality(self.N, self.p)

    def to_dict(self) -> dict:
        return {"N": self.N, "p": self.p, "q": self.q, "lambda": self.lam}

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemParams":
        lam = d["lambda"] if "lambda" in d else d["lam"]
        return cls(int(d["N"]), float(d["p"]), None if d.get("q") is None else float(d["q"]), float(lam))


def _check_dim(N):
    if int(N) != N or N < 3:
        raise ValueError(f"dimension must be an integer >= 3, got {N}")


def lambda1(N: int) -> float:
    """Bottom of the L^2 spectrum of -Delta_B, (N-1)^2/4."""
    _check_dim(N)
    return (N - 1) ** 2 / 4.0


def critical_exponent(N: int) -> float:
    """Sobolev exponent 2* = 2N/(N-2)."""
    _check_dim(N)
    return 2.0 * N / (N - 2)


def pohozaev_threshold(N: int) -> float:
    """N(N-2)/4, the value where the conformal shift vanishes."""
    _check_dim(N)
    return N * (N - 2) / 4.0


def p_criticality(N: int, p: float) -> Criticality:
    pc = critical_exponent(N) - 1.0
    if abs(p - pc) <= _CRIT_TOL * pc:
        return Criticality.Critical
    return Criticality.Subcritical if p < pc else Criticality.Supercritical


def h_pq(t: float, p: float, q: float) -> float:
    """t^{p-1} - t^{q-1} on [0, 1]."""
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if not (1.0 < p < q):
        raise ValueError("requires 1 < p < q")
    return t ** (p - 1) - t ** (q - 1)


def lambda_pq(p: float, q: float) -> Tuple[float, float]:
    """Maximum value and maximizer of t^{p-1} - t^{q-1} on [0, 1].

    With a = (p-1)/(q-1) the maximizer is a^{1/(q-p)} and the maximum is
    a^{(p-1)/(q-p)} - a^{(q-1)/(q-p)}.  Evaluated in log space so that the
    limits q -> p and p -> 1 stay finite.
    """
    if not (p > 1.0 and q > p):
        raise ValueError(f"requires 1 < p < q, got p={p}, q={q}")
    d = q - p
    log_a = math.log(p - 1) - math.log(q - 1)
    log_t = log_a / d
    t = math.exp(log_t)
    # lambda = t^{p-1} (1 - t^{q-p}) = t^{p-1} (1 - a)
    lam = math.exp((p - 1) * log_t) * (d / (q - 1))
    return lam, t


def decay_exponent(N: int, lam: float) -> float:
    """c(N, lambda) = (N-1 + sqrt((N-1)^2 - 4 lambda)) / 2."""
    l1 = lambda1(N)
    if lam > l1:
        raise ValueError(f"lambda={lam} exceeds lambda_1={l1}: complex decay rate")
    return 0.5 * (N - 1 + math.sqrt(max((N - 1) ** 2 - 4.0 * lam, 0.0)))


def slow_decay_exponent(N: int, lam: float) -> float:
    """The other root (N-1 - sqrt(...))/2 of the indicial equation at infinity."""
    l1 = lambda1(N)
    if lam > l1:
        raise ValueError(f"lambda={lam} exceeds lambda_1={l1}")
    return 0.5 * (N - 1 - math.sqrt(max((N - 1) ** 2 - 4.0 * lam, 0.0)))


def conformal_exponents(N: int, p: float, q: float, lam: float) -> Tuple[float, float, float]:
    """(lambda_tilde, alpha, beta) of the Euclidean-ball problem after the conformal lift."""
    _check_dim(N)
    lam_t = lam - N * (N - 2) / 4.0
    alpha = N - (p + 1) * (N - 2) / 2.0
    beta = N - (q + 1) * (N - 2) / 2.0
    return lam_t, alpha, beta


@dataclass(frozen=True)
class RegimeClassification:
    exponent_order: Optional[Ordering]
    p_criticality: Criticality
    verdict: Verdict
    threshold_window: Tuple[float, float]  # (lo, hi), lo may be -inf, hi may be +inf
    window_closed: Tuple[bool, bool]
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "exponent_order": None if self.exponent_order is None else self.exponent_order.value,
            "p_criticality": self.p_criticality.value,
            "verdict": self.verdict.value,
            "threshold_window": list(self.threshold_window),
            "window_closed": list(self.window_closed),
            "note": self.note,
        }


def _near(a: float, b: float) -> bool:
    return abs(a - b) <= _CRIT_TOL * max(1.0, abs(b))


def classify_regime(params: ProblemParams) -> RegimeClassification:
    """Existence verdict from the known existence and nonexistence windows."""
    N, p, q, lam = params.N, params.p, params.q, params.lam
    crit = p_criticality(N, p)
    l1 = lambda1(N)
    thr = pohozaev_threshold(N)
    inf = math.inf

    if q is None:
        # pure power: subcritical exists iff lambda < lambda_1, critical iff thr < lambda < lambda_1
        lo = -inf if crit is Criticality.Subcritical else thr
        if crit is Criticality.Supercritical:
            v = Verdict.NotExists if lam <= thr else Verdict.AssumptionRequired
            return RegimeClassification(None, crit, v, (thr, l1), (False, False), "pure power, supercritical")
        inside = (lam < l1) and (lam > lo)
        return RegimeClassification(None, crit, Verdict.Exists if inside else Verdict.NotExists,
                                    (lo, l1), (False, False), "pure power")

    if p < q:
        order = Ordering.PltQ
        lpq, _ = lambda_pq(p, q)
        window = (-lpq, l1)
        if crit is Criticality.Supercritical and -lpq <= lam < l1:
            v = Verdict.AssumptionRequired
            note = "p supercritical: existence proved for bounded decaying solutions only"
        elif _near(lam, l1):
            v, note = Verdict.OpenEndpoint, "lambda = lambda_1 is not covered"
        elif -lpq <= lam < l1 or _near(lam, -lpq):
            v, note = Verdict.Exists, ""
        else:
            v, note = Verdict.NotExists, ""
        return RegimeClassification(order, crit, v, window, (True, False), note)

    if q < 1:
        order = Ordering.QltOneLtP
        if crit is Criticality.Subcritical:
            return RegimeClassification(order, crit, Verdict.Exists, (-inf, inf), (False, False), "")
        if crit is Criticality.Critical:
            if lam <= thr or _near(lam, thr):
                return RegimeClassification(order, crit, Verdict.NotExists, (thr, inf), (False, False), "")
            if N <= 4:
                return RegimeClassification(order, crit, Verdict.OpenEndpoint, (thr, inf), (False, False),
                                            f"critical case in dimension {N} is unresolved")
            return RegimeClassification(order, crit, Verdict.Exists, (thr, inf), (False, False), "")
        # supercritical
        if lam <= thr or _near(lam, thr):
            return RegimeClassification(order, crit, Verdict.NotExists, (thr, inf), (False, False), "")
        return RegimeClassification(order, crit, Verdict.AssumptionRequired, (thr, inf), (False, False),
                                    "supercritical p above the Pohozaev threshold is not covered")

    # 1 < q < p
    order = Ordering.OneLtQltP
    if lam > l1 and not _near(lam, l1):
        return RegimeClassification(order, crit, Verdict.NotExists,
                                    (-inf if crit is Criticality.Subcritical else thr, l1), (False, False), "")
    if crit is Criticality.Subcritical:
        if _near(lam, l1):
            return RegimeClassification(order, crit, Verdict.OpenEndpoint, (-inf, l1), (False, False),
                                        "lambda = lambda_1 is not covered")
        return RegimeClassification(order, crit, Verdict.Exists, (-inf, l1), (False, False), "")
    if lam <= thr or _near(lam, thr):
        return RegimeClassification(order, crit, Verdict.NotExists, (thr, l1), (False, False), "")
    if crit is Criticality.Critical and N >= 4 and lam < l1 and not _near(lam, l1):
        return RegimeClassification(order, crit, Verdict.Exists, (thr, l1), (False, False), "")
    return RegimeClassification(order, crit, Verdict.AssumptionRequired if crit is Criticality.Supercritical
                                else Verdict.OpenEndpoint, (thr, l1), (False, False), "not covered")


def necessary_lower_bound(N: int, p: float, q: float) -> float:
    """lambda_1 - lambda_pq: for p < q any positive H^1 solution needs lambda above this.

    Follows from s^{p-1} - s^{q-1} <= lambda_pq and the Poincare inequality.
    """
    lpq, _ = lambda_pq(p, q)
    return lambda1(N) - lpq
