"""Analytic flocking conditions and the bounds that certify them.

Everything here is a closed-form evaluation. The only truncated object is the
series in the position-diameter fixed-point inequality, which is always used
together with a rigorous upper bound on its tail, so every reported
``x_infinity`` satisfies the inequality with the full (untruncated) series.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dynamics import CommunicationWeight
from .switching import (
    SwitchingError,
    choose_block_parameters,
    spanning_probability_details,
    spanning_threshold,
)

XINF_CAP = 2.0**60
SERIES_CHUNK = 1 << 16
SERIES_MAX_TERMS = 1 << 22


class CertifyError(ValueError):
    pass


@dataclass(frozen=True)
class TheoremParameters:
    """Inputs of the flocking theorem.

    ``epsilon`` is the tail exponent of ``1/phi``; for the algebraic weight it
    must equal ``beta`` (constant weight: both zero).
    """

    kappa: float
    a: float
    b: float
    N: int
    probabilities: tuple
    epsilon: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        if not (0 < self.a <= self.b < math.inf):
            raise CertifyError(f"need 0 < a <= b < inf, got a={self.a}, b={self.b}")
        if self.N < 2:
            raise CertifyError("need at least two particles")
        if not self.kappa > 0:
            raise CertifyError("kappa must be positive")
        if self.epsilon < 0 or self.beta < 0:
            raise CertifyError("epsilon and beta must be nonnegative")
        if abs(self.epsilon - self.beta) > 1e-15:
            raise CertifyError(f"epsilon={self.epsilon} must equal beta={self.beta} for the algebraic weight")
        if not self.probabilities or any(not (0 < p <= 1) for p in self.probabilities):
            raise CertifyError("selection probabilities must lie in (0, 1]")

    @property
    def weight(self) -> CommunicationWeight:
        if self.beta == 0:
            return CommunicationWeight("constant", self.kappa)
        return CommunicationWeight("algebraic", self.kappa, self.beta)

    def phi(self, r: float) -> float:
        return self.kappa * (1.0 + r * r) ** (-0.5 * self.beta)

    def log_phi(self, r: float) -> float:
        return math.log(self.kappa) - 0.5 * self.beta * math.log1p(r * r)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["probabilities"] = list(self.probabilities)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "TheoremParameters":
        beta = float(doc.get("beta", doc.get("epsilon", 0.0)))
        return cls(
            kappa=float(doc["kappa"]),
            a=float(doc["a"]),
            b=float(doc["b"]),
            N=int(doc["N"]),
            probabilities=tuple(doc["probabilities"]),
            epsilon=float(doc.get("epsilon", beta)),
            beta=beta,
        )


def _min_log(probabilities) -> float:
    t = spanning_threshold(probabilities)
    return math.inf if t == 0 else 1.0 / t


@dataclass(frozen=True)
class ConditionCheck:
    holds: bool
    ratio: float
    ratio_margin: float
    epsilon_ceiling: float
    epsilon_margin: float
    violations: tuple = ()

    def __bool__(self) -> bool:
        return self.holds


def check_conditions(p: TheoremParameters) -> ConditionCheck:
    """Main theorem hypotheses with their margins (positive margin = satisfied)."""
    min_log = _min_log(p.probabilities)
    ratio = p.kappa * p.b * (p.N - 1) / min_log
    ceiling = 1.0 / (p.N - 1) - p.kappa * p.b / min_log
    violations = []
    if not ratio < 1.0:
        violations.append("kappa b (N-1) / min_k ln(1/(1-p_k)) >= 1")
    if not (0.0 <= p.epsilon < ceiling):
        violations.append("epsilon >= 1/(N-1) - kappa b / min_k ln(1/(1-p_k))")
    return ConditionCheck(
        holds=not violations,
        ratio=ratio,
        ratio_margin=1.0 - ratio,
        epsilon_ceiling=ceiling,
        epsilon_margin=ceiling - p.epsilon,
        violations=tuple(violations),
    )


def _block_exponent(p: TheoremParameters, c: float) -> float:
    s = p.kappa * p.b * (p.N - 1) * c
    if not s < 1.0:
        raise CertifyError(f"kappa b (N-1) c = {s} must be < 1")
    return s


def _log_rate_base(p: TheoremParameters, x_inf: float, n: int, c: float) -> float:
    # ln of a phi(x) e^{-kappa b n} (N-1)^{-kappa b c} / N
    return (math.log(p.a) + p.log_phi(x_inf) - p.kappa * p.b * n
            - p.kappa * p.b * c * math.log(p.N - 1) - math.log(p.N))


def decay_rate(p: TheoremParameters, x_inf: float, n: int, c: float) -> float:
    """``(a phi(x_inf) e^{-kappa b n} (N-1)^{-kappa b c} / N)^(N-1)``."""
    return math.exp((p.N - 1) * _log_rate_base(p, x_inf, n, c))


def decay_envelope(p: TheoremParameters, x_inf: float, n: int, c: float, r) -> float:
    """Factor bounding ``D(V)`` at the ``r``-th group of ``N-1`` blocks relative to ``D(V)(0)``."""
    s = _block_exponent(p, c)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise CertifyError("block group index r must be nonnegative")
    growth = ((r + 1.0) ** (1.0 - s) - 1.0) / (1.0 - s)
    out = np.exp(-decay_rate(p, x_inf, n, c) * growth)
    return float(out) if out.ndim == 0 else out


def lemma42_bound(x: float, delta: float) -> float:
    """``(delta/e)^delta x^(-delta)``, which dominates ``e^(-x)`` for all ``x, delta > 0``."""
    if not (x > 0 and delta > 0):
        raise CertifyError("x and delta must be positive")
    try:
        return math.exp(delta * (math.log(delta) - 1.0 - math.log(x)))
    except OverflowError:
        return math.inf


def choose_delta(p: TheoremParameters, c: float) -> float:
    """Midpoint of ``(1/(1 - kappa b (N-1) c), 1/((N-1) eps))``; lower end + 1 when ``eps = 0``."""
    s = _block_exponent(p, c)
    lower = 1.0 / (1.0 - s)
    if p.epsilon == 0:
        return lower + 1.0
    upper = 1.0 / ((p.N - 1) * p.epsilon)
    if not lower < upper:
        raise CertifyError(f"empty delta interval ({lower}, {upper})")
    return 0.5 * (lower + upper)


@dataclass(frozen=True)
class SeriesSum:
    partial: float
    tail_bound: float
    terms: int

    @property
    def upper(self) -> float:
        return self.partial + self.tail_bound


def _series_tail(p: TheoremParameters, n: int, c: float, delta: float, R: int) -> float:
    """Bound on ``sum_{r > R}`` of the fixed-point series (``inf`` when not yet applicable)."""
    q = 1.0 - _block_exponent(p, c)
    P = q * delta
    A = n + c * math.log(p.N - 1)
    M = R + 1.0
    # the comparison function (A + c ln m) m^-P must be decreasing from M on
    if R < 2 or A + c * math.log(M) <= c / P:
        return math.inf
    theta = 1.0 - (R + 2.0) ** (-q)
    scale = (q / theta) ** delta * M ** (1.0 - P)
    return scale * ((A + c * math.log(M)) / (P - 1.0) + c / (P - 1.0) ** 2)


@lru_cache(maxsize=256)
def c100_series(p: TheoremParameters, n: int, c: float, delta: float, tol: float = 1e-12,
                max_terms: int = SERIES_MAX_TERMS) -> SeriesSum:
    """``sum_{r>=1} (n + c ln((r+1)(N-1))) g(r)^(-delta)`` with ``g(r) = ((r+1)^q - 1)/q``.

    Summation stops once the analytic tail bound drops below ``tol`` or after
    ``max_terms`` terms; the bound is returned either way. Cached, since it
    does not depend on the initial data.
    """
    s = _block_exponent(p, c)
    q = 1.0 - s
    if not delta * q > 1.0:
        raise CertifyError(f"series diverges: delta (1 - kappa b (N-1) c) = {delta * q} <= 1")
    partial = 0.0
    R = 0
    while True:
        r = np.arange(R + 1, R + SERIES_CHUNK + 1, dtype=float)
        g = np.expm1(q * np.log1p(r)) / q
        terms = (n + c * np.log((r + 1.0) * (p.N - 1))) * np.exp(-delta * np.log(g))
        partial += math.fsum(terms)
        R += SERIES_CHUNK
        tail = _series_tail(p, n, c, delta, R)
        if tail < tol or R >= max_terms:
            return SeriesSum(partial, tail, R)


def c100_lhs(p: TheoremParameters, x: float, n: int, c: float, delta: float, dx0: float, dv0: float,
             series: SeriesSum) -> float:
    """Left side of the position-diameter fixed-point inequality, using the series upper bound."""
    head = dx0 + dv0 * p.b * (p.N - 1) * (n + c * math.log(p.N - 1))
    if dv0 == 0:
        return head
    log_tail = (math.log(dv0 * p.b * (p.N - 1)) + delta * (math.log(delta) - 1.0)
                - (p.N - 1) * delta * _log_rate_base(p, x, n, c) + math.log(series.upper))
    try:
        return head + math.exp(log_tail)
    except OverflowError:
        return math.inf


def find_xinfty(p: TheoremParameters, dx0: float, dv0: float, n: int, c: float, delta: float,
                tol: float = 1e-12, series: SeriesSum | None = None) -> float | None:
    """Position-diameter bound ``x`` with ``LHS(x) < x``, or ``None`` below ``XINF_CAP``.

    Doubles from ``dx0 + 1`` until the inequality holds, then bisects the
    bracket to relative width ``1e-10`` and returns the satisfying end.
    """
    s = _block_exponent(p, c)
    if not delta * (1.0 - s) > 1.0:
        raise CertifyError("need delta (1 - kappa b (N-1) c) > 1")
    if not delta * (p.N - 1) * p.epsilon < 1.0:
        raise CertifyError("need delta (N-1) epsilon < 1")
    if series is None:
        series = c100_series(p, n, c, delta, tol)

    def ok(x):
        return c100_lhs(p, x, n, c, delta, dx0, dv0, series) < x

    hi = dx0 + 1.0
    if ok(hi):
        return hi
    lo = hi
    while not ok(hi):
        lo = hi
        hi *= 2.0
        if hi > XINF_CAP:
            return None
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def mu_block_lower_bound(p: TheoremParameters, x_inf: float, elapsed: float) -> float:
    """``e^(-kappa elapsed) (a/N)^(N-1) phi(x_inf)^(N-1)``."""
    if not elapsed > 0:
        raise CertifyError("elapsed time must be positive")
    return math.exp(-p.kappa * elapsed + (p.N - 1) * (math.log(p.a / p.N) + p.log_phi(x_inf)))


@dataclass
class FlockingCertificate:
    params: TheoremParameters
    dx0: float
    dv0: float
    main_condition_holds: bool
    failure: str | None = None
    c: float | None = None
    n: int | None = None
    delta: float | None = None
    x_infinity: float | None = None
    p_n: float | None = None
    envelope: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.main_condition_holds and self.failure is None

    def envelope_at(self, r) -> float:
        return decay_envelope(self.params, self.x_infinity, self.n, self.c, r)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "dx0": self.dx0,
            "dv0": self.dv0,
            "main_condition_holds": self.main_condition_holds,
            "valid": self.valid,
            "failure": self.failure,
            "c": self.c,
            "n": self.n,
            "delta": self.delta,
            "x_infinity": self.x_infinity,
            "p_n": self.p_n,
            "envelope": dict(self.envelope),
            "margins": dict(self.margins),
            "diagnostics": dict(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def certify(p: TheoremParameters, dx0: float, dv0: float, tail_tol: float = 1e-12) -> FlockingCertificate:
    """Run the whole condition chain and assemble a re-audited certificate.

    A failing step never raises: the certificate names the first violated
    condition instead.
    """
    check = check_conditions(p)
    cert = FlockingCertificate(p, float(dx0), float(dv0), main_condition_holds=check.holds)
    cert.margins = {
        "ratio": check.ratio,
        "ratio_margin": check.ratio_margin,
        "epsilon_ceiling": check.epsilon_ceiling,
        "epsilon_margin": check.epsilon_margin,
    }
    if not check.holds:
        cert.failure = check.violations[0]
        return cert
    try:
        cert.n, cert.c = choose_block_parameters(p.kappa, p.b, p.N, p.probabilities, p.epsilon)
        s = _block_exponent(p, cert.c)
        cert.delta = choose_delta(p, cert.c)
        series = c100_series(p, cert.n, cert.c, cert.delta, tail_tol)
        span = spanning_probability_details(p.probabilities, cert.n, cert.c, tail_tol)
    except (CertifyError, SwitchingError) as exc:
        cert.failure = str(exc)
        return cert
    cert.p_n = span.value
    cert.margins.update({
        "block_exponent": s,
        "block_exponent_margin": 1.0 - s,
        "c_over_threshold": cert.c - spanning_threshold(p.probabilities),
        "delta_series_margin": cert.delta * (1.0 - s) - 1.0,
        "delta_growth_margin": 1.0 - cert.delta * (p.N - 1) * p.epsilon,
    })
    cert.diagnostics = {
        "series_partial": series.partial,
        "series_tail_bound": series.tail_bound,
        "series_terms": series.terms,
        "spanning_series": list(span.series),
        "spanning_tail_bounds": list(span.tails),
        "tail_tol": tail_tol,
    }
    x_inf = find_xinfty(p, dx0, dv0, cert.n, cert.c, cert.delta, tail_tol, series=series)
    if x_inf is None:
        cert.failure = f"no x_infinity satisfies the fixed-point inequality below {XINF_CAP:.6g}"
        return cert
    cert.x_infinity = x_inf
    lhs = c100_lhs(p, x_inf, cert.n, cert.c, cert.delta, dx0, dv0, series)
    cert.margins["xinf_margin"] = x_inf - lhs
    cert.envelope = {
        "rate": decay_rate(p, x_inf, cert.n, cert.c),
        "exponent": 1.0 - s,
        "dv0": float(dv0),
    }
    # audit: re-verify every inequality the certificate relies on
    if not (s < 1.0 and lhs < x_inf and cert.delta * (1.0 - s) > 1.0
            and cert.delta * (p.N - 1) * p.epsilon < 1.0 and 0.0 < cert.p_n <= 1.0):
        cert.failure = "certificate audit failed"
    return cert


def save_certificate(cert: FlockingCertificate, path) -> None:
    Path(path).write_text(cert.to_json() + "\n")
