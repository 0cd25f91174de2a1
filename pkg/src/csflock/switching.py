"""Random switching process: switching times, topology labels and time blocks.

Logarithms are natural throughout; ``floor(c * ln(l + 1))`` is base-sensitive,
so every block computation goes through :func:`block_gap` to stay consistent.
Graph labels are 0-based in memory and 1-based in CSV exports.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .graph import Digraph, GraphLibrary, has_spanning_tree, union_graphs

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15
# exact integer block boundaries need e^(m/c) representable; beyond this the tail bound stands in
_EXACT_BOUNDARY_LIMIT = 2.0**52


class SwitchingError(ValueError):
    pass


class UnboundedSupportWarning(UserWarning):
    pass


def splitmix64(x: int) -> int:
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, index: int) -> int:
    """Seed for run ``index``: output ``index + 1`` of a SplitMix64 stream started at ``base``."""
    return splitmix64((base + (index + 1) * _GOLDEN_GAMMA) & _MASK64)


@dataclass(frozen=True)
class IncrementDistribution:
    """Law of the i.i.d. gaps between switching instants.

    ``kind`` is one of ``uniform(a, b)``, ``deterministic(delta)``,
    ``truncated_exponential(rate, a, b)`` or ``exponential(rate)``. Only the
    last has unbounded support; it is accepted for simulation but rejected by
    anything that needs the ``[a, b]`` bounds.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    delta: float = 0.0
    rate: float = 0.0

    def __post_init__(self):
        if self.kind == "uniform":
            if not (0 < self.a <= self.b < math.inf):
                raise SwitchingError(f"uniform increments need 0 < a <= b, got a={self.a}, b={self.b}")
        elif self.kind == "deterministic":
            if not (0 < self.delta < math.inf):
                raise SwitchingError(f"deterministic increment must be positive, got {self.delta}")
        elif self.kind == "truncated_exponential":
            if not (0 < self.a <= self.b < math.inf) or not self.rate > 0:
                raise SwitchingError("truncated exponential needs rate > 0 and 0 < a <= b")
        elif self.kind == "exponential":
            if not self.rate > 0:
                raise SwitchingError("exponential increments need rate > 0")
        else:
            raise SwitchingError(f"unknown increment distribution {self.kind!r}")

    @classmethod
    def uniform(cls, a, b):
        return cls("uniform", a=float(a), b=float(b))

    @classmethod
    def deterministic(cls, delta):
        return cls("deterministic", delta=float(delta))

    @classmethod
    def truncated_exponential(cls, rate, a, b):
        return cls("truncated_exponential", a=float(a), b=float(b), rate=float(rate))

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", rate=float(rate))

    @property
    def bounded(self) -> bool:
        return self.kind != "exponential"

    @property
    def lower(self) -> float:
        if self.kind == "deterministic":
            return self.delta
        return 0.0 if self.kind == "exponential" else self.a

    @property
    def upper(self) -> float:
        if self.kind == "deterministic":
            return self.delta
        return math.inf if self.kind == "exponential" else self.b

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(size, self.delta)
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size)
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.rate, size)
        # inverse CDF of the exponential law restricted to [a, b]
        u = rng.random(size)
        mass = -math.expm1(-self.rate * (self.b - self.a))
        return np.minimum(self.a - np.log1p(-u * mass) / self.rate, self.b)

    def to_dict(self) -> dict:
        if self.kind == "deterministic":
            return {"kind": self.kind, "delta": self.delta}
        if self.kind == "uniform":
            return {"kind": self.kind, "a": self.a, "b": self.b}
        if self.kind == "exponential":
            return {"kind": self.kind, "rate": self.rate}
        return {"kind": self.kind, "rate": self.rate, "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, doc: dict) -> "IncrementDistribution":
        kind = doc.get("kind")
        try:
            if kind == "uniform":
                return cls.uniform(doc["a"], doc["b"])
            if kind == "deterministic":
                return cls.deterministic(doc["delta"])
            if kind == "truncated_exponential":
                return cls.truncated_exponential(doc["rate"], doc["a"], doc["b"])
            if kind == "exponential":
                return cls.exponential(doc["rate"])
        except KeyError as exc:
            raise SwitchingError(f"increment distribution {kind!r} missing field {exc}") from exc
        raise SwitchingError(f"unknown increment distribution {kind!r}")


@dataclass(frozen=True)
class SwitchingSchedule:
    """Switching instants ``times[0] = 0 < ... < times[L]`` and the label active on each gap."""

    times: np.ndarray
    labels: np.ndarray
    unbounded_support: bool = False

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        labels = np.array(self.labels, dtype=np.int64)
        if times.ndim != 1 or labels.ndim != 1 or len(labels) != len(times) - 1:
            raise SwitchingError("a schedule needs len(labels) == len(times) - 1")
        if len(labels) == 0:
            raise SwitchingError("a schedule needs at least one switching interval")
        if np.any(np.diff(times) <= 0):
            raise SwitchingError("switching times must be strictly increasing")
        times.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "labels", labels)

    @property
    def switch_count(self) -> int:
        return len(self.labels)

    @property
    def end(self) -> float:
        return float(self.times[-1])


def sample_schedule(lib: GraphLibrary, dist: IncrementDistribution, switch_count: int, seed: int) -> SwitchingSchedule:
    """Draw ``switch_count`` i.i.d. gaps, then ``switch_count`` i.i.d. labels, from one seeded stream."""
    if switch_count < 1:
        raise SwitchingError("switch_count must be at least 1")
    probs = np.asarray(lib.probabilities, dtype=float)
    if np.any(probs <= 0):
        raise SwitchingError("selection probabilities must be positive")
    if not dist.bounded:
        warnings.warn(
            "increment distribution has unbounded support; flocking guarantees do not apply",
            UnboundedSupportWarning,
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    gaps = dist.sample(rng, switch_count)
    times = np.concatenate([[0.0], np.cumsum(gaps)])
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    labels = np.searchsorted(cdf, rng.random(switch_count), side="right")
    labels = np.minimum(labels, len(probs) - 1)
    return SwitchingSchedule(times, labels, unbounded_support=not dist.bounded)


def sigma_at(s: SwitchingSchedule, t: float) -> int:
    """Active (0-based) label at time ``t``; right-continuous at switching instants."""
    if not (s.times[0] <= t < s.times[-1]):
        raise SwitchingError(f"t={t} outside schedule range [{s.times[0]}, {s.times[-1]})")
    return int(s.labels[np.searchsorted(s.times, t, side="right") - 1])


def block_gap(ell: int, n: int, c: float) -> int:
    return n + math.floor(c * math.log(ell + 1))


@dataclass(frozen=True)
class BlockSequence:
    n: int
    c: float
    indices: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, ell):
        return int(self.indices[ell])


def block_indices(n: int, c: float, count: int) -> BlockSequence:
    """First ``count + 1`` terms of ``a_0 = 0``, ``a_{l+1} = a_l + n + floor(c ln(l + 1))``."""
    if n < 1:
        raise SwitchingError("block base length n must be at least 1")
    if not c > 0:
        raise SwitchingError("block log-coefficient c must be positive")
    if count < 1:
        raise SwitchingError("count must be at least 1")
    gaps = [block_gap(ell, n, c) for ell in range(count)]
    indices = np.concatenate([[0], np.cumsum(gaps)]).astype(np.int64)
    indices.flags.writeable = False
    return BlockSequence(int(n), float(c), indices)


def block_times(s: SwitchingSchedule, blocks: BlockSequence) -> np.ndarray:
    """Block instants ``t*_l = t_{a_l}`` for every block index the schedule reaches."""
    idx = blocks.indices[blocks.indices <= s.switch_count]
    return s.times[idx]


@lru_cache(maxsize=4096)
def _labels_span(lib: GraphLibrary, labels: frozenset) -> bool:
    return has_spanning_tree(union_graphs([lib.graphs[k] for k in sorted(labels)]))


def _check_covered(s: SwitchingSchedule, blocks: BlockSequence, last_block: int) -> None:
    if last_block + 1 >= len(blocks.indices):
        raise SwitchingError(f"block sequence has no term a_{last_block + 1}")
    if blocks.indices[last_block + 1] > s.switch_count:
        raise SwitchingError(
            f"schedule too short: block {last_block} needs {blocks.indices[last_block + 1]} "
            f"labels, schedule has {s.switch_count}"
        )


def block_union_graph(s: SwitchingSchedule, lib: GraphLibrary, blocks: BlockSequence, ell: int) -> Digraph:
    """Union of the graphs active on ``[t*_l, t*_{l+1})``."""
    _check_covered(s, blocks, ell)
    used = sorted(set(s.labels[blocks.indices[ell]:blocks.indices[ell + 1]].tolist()))
    return union_graphs([lib.graphs[k] for k in used])


def block_spanning_flags(s: SwitchingSchedule, lib: GraphLibrary, blocks: BlockSequence, block_count: int) -> list[bool]:
    if block_count < 1:
        return []
    _check_covered(s, blocks, block_count - 1)
    flags = []
    for ell in range(block_count):
        used = frozenset(s.labels[blocks.indices[ell]:blocks.indices[ell + 1]].tolist())
        flags.append(_labels_span(lib, used))
    return flags


def blocks_all_spanning(s: SwitchingSchedule, lib: GraphLibrary, blocks: BlockSequence, block_count: int) -> bool:
    """Finite check of the spanning-block condition over blocks ``0 .. block_count - 1``."""
    return all(block_spanning_flags(s, lib, blocks, block_count))


def _complement_rates(probabilities) -> tuple[np.ndarray, float]:
    probs = np.asarray(probabilities, dtype=float)
    q = 1.0 - probs
    with np.errstate(divide="ignore"):
        min_log = float(np.min(-np.log1p(-probs)))
    return q, min_log


def spanning_threshold(probabilities) -> float:
    """``1 / min_k ln(1 / (1 - p_k))``; 0 when some ``p_k = 1``."""
    _, min_log = _complement_rates(probabilities)
    return 0.0 if math.isinf(min_log) else 1.0 / min_log


def floor_log_series(q: float, c: float, tail_tol: float = 1e-12) -> tuple[float, float]:
    """Partial sum of ``sum_{l>=0} q**floor(c ln(l + 1))`` and a rigorous bound on the rest.

    Terms are grouped by the exponent ``m``: exactly the integers ``j = l + 1`` in
    ``[e^(m/c), e^((m+1)/c))`` share it. Since that range holds at most
    ``e^((m+1)/c) - e^(m/c) + 1`` integers, the tail past ``M`` is dominated by
    two geometric series with ratios ``rho = q e^(1/c)`` and ``q``; ``rho < 1``
    is exactly the convergence condition ``c > 1 / ln(1/q)``.
    """
    if not (0.0 <= q < 1.0):
        raise SwitchingError(f"complement probability must lie in [0, 1), got {q}")
    growth = math.exp(1.0 / c)
    rho = q * growth
    if rho >= 1.0:
        raise SwitchingError(f"series diverges: c={c} is not above 1/ln(1/q)={1.0 / -math.log(q):.17g}")

    def first_index(m: int) -> int:
        # smallest j >= 1 with floor(c ln j) >= m, in the same float arithmetic as block_gap
        if m == 0:
            return 1
        j = max(1, math.ceil(math.exp(m / c)))
        while j > 1 and math.floor(c * math.log(j - 1)) >= m:
            j -= 1
        while math.floor(c * math.log(j)) < m:
            j += 1
        return j

    def tail(m_last: int) -> float:
        k = m_last + 1
        geo = (growth - 1.0) * rho**k / (1.0 - rho) if rho > 0 else 0.0
        flat = q**k / (1.0 - q)
        return geo + flat

    total = 0.0
    lo = first_index(0)
    m = 0
    while True:
        if math.exp((m + 1) / c) > _EXACT_BOUNDARY_LIMIT:
            return total, tail(m - 1)
        hi = first_index(m + 1)
        total += q**m * (hi - lo)
        bound = tail(m)
        if bound < tail_tol:
            return total, bound
        lo = hi
        m += 1


@dataclass(frozen=True)
class SpanningProbability:
    value: float
    series: tuple
    tails: tuple


def spanning_probability_details(probabilities, n: int, c: float, tail_tol: float = 1e-12) -> SpanningProbability:
    q, _ = _complement_rates(probabilities)
    load = float(np.sum(q**n))
    if load > 0.5 + 1e-15:
        raise SwitchingError(f"sum_k (1 - p_k)^n = {load:.17g} exceeds 1/2")
    threshold = spanning_threshold(probabilities)
    if not c > threshold:
        raise SwitchingError(f"c={c} must exceed 1/min_k ln(1/(1-p_k)) = {threshold:.17g}")
    series, tails = [], []
    exponent = 0.0
    for qk in q:
        if qk == 0.0:
            series.append(0.0)
            tails.append(0.0)
            continue
        s, t = floor_log_series(float(qk), c, tail_tol)
        series.append(s)
        tails.append(t)
        # partial sum plus tail over-estimates the series, so the bound stays a lower bound
        exponent += qk**n * (s + t)
    return SpanningProbability(math.exp(-2.0 * math.log(2.0) * exponent), tuple(series), tuple(tails))


def spanning_probability_lower_bound(probabilities, n: int, c: float, tail_tol: float = 1e-12) -> float:
    """Lower bound on P(every block union has a spanning tree).

    ``probabilities`` may be a :class:`GraphLibrary` or a plain sequence.
    """
    if isinstance(probabilities, GraphLibrary):
        probabilities = probabilities.probabilities
    return spanning_probability_details(probabilities, n, c, tail_tol).value


def choose_block_parameters(kappa: float, b: float, N: int, probabilities: Sequence[float], eps: float) -> tuple[int, float]:
    """Block base length ``n`` and log-coefficient ``c`` for the flocking certificate.

    ``c`` is the midpoint between the spanning-probability threshold and
    ``(1 - eps (N - 1)) / (kappa b (N - 1))``; ``n`` is the smallest positive
    integer with ``sum_k (1 - p_k)^n <= 1/2``.
    """
    threshold = spanning_threshold(probabilities)
    ceiling = (1.0 - eps * (N - 1)) / (kappa * b * (N - 1))
    if not kappa * b * (N - 1) * threshold < 1.0:
        raise SwitchingError("main condition fails: kappa b (N-1) / min_k ln(1/(1-p_k)) >= 1")
    if not (0.0 <= eps and threshold < ceiling):
        raise SwitchingError("main condition fails: eps outside [0, 1/(N-1) - kappa b / min_k ln(1/(1-p_k)))")
    c = 0.5 * (threshold + ceiling)
    q = 1.0 - np.asarray(probabilities, dtype=float)
    n = 1
    while float(np.sum(q**n)) > 0.5:
        n += 1
    if not (kappa * b * (N - 1) * c < 1.0 and c > threshold):
        raise SwitchingError(f"chosen c={c!r} violates its defining inequalities")
    return n, c


def write_schedule_csv(s: SwitchingSchedule, path) -> None:
    """Columns ``index, time, label``; labels 1-based, blank on the final instant."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "time", "label"])
        for ell, t in enumerate(s.times):
            label = str(int(s.labels[ell]) + 1) if ell < s.switch_count else ""
            writer.writerow([ell, format(float(t), ".17g"), label])


def read_schedule_csv(path) -> SwitchingSchedule:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    times = [float(r["time"]) for r in rows]
    labels = [int(r["label"]) - 1 for r in rows if r["label"] != ""]
    return SwitchingSchedule(np.array(times), np.array(labels, dtype=np.int64))
