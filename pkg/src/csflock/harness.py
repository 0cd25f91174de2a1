"""Experiment orchestration: configs, single runs, seeded Monte Carlo, reports.

Flocking at a finite horizon ``T`` is declared when ``D(V)(T) <= tol_v``; the
limit statement itself cannot be checked numerically, and every report says so.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .certify import CertifyError, FlockingCertificate, TheoremParameters, certify
from .dynamics import (
    CommunicationWeight,
    DynamicsError,
    EnsembleState,
    NonFiniteStateError,
    diameter,
    integrate,
    sample_initial_state,
)
from .graph import GraphError, GraphLibrary, library_from_dict, load_library, validate_library
from .switching import (
    BlockSequence,
    IncrementDistribution,
    SwitchingError,
    SwitchingSchedule,
    block_indices,
    blocks_all_spanning,
    choose_block_parameters,
    derive_seed,
    sample_schedule,
    spanning_probability_lower_bound,
)

FLOCKING_PROXY_NOTE = "flocked means D(V)(T) <= tol_v at the finite horizon T (proxy for D(V) -> 0)"
SELF_REFERENCE_NOTE = "reference values are self-generated regressions; there is no external table"
ENVELOPE_RTOL = 1e-6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    library: GraphLibrary
    increments: IncrementDistribution
    weight: CommunicationWeight
    d: int
    initial: dict = field(default_factory=dict, compare=False)
    dt: float = 1e-3
    horizon_blocks: int | None = 30
    t_end: float | None = None
    tol_v: float = 1e-4
    seed: int = 0
    sample_stride: int = 100

    def __post_init__(self):
        problems = validate_library(self.library)
        if problems:
            raise ConfigError("invalid library: " + "; ".join(problems))
        if self.d < 1:
            raise ConfigError("dimension d must be at least 1")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if (self.horizon_blocks is None) == (self.t_end is None):
            raise ConfigError("horizon needs exactly one of 'blocks' or 't_end'")
        if self.horizon_blocks is not None and self.horizon_blocks < 1:
            raise ConfigError("horizon blocks must be at least 1")
        if self.t_end is not None and not self.t_end > 0:
            raise ConfigError("horizon t_end must be positive")
        if not self.tol_v > 0:
            raise ConfigError("tol_v must be positive")
        if self.sample_stride < 0:
            raise ConfigError("sample_stride must be nonnegative")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if "X" in self.initial or "V" in self.initial:
            self.initial_state(0)  # shape check

    @property
    def N(self) -> int:
        return self.library.n

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        try:
            if "library_file" in doc:
                path = Path(doc["library_file"])
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
                lib = load_library(path)
            else:
                lib = library_from_dict(doc["library"])
            if "N" in doc and int(doc["N"]) != lib.n:
                raise ConfigError(f"N={doc['N']} does not match the library vertex count {lib.n}")
            horizon = doc.get("horizon", {"blocks": 30})
            blocks = horizon.get("blocks")
            t_end = horizon.get("t_end")
            return cls(
                library=lib,
                increments=IncrementDistribution.from_dict(doc["increments"]),
                weight=CommunicationWeight.from_dict(doc["weight"]),
                d=int(doc.get("d", 2)),
                initial=dict(doc.get("initial", {})),
                dt=float(doc.get("dt", 1e-3)),
                horizon_blocks=None if blocks is None else int(blocks),
                t_end=None if t_end is None else float(t_end),
                tol_v=float(doc.get("tol_v", 1e-4)),
                seed=int(doc.get("seed", 0)),
                sample_stride=int(doc.get("sample_stride", 100)),
            )
        except KeyError as exc:
            raise ConfigError(f"config is missing field {exc}") from exc
        except (TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        except (GraphError, SwitchingError, DynamicsError, OSError, json.JSONDecodeError) as exc:
            raise ConfigError(str(exc)) from exc

    def initial_state(self, run_seed: int) -> EnsembleState:
        """Explicit ``X``/``V``, or a uniform draw (seeded by the config, else by the run)."""
        init = self.initial
        try:
            if "X" in init or "V" in init:
                state = EnsembleState(0.0, init["X"], init["V"])
                if state.X.shape != (self.N, self.d):
                    raise ConfigError(f"initial state has shape {state.X.shape}, expected ({self.N}, {self.d})")
                return state
            seed = int(init["seed"]) if "seed" in init else derive_seed(run_seed, 0)
            return sample_initial_state(
                self.N, self.d, seed,
                tuple(init.get("position_box", (-1.0, 1.0))),
                tuple(init.get("velocity_box", (-1.0, 1.0))),
            )
        except KeyError as exc:
            raise ConfigError(f"initial condition is missing {exc}") from exc
        except (DynamicsError, ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad initial condition: {exc}") from exc

    def theorem_parameters(self) -> TheoremParameters | None:
        """Theorem inputs, or ``None`` when the increments have unbounded support."""
        dist = self.increments
        if not dist.bounded or not dist.lower > 0:
            return None
        try:
            return TheoremParameters(
                kappa=self.weight.kappa,
                a=dist.lower,
                b=dist.upper,
                N=self.N,
                probabilities=tuple(self.library.probabilities),
                epsilon=self.weight.tail_exponent,
                beta=self.weight.beta,
            )
        except CertifyError:
            return None

    def block_parameters(self) -> tuple[int, float] | None:
        p = self.theorem_parameters()
        if p is None:
            return None
        try:
            return choose_block_parameters(p.kappa, p.b, p.N, p.probabilities, p.epsilon)
        except SwitchingError:
            return None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(doc, base_dir=path.parent)


@dataclass(frozen=True)
class RunSummary:
    seed: int
    flocked: bool
    sup_dx: float | None
    final_dv: float | None
    spanning: bool | None
    violations: int
    bounded: bool | None = None
    x_inf: float | None = None
    t_end: float | None = None
    status: str = "ok"


@dataclass
class RunArtifacts:
    """Everything one run produced, for callers that need more than the summary."""

    summary: RunSummary
    state0: EnsembleState
    schedule: SwitchingSchedule
    blocks: BlockSequence | None
    certificate: FlockingCertificate | None
    record: object | None


def _horizon_schedule(cfg: ExperimentConfig, seed: int, blocks_nc):
    dist = cfg.increments
    if cfg.horizon_blocks is not None:
        if blocks_nc is None:
            raise ConfigError("a block horizon needs bounded increments satisfying the block conditions")
        blocks = block_indices(blocks_nc[0], blocks_nc[1], cfg.horizon_blocks)
        sched = sample_schedule(cfg.library, dist, blocks[cfg.horizon_blocks], seed)
        return sched, blocks, cfg.horizon_blocks, sched.end
    count = 16
    while True:
        sched = sample_schedule(cfg.library, dist, count, seed)
        if sched.end >= cfg.t_end:
            break
        count *= 2
    if blocks_nc is None:
        return sched, None, 0, cfg.t_end
    covered = int(np.searchsorted(sched.times, cfg.t_end, side="right")) - 1
    full = 1
    while True:
        blocks = block_indices(blocks_nc[0], blocks_nc[1], full)
        if blocks[full] > covered:
            break
        full += 1
    nb = full - 1
    return sched, (block_indices(blocks_nc[0], blocks_nc[1], nb) if nb else None), nb, cfg.t_end


def run_detailed(cfg: ExperimentConfig, seed: int) -> RunArtifacts:
    state0 = cfg.initial_state(seed)
    dx0, dv0 = diameter(state0.X), diameter(state0.V)
    params = cfg.theorem_parameters()
    cert = certify(params, dx0, dv0) if params is not None else None
    blocks_nc = (cert.n, cert.c) if cert is not None and cert.n is not None else cfg.block_parameters()
    sched, blocks, nb, t_end = _horizon_schedule(cfg, seed, blocks_nc)
    spanning = blocks_all_spanning(sched, cfg.library, blocks, nb) if blocks is not None else None
    x_inf = cert.x_infinity if cert is not None and cert.valid else None

    try:
        record = integrate(state0, sched, cfg.library, cfg.weight, cfg.dt, t_end, cfg.sample_stride)
    except NonFiniteStateError as exc:
        summary = RunSummary(seed, False, None, None, spanning, 0, None, x_inf, t_end, f"nonfinite: {exc}")
        return RunArtifacts(summary, state0, sched, blocks, cert, None)

    final_dv = float(record.dv[-1])
    sup_dx = float(record.sup_dx)
    bounded = None if x_inf is None else bool(sup_dx <= x_inf)
    violations = 0
    if spanning and bounded and dv0 > 0:
        for r in range(1, nb // (cfg.N - 1) + 1):
            t_r = float(sched.times[blocks[r * (cfg.N - 1)]])
            if t_r > t_end:
                break
            if record.dv_at(t_r) > cert.envelope_at(r) * dv0 * (1.0 + ENVELOPE_RTOL):
                violations += 1
    summary = RunSummary(
        seed=int(seed),
        flocked=bool(final_dv <= cfg.tol_v),
        sup_dx=sup_dx,
        final_dv=final_dv,
        spanning=spanning,
        violations=violations,
        bounded=bounded,
        x_inf=x_inf,
        t_end=float(t_end),
    )
    return RunArtifacts(summary, state0, sched, blocks, cert, record)


def run_once(cfg: ExperimentConfig, seed: int) -> RunSummary:
    """One seeded run; deterministic in ``(cfg, seed)``. Blow-ups are flagged, not raised."""
    return run_detailed(cfg, seed).summary


@dataclass
class MonteCarloReport:
    runs: int
    base_seed: int
    tol_v: float
    flocking_fraction: float
    bounded_flocking_fraction: float | None
    spanning_fraction: float | None
    p_n: float | None
    n: int | None
    c: float | None
    envelope_violations: int
    failures: int
    summaries: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    timing: dict = field(default_factory=dict, compare=False)


def _fraction(flags) -> float | None:
    flags = [f for f in flags if f is not None]
    return sum(bool(f) for f in flags) / len(flags) if flags else None


def reference_spanning_probability(cfg: ExperimentConfig) -> tuple[float | None, int | None, float | None]:
    nc = cfg.block_parameters()
    if nc is None:
        return None, None, None
    return spanning_probability_lower_bound(cfg.library.probabilities, nc[0], nc[1]), nc[0], nc[1]


def summarize(cfg: ExperimentConfig, summaries: list[RunSummary], base_seed: int) -> MonteCarloReport:
    M = len(summaries)
    p_n, n, c = reference_spanning_probability(cfg)
    certified = any(s.x_inf is not None for s in summaries)
    return MonteCarloReport(
        runs=M,
        base_seed=int(base_seed),
        tol_v=cfg.tol_v,
        flocking_fraction=sum(s.flocked for s in summaries) / M,
        bounded_flocking_fraction=sum(s.flocked and bool(s.bounded) for s in summaries) / M if certified else None,
        spanning_fraction=_fraction([s.spanning for s in summaries]),
        p_n=p_n,
        n=n,
        c=c,
        envelope_violations=sum(s.violations for s in summaries),
        failures=sum(s.status != "ok" for s in summaries),
        summaries=list(summaries),
        notes=[FLOCKING_PROXY_NOTE, SELF_REFERENCE_NOTE],
    )


def monte_carlo(cfg: ExperimentConfig, M: int, workers: int = 1, seed: int | None = None) -> MonteCarloReport:
    """``M`` independent runs with seeds ``derive_seed(base, i)``, reduced in index order.

    Threads share nothing mutable and the numba kernel releases the GIL, so the
    report is the same for any worker count.
    """
    if M < 1:
        raise ConfigError("run count M must be at least 1")
    if workers < 1:
        raise ConfigError("workers must be at least 1")
    base = cfg.seed if seed is None else int(seed)
    seeds = [derive_seed(base, i) for i in range(M)]
    start = time.perf_counter()
    summaries = [run_once(cfg, seeds[0])]  # also warms up the kernel before threads start
    if workers == 1 or M == 1:
        summaries += [run_once(cfg, s) for s in seeds[1:]]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            summaries += list(pool.map(lambda s: run_once(cfg, s), seeds[1:]))
    wall = time.perf_counter() - start
    report = summarize(cfg, summaries, base)
    report.timing = {"wall_seconds": wall, "seconds_per_run": wall / M, "workers": workers}
    return report


# ---- report I/O ----

CSV_COLUMNS = ("seed", "flocked", "sup_dx", "final_dv", "spanning", "violations", "bounded", "x_inf", "t_end", "status")
_SCALARS = ("runs", "base_seed", "tol_v", "flocking_fraction", "bounded_flocking_fraction", "spanning_fraction",
            "p_n", "n", "c", "envelope_violations", "failures")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def canonical_json(v, indent=0) -> str:
    """Canonical JSON: sorted keys, floats at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {canonical_json(v[k], indent + 1)}" for k in sorted(v)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        return "[\n" + ",\n".join(pad + canonical_json(x, indent + 1) for x in v) + "\n" + end + "]"
    if isinstance(v, float):
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    if v is None or isinstance(v, (bool, int, str)):
        return json.dumps(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def report_to_dict(report: MonteCarloReport) -> dict:
    doc = {k: getattr(report, k) for k in _SCALARS}
    doc["notes"] = list(report.notes)
    doc["summaries"] = [{f.name: getattr(s, f.name) for f in fields(RunSummary)} for s in report.summaries]
    return doc


def report_to_csv(report: MonteCarloReport) -> str:
    buf = io.StringIO()
    for k in _SCALARS:
        buf.write(f"# {k}={_fmt(getattr(report, k))}\n")
    for note in report.notes:
        buf.write(f"# note={note}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for s in report.summaries:
        writer.writerow([_fmt(getattr(s, k)) for k in CSV_COLUMNS])
    return buf.getvalue()


def export_report(report: MonteCarloReport, path, fmt: str = "json") -> None:
    """Bit-stable export; wall-clock timing is deliberately left out."""
    if fmt == "json":
        text = canonical_json(report_to_dict(report)) + "\n"
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ConfigError(f"unknown report format {fmt!r}; use 'json' or 'csv'")
    Path(path).write_text(text)


_INT_FIELDS = {"runs", "base_seed", "n", "envelope_violations", "failures", "seed", "violations"}
_BOOL_FIELDS = {"flocked", "spanning", "bounded"}
_STR_FIELDS = {"status"}


def _parse(key: str, text: str):
    if text == "":
        return None
    if key in _INT_FIELDS:
        return int(text)
    if key in _BOOL_FIELDS:
        return text == "true"
    if key in _STR_FIELDS:
        return text
    return float(text)


def report_from_dict(doc: dict) -> MonteCarloReport:
    summaries = [RunSummary(**s) for s in doc.get("summaries", [])]
    kwargs = {k: doc.get(k) for k in _SCALARS}
    return MonteCarloReport(**kwargs, summaries=summaries, notes=list(doc.get("notes", [])))


def read_report(path) -> MonteCarloReport:
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        return report_from_dict(json.loads(text))
    scalars, notes, rows = {}, [], []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            if key == "note":
                notes.append(value)
            else:
                scalars[key] = _parse(key, value)
        elif line:
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    summaries = [RunSummary(**{k: _parse(k, v) for k, v in zip(header, row)}) for row in reader]
    return MonteCarloReport(**{k: scalars.get(k) for k in _SCALARS}, summaries=summaries, notes=notes)
