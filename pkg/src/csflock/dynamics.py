"""Cucker-Smale dynamics under a realised switching schedule.

Velocities evolve as ``dV/dt = -(1/N) L_sigma(t) V`` with the graph Laplacian
weighted by the communication kernel at the current positions. Integration is
fixed-step RK4; every step lies inside a single switching interval, because the
right-hand side jumps at switching instants.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .graph import GraphLibrary
from .matrix_analysis import row_diameter
from .switching import SwitchingSchedule


class DynamicsError(ValueError):
    pass


class NonFiniteStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class CommunicationWeight:
    """``phi(r) = kappa`` (constant) or ``kappa / (1 + r^2)^(beta/2)`` (algebraic)."""

    kind: str = "constant"
    kappa: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "algebraic"):
            raise DynamicsError(f"unknown weight kind {self.kind!r}")
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise DynamicsError(f"kappa must be positive, got {self.kappa}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise DynamicsError(f"beta must be nonnegative, got {self.beta}")
        if self.kind == "constant" and self.beta != 0:
            raise DynamicsError("a constant weight has no decay exponent")

    @property
    def tail_exponent(self) -> float:
        """Exponent ``e`` with ``1/phi(r) = O(r^e)``."""
        return self.beta if self.kind == "algebraic" else 0.0

    @property
    def lipschitz_constant(self) -> float:
        if self.kind == "constant" or self.beta == 0:
            return 0.0
        # |phi'| peaks where r^2 = 1 / (beta + 1)
        r = 1.0 / math.sqrt(self.beta + 1.0)
        return self.kappa * self.beta * r * (1.0 + r * r) ** (-0.5 * self.beta - 1.0)

    @property
    def kernel_code(self) -> int:
        return kernels.WEIGHT_CONSTANT if self.kind == "constant" else kernels.WEIGHT_ALGEBRAIC

    def __call__(self, r):
        return phi_eval(self, r)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "kappa": self.kappa, "beta": self.beta}

    @classmethod
    def from_dict(cls, doc: dict) -> "CommunicationWeight":
        kind = doc.get("kind", "constant")
        return cls(kind, float(doc.get("kappa", 1.0)), float(doc.get("beta", 0.0)))


def phi_eval(w: CommunicationWeight, r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise DynamicsError("communication weight is defined for r >= 0 only")
    if w.kind == "constant":
        out = np.full_like(r_arr, w.kappa)
    else:
        out = w.kappa * (1.0 + r_arr * r_arr) ** (-0.5 * w.beta)
    return float(out) if out.ndim == 0 else out


def pairwise_distances(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def assemble_laplacian(lib: GraphLibrary, k: int, X, w: CommunicationWeight) -> np.ndarray:
    """``L_k = D_k - A_k`` with ``a_ij = chi^k_ij phi(|x_i - x_j|)`` and ``d_i = sum_j a_ij``.

    ``k`` is the 0-based graph index.
    """
    if not 0 <= k < len(lib):
        raise DynamicsError(f"graph index {k} out of range for a library of {len(lib)}")
    A = lib.graphs[k].adjacency() * phi_eval(w, pairwise_distances(X))
    return np.diag(A.sum(axis=1)) - A


def diameter(rows) -> float:
    return row_diameter(rows)


@dataclass(frozen=True)
class EnsembleState:
    t: float
    X: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        V = np.array(self.V, dtype=float)
        if X.ndim != 2 or X.shape != V.shape:
            raise DynamicsError(f"positions {X.shape} and velocities {V.shape} must be matching N x d arrays")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(V))):
            raise DynamicsError("state has non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def to_dict(self) -> dict:
        return {"t": self.t, "X": self.X.tolist(), "V": self.V.tolist()}


def sample_initial_state(N: int, d: int, seed: int, position_box=(-1.0, 1.0), velocity_box=(-1.0, 1.0)) -> EnsembleState:
    """Positions and velocities uniform in the given boxes (same bounds on every axis)."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(position_box[0], position_box[1], size=(N, d))
    V = rng.uniform(velocity_box[0], velocity_box[1], size=(N, d))
    return EnsembleState(0.0, X, V)


@dataclass(frozen=True)
class TransitionMatrix:
    t1: float
    t2: float
    phi: np.ndarray


@dataclass
class TrajectoryRecord:
    """Sampled diameters of one integrated trajectory.

    Samples include the initial time, every ``sample_stride``-th step, every
    switching instant and every transition mark, so diameters at block
    instants are always available exactly. ``sigma[k]`` is the label that
    governed the step ending at ``times[k]``.
    """

    times: np.ndarray
    dx: np.ndarray
    dv: np.ndarray
    sigma: np.ndarray
    switch_times: np.ndarray
    switch_labels: np.ndarray
    final: EnsembleState
    sup_dx: float
    mark_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    mark_velocities: np.ndarray = field(default_factory=lambda: np.empty((0, 0, 0)))

    def _index(self, grid: np.ndarray, t: float) -> int:
        i = int(np.searchsorted(grid, t))
        for j in (i - 1, i):
            if 0 <= j < len(grid) and abs(grid[j] - t) <= 1e-12 * max(1.0, abs(t)):
                return j
        raise KeyError(f"time {t} is not a sample time")

    def dv_at(self, t: float) -> float:
        return float(self.dv[self._index(self.times, t)])

    def dx_at(self, t: float) -> float:
        return float(self.dx[self._index(self.times, t)])

    def velocity_at_mark(self, t: float) -> np.ndarray:
        return self.mark_velocities[self._index(self.mark_times, t)]


@dataclass
class _StepGrid:
    h: np.ndarray
    label: np.ndarray
    record: np.ndarray
    mark: np.ndarray
    record_times: np.ndarray
    record_labels: np.ndarray
    mark_times: np.ndarray


def _step_grid(s: SwitchingSchedule, t0: float, t_end: float, dt: float, stride: int, marks) -> _StepGrid:
    times = s.times
    marks = np.asarray(marks, dtype=float).reshape(-1)
    marks = np.unique(marks[(marks > t0) & (marks <= t_end)])
    inner = times[(times > t0) & (times < t_end)]
    bps = np.unique(np.concatenate([[t0], inner, marks, [t_end]]))
    widths = np.diff(bps)
    nsub = np.maximum(np.ceil(widths / dt * (1.0 - 1e-12)).astype(np.int64), 1)
    total = int(nsub.sum())

    h = np.repeat(widths / nsub, nsub)
    interval_label = s.labels[np.searchsorted(times, bps[:-1], side="right") - 1]
    label = np.repeat(interval_label, nsub).astype(np.int64)
    ends = np.cumsum(nsub) - 1

    record = np.zeros(total, dtype=np.bool_)
    if stride > 0:
        record[stride - 1::stride] = True
    record[ends] = True
    mark = np.zeros(total, dtype=np.bool_)
    mark[ends[np.isin(bps[1:], marks)]] = True

    starts = np.repeat(np.cumsum(nsub) - nsub, nsub)
    step_end = np.repeat(bps[:-1], nsub) + (np.arange(total) - starts + 1) * h
    step_end[ends] = bps[1:]
    first_label = s.labels[np.searchsorted(times, t0, side="right") - 1]
    return _StepGrid(
        h=h,
        label=label,
        record=record,
        mark=mark,
        record_times=np.concatenate([[t0], step_end[record]]),
        record_labels=np.concatenate([[first_label], label[record]]).astype(np.int64),
        mark_times=np.concatenate([[t0], marks]),
    )


def _run(state0: EnsembleState, s: SwitchingSchedule, lib: GraphLibrary, w: CommunicationWeight,
         dt: float, t_end: float, sample_stride: int, marks, track_phi: bool):
    if not dt > 0:
        raise DynamicsError("dt must be positive")
    if state0.n != lib.n:
        raise DynamicsError(f"state has {state0.n} particles, library has {lib.n} vertices")
    t0 = state0.t
    if t0 < s.times[0]:
        raise DynamicsError("initial time precedes the schedule")
    if t_end > s.times[-1]:
        raise DynamicsError(f"schedule ends at {s.times[-1]}, shorter than t_end={t_end}")
    if t_end < t0:
        raise DynamicsError("t_end precedes the initial time")

    grid = _step_grid(s, t0, t_end, dt, int(sample_stride), marks)
    adj = lib.adjacency_stack()
    X, V, rec_dx, rec_dv, sup_dx, phis, v_marks, status, fail = kernels.run_rk4(
        state0.X, state0.V, adj, grid.label, grid.h, grid.record, grid.mark,
        w.kernel_code, float(w.kappa), float(w.beta), bool(track_phi),
    )
    if status != 0:
        t_fail = float(np.cumsum(grid.h)[fail]) + t0
        raise NonFiniteStateError(f"non-finite state after step {fail} (t ~ {t_fail:.6g})")
    in_range = (s.times >= t0) & (s.times <= t_end)
    switch_labels = np.append(s.labels, -1)[in_range]
    record = TrajectoryRecord(
        times=grid.record_times,
        dx=rec_dx,
        dv=rec_dv,
        sigma=grid.record_labels,
        switch_times=s.times[in_range],
        switch_labels=switch_labels,
        final=EnsembleState(t_end, X, V),
        sup_dx=float(sup_dx),
        mark_times=grid.mark_times,
        mark_velocities=v_marks,
    )
    return record, phis, grid.mark_times


def integrate(state0: EnsembleState, s: SwitchingSchedule, lib: GraphLibrary, w: CommunicationWeight,
              dt: float, t_end: float, sample_stride: int = 1) -> TrajectoryRecord:
    """RK4 trajectory from ``state0.t`` to ``t_end``; raises :class:`NonFiniteStateError` on blow-up."""
    record, _, _ = _run(state0, s, lib, w, dt, t_end, sample_stride, [], track_phi=False)
    return record


def integrate_transitions(state0: EnsembleState, s: SwitchingSchedule, lib: GraphLibrary, w: CommunicationWeight,
                          dt: float, marks: Sequence[float], sample_stride: int = 0,
                          t_end: float | None = None) -> tuple[TrajectoryRecord, list[TransitionMatrix]]:
    """Transition matrices between consecutive marks, starting from ``state0.t``.

    The augmented system ``(X, V, Phi)`` shares RK4 stages, so ``V(t2) = Phi V(t1)``
    holds to rounding.
    """
    marks = np.asarray(marks, dtype=float)
    if t_end is None:
        t_end = float(marks.max()) if marks.size else state0.t
    record, phis, mark_times = _run(state0, s, lib, w, dt, t_end, sample_stride, marks, track_phi=True)
    mats = [TransitionMatrix(float(mark_times[k]), float(mark_times[k + 1]), phis[k]) for k in range(len(phis))]
    return record, mats


def integrate_with_transition(state0: EnsembleState, s: SwitchingSchedule, lib: GraphLibrary, w: CommunicationWeight,
                              dt: float, t1: float, t2: float, sample_stride: int = 0) -> tuple[TrajectoryRecord, TransitionMatrix]:
    if t1 < state0.t or t2 < t1:
        raise DynamicsError(f"need state0.t <= t1 <= t2, got t1={t1}, t2={t2}")
    marks = [t for t in (t1, t2) if t > state0.t]
    record, mats = integrate_transitions(state0, s, lib, w, dt, marks, sample_stride, t_end=t2)
    if t2 == t1:
        return record, TransitionMatrix(t1, t2, np.eye(state0.n))
    return record, mats[-1]


def frozen_transition_oracle(L, dt: float, order: int) -> np.ndarray:
    """Truncated exponential series ``sum_{m<=order} (dt * (-L/N))^m / m!``.

    Exact transition for a constant generator; a test oracle, not a solver.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DynamicsError("oracle needs a square generator")
    if order < 1:
        raise DynamicsError("order must be at least 1")
    G = -dt * L / L.shape[0]
    term = np.eye(L.shape[0])
    total = term.copy()
    for m in range(1, order + 1):
        term = term @ G / m
        total = total + term
    return total


def write_trajectory_csv(record: TrajectoryRecord, path) -> None:
    """Columns ``time, DX, DV, sigma``; ``sigma`` is 1-based."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "DX", "DV", "sigma"])
        for t, dx, dv, k in zip(record.times, record.dx, record.dv, record.sigma):
            writer.writerow([format(float(t), ".17g"), format(float(dx), ".17g"), format(float(dv), ".17g"), int(k) + 1])


def write_final_state(state: EnsembleState, path) -> None:
    Path(path).write_text(json.dumps(state.to_dict(), indent=2) + "\n")
