import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from csflock.dynamics import (
    CommunicationWeight,
    DynamicsError,
    EnsembleState,
    NonFiniteStateError,
    assemble_laplacian,
    diameter,
    frozen_transition_oracle,
    integrate,
    integrate_transitions,
    integrate_with_transition,
    phi_eval,
    sample_initial_state,
    write_final_state,
    write_trajectory_csv,
)
from csflock.graph import Digraph, GraphLibrary
from csflock.matrix_analysis import is_stochastic
from csflock.switching import IncrementDistribution, SwitchingSchedule, sample_schedule
from helpers import random_library

CONST = CommunicationWeight("constant", 1.0)


def complete_library(N):
    edges = frozenset((j, i) for i in range(N) for j in range(N))
    return GraphLibrary((Digraph(N, edges),), (1.0,))


def one_interval(t_end):
    return SwitchingSchedule([0.0, t_end], [0])


def test_phi_examples():
    assert phi_eval(CommunicationWeight("constant", 2.5), 7.0) == 2.5
    assert phi_eval(CommunicationWeight("algebraic", 3.0, 0.7), 0.0) == 3.0
    assert phi_eval(CommunicationWeight("algebraic", 1.0, 2.0), 1.0) == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(DynamicsError):
        phi_eval(CONST, -1.0)


def test_weight_validation_and_lipschitz():
    with pytest.raises(DynamicsError):
        CommunicationWeight("constant", 0.0)
    with pytest.raises(DynamicsError):
        CommunicationWeight("gaussian", 1.0)
    w = CommunicationWeight("algebraic", 2.0, 1.5)
    r = np.linspace(0, 5, 200001)
    slope = np.abs(np.diff(w(r)) / np.diff(r)).max()
    assert slope <= w.lipschitz_constant * (1 + 1e-6)
    assert slope >= w.lipschitz_constant * (1 - 1e-4)
    assert np.all(np.diff(w(r)) <= 0)


def test_laplacian_examples(rng):
    lib1 = GraphLibrary((Digraph(1, frozenset({(0, 0)})),), (1.0,))
    assert np.array_equal(assemble_laplacian(lib1, 0, np.zeros((1, 2)), CONST), [[0.0]])
    N, kappa = 4, 1.7
    L = assemble_laplacian(complete_library(N), 0, np.zeros((N, 3)), CommunicationWeight("constant", kappa))
    assert np.allclose(L, N * kappa * np.eye(N) - kappa * np.ones((N, N)))
    lib = random_library(rng, 6, K=2)
    w = CommunicationWeight("algebraic", 1.3, 0.8)
    for k in range(2):
        assert np.allclose(assemble_laplacian(lib, k, rng.normal(size=(6, 2)), w).sum(axis=1), 0.0, atol=1e-14)
    with pytest.raises(DynamicsError):
        assemble_laplacian(lib, 2, np.zeros((6, 2)), w)


def test_diameter_examples(rng):
    assert diameter(np.ones((3, 2))) == 0.0
    assert diameter([[0.0, 0.0], [3.0, 0.0]]) == 3.0


def test_aligned_velocities_translate():
    lib = complete_library(3)
    X0 = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    v = np.array([0.3, -0.2])
    rec = integrate(EnsembleState(0.0, X0, np.tile(v, (3, 1))), one_interval(2.0), lib,
                    CommunicationWeight("algebraic", 1.0, 1.0), 1e-2, 2.0)
    assert np.all(rec.dv == 0.0)
    assert np.allclose(rec.final.X, X0 + 2.0 * v, atol=1e-13)


def test_two_particle_closed_form():
    lib = complete_library(2)
    state = EnsembleState(0.0, [[0.0], [1.0]], [[1.0], [-0.5]])
    rec = integrate(state, one_interval(1.0), lib, CONST, 1e-3, 1.0)
    assert rec.dv[-1] == pytest.approx(1.5 * math.exp(-1.0), rel=1e-12)
    assert rec.dv_at(1.0) == rec.dv[-1]


def piecewise_oracle(state0, sched, lib, w, t_end):
    """High-accuracy reference: DOP853 restarted at every switching instant."""
    N, d = state0.X.shape
    adj = lib.adjacency_stack()

    def rhs(_, y, chi):
        X = y[:N * d].reshape(N, d)
        V = y[N * d:].reshape(N, d)
        dist = np.sqrt(((X[None] - X[:, None]) ** 2).sum(axis=2))
        a = chi * w(dist)
        np.fill_diagonal(a, 0.0)
        dV = (a @ V - a.sum(axis=1)[:, None] * V) / N
        return np.concatenate([V.ravel(), dV.ravel()])

    y = np.concatenate([state0.X.ravel(), state0.V.ravel()])
    for k, lab in enumerate(sched.labels):
        t0, t1 = sched.times[k], min(sched.times[k + 1], t_end)
        if t1 <= t0:
            break
        y = solve_ivp(rhs, (t0, t1), y, method="DOP853", rtol=1e-12, atol=1e-14, args=(adj[lab],)).y[:, -1]
    return y[:N * d].reshape(N, d), y[N * d:].reshape(N, d)


@pytest.mark.parametrize("kind,beta", [("constant", 0.0), ("algebraic", 0.6)])
def test_against_adaptive_oracle(kind, beta):
    rng = np.random.default_rng(3)
    lib = random_library(rng, 5, K=3)
    w = CommunicationWeight(kind, 1.4, beta)
    state = sample_initial_state(5, 2, seed=11)
    sched = sample_schedule(lib, IncrementDistribution.uniform(0.05, 0.2), 20, seed=4)
    T = float(sched.times[-1])
    rec = integrate(state, sched, lib, w, 1e-3, T)
    X, V = piecewise_oracle(state, sched, lib, w, T)
    assert np.allclose(rec.final.X, X, atol=1e-9)
    assert np.allclose(rec.final.V, V, atol=1e-9)


def test_constant_weight_matches_matrix_exponential():
    rng = np.random.default_rng(8)
    lib = random_library(rng, 4, K=2)
    state = sample_initial_state(4, 3, seed=2)
    sched = sample_schedule(lib, IncrementDistribution.uniform(0.1, 0.3), 10, seed=6)
    T = float(sched.times[-1])
    rec = integrate(state, sched, lib, CONST, 5e-3, T)
    V = state.V
    for k, lab in enumerate(sched.labels):
        L = assemble_laplacian(lib, int(lab), state.X, CONST)
        V = expm(-(sched.times[k + 1] - sched.times[k]) * L / 4) @ V
    assert np.allclose(rec.final.V, V, atol=1e-10)


def test_switching_instants_are_sampled():
    lib = complete_library(3)
    sched = SwitchingSchedule([0.0, 0.123, 0.5, 0.777], [0, 0, 0])
    rec = integrate(sample_initial_state(3, 2, 0), sched, lib, CONST, 0.1, 0.777, sample_stride=0)
    assert np.allclose(rec.times, [0.0, 0.123, 0.5, 0.777])
    for t in sched.times:
        rec.dv_at(t)


def test_integrate_errors():
    lib = complete_library(2)
    state = EnsembleState(0.0, [[0.0], [1.0]], [[1.0], [0.0]])
    with pytest.raises(DynamicsError):
        integrate(state, one_interval(1.0), lib, CONST, 1e-2, 2.0)
    with pytest.raises(DynamicsError):
        integrate(state, one_interval(1.0), lib, CONST, 0.0, 1.0)
    with pytest.raises(DynamicsError):
        integrate(state, one_interval(1.0), complete_library(3), CONST, 1e-2, 1.0)


def test_non_finite_state_detected():
    lib = complete_library(2)
    state = EnsembleState(0.0, [[0.0], [1.0]], [[1e10], [-1e10]])
    with pytest.raises(NonFiniteStateError):
        integrate(state, one_interval(10.0), lib, CommunicationWeight("constant", 1e300), 1.0, 10.0)


def test_transition_identity_and_stochastic(rng):
    lib = random_library(rng, 5, K=2)
    state = sample_initial_state(5, 2, 1)
    sched = sample_schedule(lib, IncrementDistribution.uniform(0.1, 0.2), 30, seed=1)
    _, T = integrate_with_transition(state, sched, lib, CONST, 1e-2, 0.7, 0.7)
    assert np.array_equal(T.phi, np.eye(5))
    w = CommunicationWeight("algebraic", 2.0, 0.5)
    rec, mats = integrate_transitions(state, sched, lib, w, 1e-2, [0.5, 1.3, 2.9])
    assert [(m.t1, m.t2) for m in mats] == [(0.0, 0.5), (0.5, 1.3), (1.3, 2.9)]
    for m in mats:
        assert is_stochastic(m.phi, 1e-12)
        V1, V2 = rec.velocity_at_mark(m.t1), rec.velocity_at_mark(m.t2)
        assert np.linalg.norm(V2 - m.phi @ V1) <= 1e-12 * np.linalg.norm(V1)


def test_oracle_examples(rng):
    assert np.array_equal(frozen_transition_oracle(np.zeros((3, 3)), 0.1, 5), np.eye(3))
    lib = random_library(rng, 4, K=1)
    L = assemble_laplacian(lib, 0, rng.normal(size=(4, 2)), CONST)
    c, dt = 0.7, 0.05
    shifted = frozen_transition_oracle(L - c * 4 * np.eye(4), dt, 20)
    assert np.allclose(shifted, math.exp(c * dt) * frozen_transition_oracle(L, dt, 20), atol=1e-10, rtol=0)


def test_oracle_matches_integrated_transition():
    rng = np.random.default_rng(5)
    lib = GraphLibrary((Digraph.from_adjacency((rng.random((4, 4)) < 0.5) | np.eye(4, dtype=bool)),), (1.0,))
    state = EnsembleState(0.0, np.zeros((4, 2)), np.zeros((4, 2)))
    L = assemble_laplacian(lib, 0, state.X, CONST)
    errs = []
    for dt in (0.1, 0.05, 0.025):
        _, T = integrate_with_transition(state, one_interval(1.0), lib, CONST, dt, 0.0, dt)
        assert np.allclose(T.phi, frozen_transition_oracle(L, dt, 20), atol=1e-12)
        errs.append(np.linalg.norm(T.phi - frozen_transition_oracle(L, dt, 1)))
    # first-order truncation leaves an O(dt^2) gap
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(1, 3), st.integers(0, 2**31))
def test_velocity_diameter_never_grows(N, d, seed):
    rng = np.random.default_rng(seed)
    lib = random_library(rng, N)
    w = CommunicationWeight("algebraic", float(rng.uniform(0.5, 3.0)), float(rng.uniform(0, 2)))
    sched = sample_schedule(lib, IncrementDistribution.uniform(0.05, 0.3), 15, seed=seed)
    rec = integrate(sample_initial_state(N, d, seed), sched, lib, w, 1e-2, sched.end)
    assert np.all(np.diff(rec.dv) <= 1e-9)


def test_writers(tmp_path):
    lib = complete_library(2)
    state = EnsembleState(0.0, [[0.0], [1.0]], [[1.0], [0.0]])
    rec = integrate(state, one_interval(0.1), lib, CONST, 0.05, 0.1)
    write_trajectory_csv(rec, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "time,DX,DV,sigma" and len(lines) == 4 and lines[-1].endswith(",1")
    write_final_state(rec.final, tmp_path / "f.json")
    doc = json.loads((tmp_path / "f.json").read_text())
    assert np.allclose(doc["V"], rec.final.V)
