import os
import subprocess
import sys

import numpy as np
import pytest

from csflock import kernels
from csflock.kernels import WEIGHT_ALGEBRAIC, WEIGHT_CONSTANT, numba_backend, numpy_backend

pytestmark = pytest.mark.skipif(numba_backend is None, reason="numba not installed")


def problem(seed, N=5, d=2, steps=400, track=True):
    rng = np.random.default_rng(seed)
    adj = (rng.random((3, N, N)) < 0.4).astype(float)
    label = rng.integers(0, 3, steps).astype(np.int64)
    h = rng.uniform(1e-3, 2e-2, steps)
    record = rng.random(steps) < 0.3
    mark = rng.random(steps) < 0.05
    return (rng.normal(size=(N, d)), rng.normal(size=(N, d)), adj, label, h, record, mark)


@pytest.mark.parametrize("kind,beta", [(WEIGHT_CONSTANT, 0.0), (WEIGHT_ALGEBRAIC, 0.9)])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_backends_agree(kind, beta, seed):
    args = problem(seed) + (kind, 1.3, beta, True)
    a = numpy_backend.run_rk4(*args)
    b = numba_backend.run_rk4(*args)
    for x, y in zip(a[:7], b[:7]):
        np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-13)
    assert a[7:] == b[7:]


def test_backends_flag_failure_identically():
    X0 = np.array([[0.0], [1.0]])
    V0 = np.array([[1e10], [-1e10]])
    adj = np.ones((1, 2, 2))
    steps = 50
    args = (X0, V0, adj, np.zeros(steps, dtype=np.int64), np.ones(steps), np.ones(steps, dtype=bool),
            np.zeros(steps, dtype=bool), WEIGHT_CONSTANT, 1e300, 0.0, False)
    a = numpy_backend.run_rk4(*args)
    b = numba_backend.run_rk4(*args)
    assert a[7] == b[7] == 1 and a[8] == b[8]
    np.testing.assert_array_equal(a[3], b[3])


@pytest.mark.parametrize("value,expected", [("1", "numpy"), ("true", "numpy"), ("0", "numba"), ("", "numba")])
def test_env_flag_selects_backend(value, expected):
    env = dict(os.environ, CSFLOCK_DISABLE_NUMBA=value)
    out = subprocess.run([sys.executable, "-c", "import csflock.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_active_backend_is_exported():
    assert kernels.BACKEND in ("numba", "numpy")
