import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from csflock.matrix_analysis import (
    MatrixError,
    contraction_bound,
    ergodicity_coefficient,
    frobenius_norm,
    is_scrambling,
    is_stochastic,
    matrix_product,
    read_matrix_csv,
    row_diameter,
    write_matrix_csv,
)
from helpers import random_stochastic, spanning_tree_matrix


def mu_loops(a):
    # triple loop straight from the definition
    n = len(a)
    return min(sum(min(a[i][k], a[j][k]) for k in range(n)) for i in range(n) for j in range(n))


def test_mu_examples():
    assert ergodicity_coefficient(np.eye(2)) == 0.0
    assert ergodicity_coefficient([[0.5, 0.5], [0.5, 0.5]]) == 1.0
    assert ergodicity_coefficient([[0.7, 0.3], [0.3, 0.7]]) == pytest.approx(0.6, abs=1e-15)


def test_mu_errors():
    with pytest.raises(MatrixError):
        ergodicity_coefficient([[1.0, -0.1], [0.0, 1.0]])
    with pytest.raises(MatrixError):
        ergodicity_coefficient(np.ones((2, 3)))


def test_mu_matches_loops(rng):
    for _ in range(50):
        a = rng.random((4, 4)) * (rng.random((4, 4)) > 0.4)
        assert ergodicity_coefficient(a) == pytest.approx(mu_loops(a.tolist()), abs=1e-14)


def test_scrambling_examples(rng):
    a = rng.random((4, 4)) * (rng.random((4, 4)) > 0.6)
    a[:, 2] = rng.uniform(0.1, 1.0, 4)
    assert is_scrambling(a)
    for n in range(2, 6):
        assert not is_scrambling(np.eye(n))


def test_stochastic_examples():
    assert is_stochastic([[0.5, 0.5], [0.25, 0.75]], tol=1e-12)
    assert not is_stochastic([[1, 1], [0, 1]])
    assert not is_stochastic(np.ones((2, 3)) / 3)


def test_row_diameter_examples(rng):
    assert row_diameter(np.ones((4, 3))) == 0.0
    assert row_diameter([[1, 0], [0, 1]]) == pytest.approx(math.sqrt(2))
    assert row_diameter([[1.0, 2.0]]) == 0.0
    m = rng.normal(size=(5, 3))
    brute = max(np.linalg.norm(m[i] - m[j]) for i, j in itertools.combinations(range(5), 2))
    assert row_diameter(m) == pytest.approx(brute, rel=1e-14)


def test_matrix_product(rng):
    a = random_stochastic(rng, 4)
    assert np.allclose(matrix_product([np.eye(4), a]), a)
    assert is_stochastic(matrix_product([a, random_stochastic(rng, 4)]))
    with pytest.raises(MatrixError):
        matrix_product([np.eye(2), np.eye(3)])
    with pytest.raises(MatrixError):
        matrix_product([])


def test_product_of_spanning_tree_matrices_scrambles(rng):
    for N in range(2, 7):
        for _ in range(20):
            prod = matrix_product([spanning_tree_matrix(rng, N) for _ in range(N - 1)])
            assert is_scrambling(prod)


def test_frobenius():
    assert frobenius_norm([[3.0, 4.0]]) == 5.0


def test_csv_round_trip(tmp_path, rng):
    m = rng.random((3, 3))
    path = tmp_path / "m.csv"
    write_matrix_csv(m, path)
    assert np.array_equal(read_matrix_csv(path), m)
    path.write_text("# comment\n1,2\n3\n")
    with pytest.raises(MatrixError):
        read_matrix_csv(path)


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_contraction_property(n, d, seed):
    rng = np.random.default_rng(seed)
    a = random_stochastic(rng, n, zero_frac=rng.random())
    z = rng.normal(size=(n, d)) * 10 ** rng.uniform(-3, 3)
    b = rng.normal(size=(n, d)) * 10 ** rng.uniform(-6, 1)
    assert row_diameter(a @ z + b) <= contraction_bound(a, z, b) * (1 + 1e-12) + 1e-300


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(0, 10, allow_subnormal=False)))
def test_mu_bounds(a):
    mu = ergodicity_coefficient(a)
    assert 0.0 <= mu <= a.sum(axis=1).min() + 1e-12
    assert (mu > 0) == is_scrambling(a)
