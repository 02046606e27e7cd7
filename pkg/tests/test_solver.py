import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from pgchaos import solver
from pgchaos.solver import SingularMatrixError, SparseTriplets, compress, factor, time_grid, transient


def test_compress_sums_duplicates():
    m = compress(SparseTriplets.from_entries(1, [(0, 0, 1.0), (0, 0, 1.0)]))
    assert m.nnz == 1 and m[0, 0] == 2.0


def test_compress_empty():
    m = compress(SparseTriplets.from_entries(3, []))
    assert m.shape == (3, 3) and m.nnz == 0


def test_compress_out_of_bounds():
    with pytest.raises(IndexError):
        compress(SparseTriplets.from_entries(2, [(2, 0, 1.0)]))


def test_compress_ladder():
    entries = [(0, 0, 1.0), (0, 0, 0.5), (1, 1, 0.5), (0, 1, -0.5), (1, 0, -0.5)]
    np.testing.assert_allclose(compress(SparseTriplets.from_entries(2, entries)).toarray(),
                               [[1.5, -0.5], [-0.5, 0.5]])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4), st.floats(-10, 10)), max_size=30))
def test_compress_matches_dense_accumulation(entries):
    dense = np.zeros((5, 5))
    for r, c, v in entries:
        dense[r, c] += v
    m = compress(SparseTriplets.from_entries(5, entries))
    np.testing.assert_allclose(m.toarray(), dense, atol=1e-12)
    assert m.has_canonical_format


def test_factor_identity():
    rhs = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(factor(sp.identity(3, format="csc")).solve(rhs), rhs)


def test_factor_ladder_dc():
    x = factor(sp.csc_matrix([[1.5, -0.5], [-0.5, 0.5]])).solve(np.array([1.2, -0.1]))
    np.testing.assert_allclose(x, [1.1, 0.9], rtol=1e-12)


def test_factor_singular():
    # node 1 is floating
    with pytest.raises(SingularMatrixError):
        factor(sp.csc_matrix([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SingularMatrixError):
        factor(sp.csc_matrix([[1.0, -1.0], [-1.0, 1.0]]))


def test_factor_counter():
    before = solver.factor_count
    factor(sp.identity(2, format="csc"))
    assert solver.factor_count == before + 1


def test_factor_multiple_rhs():
    m = sp.csc_matrix([[4.0, 1.0], [1.0, 3.0]])
    B = np.array([[1.0, 0.0], [2.0, 1.0]])
    np.testing.assert_allclose(m @ factor(m).solve(B), B, atol=1e-14)


def test_time_grid():
    np.testing.assert_allclose(time_grid(0.25, 1.0), [0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        time_grid(0.0, 1.0)
    with pytest.raises(ValueError):
        time_grid(1.0, 0.5)


def test_static_limit():
    G = sp.csc_matrix([[2.0, -1.0], [-1.0, 2.0]])
    C = sp.csc_matrix((2, 2))
    u = np.array([1.0, 0.5])
    _, X = transient(G, C, lambda t: u, 0.1, 1.0)
    np.testing.assert_allclose(X, np.tile(np.linalg.solve(G.toarray(), u), (11, 1)), rtol=1e-12)


def test_scalar_rc_first_step():
    one = sp.csc_matrix([[1.0]])
    _, X = transient(one, one, lambda t: np.array([1.0]), 0.1, 0.1, x0=np.zeros(1))
    assert X[1, 0] == pytest.approx(1.0 / 11.0, rel=1e-12)
    assert abs(X[1, 0] - (1 - math.exp(-0.1))) > 4e-3


def _rc_error(h):
    one = sp.csc_matrix([[1.0]])
    t, X = transient(one, one, lambda t: np.array([1.0]), h, 2.0, x0=np.zeros(1))
    return np.max(np.abs(X[:, 0] - (1 - np.exp(-t))))


def test_first_order_convergence():
    # frozen from the closed-form recurrence x_k = (h + x_{k-1}) / (1 + h)
    assert _rc_error(0.1) == pytest.approx(0.017663848258089754, rel=1e-10)
    assert _rc_error(0.05) == pytest.approx(0.009010041701558502, rel=1e-10)


def test_single_factorization_per_transient():
    G = sp.csc_matrix([[2.0, -1.0], [-1.0, 2.0]])
    C = sp.identity(2, format="csc")
    before = solver.factor_count
    transient(G, C, lambda t: np.array([1.0, 0.0]), 0.1, 1.0, x0=np.zeros(2))
    assert solver.factor_count - before == 1
    before = solver.factor_count
    transient(G, C, lambda t: np.array([1.0, 0.0]), 0.1, 1.0)
    assert solver.factor_count - before == 2  # DC plus stepping matrix


def test_array_and_callable_inputs_agree():
    G = sp.csc_matrix([[2.0, -1.0], [-1.0, 2.0]])
    C = sp.diags([1.0, 2.0], format="csc")
    t = time_grid(0.1, 1.0)
    U = np.stack([np.sin(t), np.cos(t)], axis=1)
    _, X1 = transient(G, C, U, 0.1, 1.0)
    _, X2 = transient(G, C, lambda s: np.array([np.sin(s), np.cos(s)]), 0.1, 1.0)
    np.testing.assert_allclose(X1, X2, rtol=1e-12)


def test_multi_rhs_equals_separate_runs():
    G = sp.csc_matrix([[2.0, -1.0], [-1.0, 2.0]])
    C = sp.diags([1.0, 2.0], format="csc")
    t = time_grid(0.1, 1.0)
    U = np.stack([np.stack([np.sin(t), np.cos(t)], 1), np.stack([t, 1 + 0 * t], 1)], axis=2)
    _, X = transient(G, C, U, 0.1, 1.0)
    for k in range(2):
        _, Xk = transient(G, C, U[:, :, k], 0.1, 1.0)
        np.testing.assert_allclose(X[:, :, k], Xk, rtol=1e-12, atol=1e-15)


def test_transient_wrong_length():
    G = sp.identity(1, format="csc")
    with pytest.raises(ValueError):
        transient(G, G, np.ones((3, 1)), 0.1, 1.0)
