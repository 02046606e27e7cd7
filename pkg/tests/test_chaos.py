import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.hermite_e import hermegauss, hermeval

from pgchaos.chaos import (
    MAX_TERMS,
    ChaosBasis,
    eval_basis,
    gauss_hermite,
    hermite_uni,
    lognormal_coeffs,
    multi_indices,
    norm_sq,
    term_count,
    triple_value,
)


def _tensor_rule(level, n):
    """Independent tensor Gauss-Hermite rule built straight from numpy."""
    x, w = hermegauss(level)
    w = w / w.sum()
    pts = np.array(list(product(x, repeat=n)))
    wts = np.array([np.prod(c) for c in product(w, repeat=n)])
    return pts, wts


def _he(alpha, pts):
    out = np.ones(len(pts))
    for m, a in enumerate(alpha):
        out *= hermeval(pts[:, m], [0] * a + [1])
    return out


@pytest.mark.parametrize("n, p, expected", [(2, 2, 6), (1, 0, 1), (3, 3, 20), (1, 4, 5), (4, 2, 15)])
def test_term_count(n, p, expected):
    assert term_count(n, p) == expected
    assert len(multi_indices(n, p)) == expected


def test_term_count_overflow():
    with pytest.raises(OverflowError):
        term_count(40, 40)
    assert term_count(2, 2) < MAX_TERMS


def test_graded_order_n2():
    idx = [tuple(a) for a in multi_indices(2, 2)]
    assert idx == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 4), p=st.integers(0, 4))
def test_indices_are_graded_and_unique(n, p):
    idx = multi_indices(n, p)
    degrees = idx.sum(axis=1)
    assert np.all(np.diff(degrees) >= 0)
    assert len({tuple(a) for a in idx}) == len(idx)
    assert degrees.max() == p


@pytest.mark.parametrize("k, x, expected", [(2, 3.0, 8.0), (0, 7.3, 1.0), (3, 2.0, 2.0), (1, -0.4, -0.4)])
def test_hermite_uni(k, x, expected):
    assert hermite_uni(k, x) == pytest.approx(expected)


@settings(max_examples=50, deadline=None)
@given(k=st.integers(0, 10), x=st.floats(-5, 5))
def test_hermite_uni_matches_numpy(k, x):
    assert hermite_uni(k, x) == pytest.approx(hermeval(x, [0] * k + [1]), rel=1e-12, abs=1e-9)


@pytest.mark.parametrize(
    "alpha, xi, expected",
    [((1, 1), (0.3, -2.0), -0.6), ((0, 0, 0), (4.0, 5.0, 6.0), 1.0), ((2, 0), (1.5, 9.9), 1.25)],
)
def test_eval_basis(alpha, xi, expected):
    assert eval_basis(alpha, xi) == pytest.approx(expected)


def test_eval_basis_dimension_mismatch():
    with pytest.raises(ValueError):
        eval_basis((1, 0), (1.0,))


@pytest.mark.parametrize("alpha, expected", [((2, 0), 2.0), ((1, 1), 1.0), ((3, 2), 12.0), ((0,), 1.0)])
def test_norm_sq(alpha, expected):
    assert norm_sq(alpha) == expected


def test_norm_sq_matches_quadrature():
    pts, wts = _tensor_rule(8, 2)
    assert wts @ _he((3, 2), pts) ** 2 == pytest.approx(12.0, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_orthogonality_against_quadrature(n, p):
    basis = ChaosBasis(n, p)
    pts, wts = _tensor_rule(p + 2, n)
    psi = basis.evaluate(pts)
    gram = (psi * wts[:, None]).T @ psi
    np.testing.assert_allclose(gram, np.diag(basis.norms), atol=1e-10 * basis.norms.max())


def test_evaluate_matches_scalar_path():
    basis = ChaosBasis(3, 3)
    rng = np.random.default_rng(0)
    xi = rng.standard_normal((7, 3))
    table = basis.evaluate(xi)
    for s in range(7):
        for j, alpha in enumerate(basis.indices):
            assert table[s, j] == pytest.approx(eval_basis(alpha, xi[s]), rel=1e-12, abs=1e-12)


def test_linear_triple_examples():
    b = ChaosBasis(2, 2)
    g = 0
    xg, xg2, one = b.index_of((1, 0)), b.index_of((2, 0)), b.index_of((0, 0))
    assert b.linear_triple(g, xg, xg2) == 2.0
    assert b.linear_triple(g, one, one) == 0.0
    assert b.linear_triple(g, one, xg) == 1.0


@pytest.mark.parametrize("n, p", [(1, 4), (2, 2), (2, 3), (3, 2)])
def test_triples_match_quadrature(n, p):
    basis = ChaosBasis(n, p)
    pts, wts = _tensor_rule(p + 3, n)
    psi = np.stack([_he(a, pts) for a in basis.indices], axis=1)
    for m in range(n):
        oracle = (psi * (wts * pts[:, m])[:, None]).T @ psi
        np.testing.assert_allclose(basis.triples[m], oracle, atol=1e-9)


def test_triple_value_direct():
    # <xi_0 * He_1(xi_0)He_1(xi_1) * He_2(xi_0)He_1(xi_1)> = 2! * 1! = 2
    assert triple_value(0, (1, 1), (2, 1)) == 2.0
    assert triple_value(1, (1, 1), (2, 1)) == 0.0


def test_block_density_decreases_with_order():
    d = [ChaosBasis(2, p).block_density() for p in (2, 3, 4)]
    assert d[0] > d[1] > d[2]
    assert d[0] == pytest.approx(0.5)


def test_index_of_unknown():
    with pytest.raises(KeyError):
        ChaosBasis(2, 2).index_of((3, 0))


@pytest.mark.parametrize(
    "mu, sigma, p, expected",
    [(0.0, 0.0, 2, (1.0, 0.0, 0.0)),
     (0.0, 0.5, 2, (1.1331484530668263, 0.5665742265334132, 0.1416435566333533))],
)
def test_lognormal_coeffs(mu, sigma, p, expected):
    np.testing.assert_allclose(lognormal_coeffs(mu, sigma, p), expected, rtol=1e-12)


@pytest.mark.parametrize("sigma", [0.1, 0.3, 0.5])
def test_lognormal_coeffs_against_projection(sigma):
    x, w = hermegauss(40)
    w = w / w.sum()
    c = lognormal_coeffs(0.0, sigma, 5)
    for k in range(6):
        proj = w @ (np.exp(sigma * x) * hermeval(x, [0] * k + [1])) / math.factorial(k)
        assert c[k] == pytest.approx(proj, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(sigma=st.floats(0, 1.0), mu=st.floats(-1, 1))
def test_lognormal_mean(mu, sigma):
    assert lognormal_coeffs(mu, sigma, 3)[0] == pytest.approx(math.exp(mu + sigma**2 / 2))


def test_gauss_hermite_integrates_polynomials():
    pts, wts = gauss_hermite(5, 2)
    assert wts.sum() == pytest.approx(1.0)
    assert wts @ pts[:, 0] ** 4 == pytest.approx(3.0)
    assert wts @ (pts[:, 0] ** 2 * pts[:, 1] ** 2) == pytest.approx(1.0)
